"""Sweeps and studies: graining surfaces, urn histories, second-law runs.

Every study returns a SweepResult: an axis grid, one entropy report per
feasible grid point, and a provenance block (model config, seed, count,
package version, config digest) sufficient to reproduce the run bit for bit.
Monte Carlo sweeps draw one trajectory ensemble and re-bin it at every grid
point, so comparisons across the grid share samples and coarsening
monotonicity holds sample-exactly, not just in expectation.

CSV artifacts carry a single leading ``#`` provenance line, then a header
row and data rows (comma-separated, ``.`` decimal, LF endings).  Floats are
written with repr(), i.e. shortest round-trip form, so identical runs give
byte-identical files.  Worker count is deliberately excluded from
provenance: it cannot change any result.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from histent import __version__
from histent.entropy import EntropyReport, entropy_report
from histent.errors import ConfigError
from histent.histories import (
    CONTINUUM,
    DISCRETE,
    CoarseGraining,
    HistoryDistribution,
    SpatialPartition,
    StateSpace,
    TimeGrid,
    uniform_graining,
)
from histent.maxent import verify_inequalities
from histent.montecarlo import (
    TrajectoryEnsemble,
    entropy_with_error,
    estimate_distribution,
    sample_random_walk,
    sample_trajectories,
)
from histent.processes import (
    BrownianParams,
    InitialCondition,
    MarkovKernel,
    diffusion_kernel,
    exact_history_probs,
    random_walk_kernel,
    urn_jstep_matrix,
    urn_kernel,
    urn_space,
)

__all__ = [
    "SweepPoint",
    "SweepResult",
    "config_digest",
    "default_model_config",
    "default_axes",
    "sweep_entropy_vs_graining",
    "urn_two_time_surface",
    "urn_multi_time_curves",
    "second_law_translation",
    "urn_second_law_run",
    "random_markov_instance",
    "run_self_checks",
]


def config_digest(obj) -> str:
    """sha256 of the canonical JSON form of a config object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True, eq=False)
class SweepPoint:
    """One grid point: axis values plus its entropy report (None if infeasible)."""

    axes: tuple
    report: EntropyReport | None
    ci: tuple[float, float] | None = None
    method: str = "exact"
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.report is not None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """An axis grid of entropy reports plus reproducibility provenance."""

    axis_names: tuple[str, ...]
    points: tuple[SweepPoint, ...]
    method: str
    provenance: dict = field(default_factory=dict)

    def point(self, *axes) -> SweepPoint:
        for pt in self.points:
            if pt.axes == tuple(axes):
                return pt
        raise KeyError(f"no grid point at {axes}")

    def value_grid(self, attr: str = "S_hs") -> dict:
        """{axes: value} over feasible points, for one report attribute."""
        return {
            pt.axes: getattr(pt.report, attr)
            for pt in self.points
            if pt.feasible
        }

    def to_csv(self) -> str:
        prov = dict(self.provenance)
        prov["version"] = __version__
        lines = ["# " + json.dumps(prov, sort_keys=True, separators=(",", ":"))]
        header = list(self.axis_names) + [
            "S_hs_bits", "S_dimensionless_bits", "D_LP_bits",
            "ci_lo", "ci_hi", "method",
        ]
        lines.append(",".join(header))
        for pt in self.points:
            row = [_fmt(a) for a in pt.axes]
            if pt.feasible:
                row += [
                    _fmt(pt.report.S_hs),
                    _fmt(pt.report.S_hs_dimensionless),
                    _fmt(pt.report.D_LP),
                    _fmt(pt.ci[0]) if pt.ci else "",
                    _fmt(pt.ci[1]) if pt.ci else "",
                    pt.method,
                ]
            else:
                row += ["", "", "", "", "", "infeasible"]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        prov = dict(self.provenance)
        prov["version"] = __version__
        points = []
        for pt in self.points:
            entry = {
                "axes": dict(zip(self.axis_names, [
                    int(a) if isinstance(a, (int, np.integer)) else float(a)
                    for a in pt.axes
                ])),
                "method": pt.method if pt.feasible else "infeasible",
            }
            if pt.feasible:
                entry["report"] = pt.report.to_dict()
                if pt.ci:
                    entry["ci"] = [pt.ci[0], pt.ci[1]]
            if pt.note:
                entry["note"] = pt.note
            points.append(entry)
        return json.dumps(
            {"axis_names": list(self.axis_names), "method": self.method,
             "provenance": prov, "points": points},
            sort_keys=True, indent=2,
        ) + "\n"

    def write(self, path, fmt: str = "csv") -> None:
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Graining sweeps (Monte Carlo)
# ---------------------------------------------------------------------------

_MODEL_DEFAULTS = {
    # a walker on 256 sites taking 128 unit steps from the origin
    "rw": {"V": 256, "N": 128, "eta": 1.0, "count": 100_000, "seed": 0, "x0": 0},
    # spreading with D=1 over a length-20 window, 1024 steps of 0.01
    "diffusion": {"V": 20.0, "cells": 200, "N": 1024, "eta": 0.01, "D": 1.0,
                  "count": 10_000, "seed": 0},
    # dissipation 2*Gamma=1, noise a=1, mass 1, started at rest at the center
    "brownian": {"V": 20.0, "cells": 200, "N": 1024, "eta": 0.01, "Gamma": 0.5,
                 "a": 1.0, "m": 1.0, "x0": 0.0, "p0": 0.0, "count": 10_000,
                 "seed": 0},
}

_KNOWN_MODELS = tuple(_MODEL_DEFAULTS)


def default_model_config(model: str) -> dict:
    if model not in _MODEL_DEFAULTS:
        raise ConfigError(f"unknown model {model!r}; choose from {_KNOWN_MODELS}")
    return dict(_MODEL_DEFAULTS[model])


def default_axes(model: str, config: dict) -> tuple[list, list]:
    """Log-spaced (dx_list, dt_list) matching each model's feasible divisors."""
    if model == "rw":
        V, N = config["V"], config["N"]
        dx = [2**k for k in range(int(math.log2(V)) + 1)]
        dt = [2**k for k in range(int(math.log2(N)) + 1)]
        return dx, dt
    cells, V, N, eta = config["cells"], config["V"], config["N"], config["eta"]
    width = V / cells
    dx = [d * width for d in range(1, cells + 1) if cells % d == 0]
    dt = [eta * 2**k for k in range(int(math.log2(N)) + 1)]
    return dx, dt


def _merge_config(model: str, config: dict | None) -> dict:
    merged = default_model_config(model)
    for key, val in (config or {}).items():
        if key not in merged:
            raise ConfigError(f"unknown {model} config key {key!r}")
        merged[key] = type(merged[key])(val)
    return merged


def _build_ensemble(model: str, cfg: dict, workers: int) -> tuple[TrajectoryEnsemble, StateSpace]:
    if model == "rw":
        space = StateSpace(DISCRETE, float(cfg["V"]), cfg["V"])
        grid = TimeGrid(N=cfg["N"], eta=cfg["eta"], coarse_times=(cfg["N"],))
        rho0 = InitialCondition.point_mass(cfg["x0"], cfg["V"])
        ens = sample_random_walk(space, rho0, grid, cfg["count"], cfg["seed"],
                                 workers=workers)
        return ens, space
    if model == "diffusion":
        space = StateSpace(CONTINUUM, cfg["V"], cfg["cells"])
        grid = TimeGrid(N=cfg["N"], eta=cfg["eta"], coarse_times=(cfg["N"],))
        part = SpatialPartition(space.cell_width, cfg["cells"], cfg["cells"])
        kernel = diffusion_kernel(cfg["D"], cfg["eta"], part)
        rho0 = InitialCondition.point_mass(cfg["cells"] // 2, cfg["cells"])
        ens = sample_trajectories(kernel, rho0, grid, cfg["count"], cfg["seed"],
                                  workers=workers)
        return ens, space
    if model == "brownian":
        space = StateSpace(CONTINUUM, cfg["V"], cfg["cells"])
        grid = TimeGrid(N=cfg["N"], eta=cfg["eta"], coarse_times=(cfg["N"],))
        params = BrownianParams(Gamma=cfg["Gamma"], a=cfg["a"], m=cfg["m"],
                                x0=cfg["x0"], p0=cfg["p0"])
        ens = sample_trajectories(params, None, grid, cfg["count"], cfg["seed"],
                                  space=space, workers=workers)
        return ens, space
    raise ConfigError(f"unknown model {model!r}")


def sweep_entropy_vs_graining(
    model: str = "rw",
    config: dict | None = None,
    dx_list=None,
    dt_list=None,
    workers: int = 1,
    resamples: int = 100,
) -> SweepResult:
    """Entropy of the coarse-graining over a (dx, dt) grid, one shared ensemble.

    Each point re-bins the same fine-grained trajectories; infeasible
    (non-divisible) grid points are marked, not fatal.  Reports carry both
    raw S_hs and the dimensionless form, so lattice and continuum figures
    read off their preferred column.  ``resamples < 2`` skips bootstrap CIs.
    """
    cfg = _merge_config(model, config)
    auto_dx, auto_dt = default_axes(model, cfg)
    dx_list = list(auto_dx if dx_list is None else dx_list)
    dt_list = list(auto_dt if dt_list is None else dt_list)
    ensemble, space = _build_ensemble(model, cfg, workers)
    N, eta = cfg["N"], cfg["eta"]
    points = []
    for dx, dt in product(dx_list, dt_list):
        try:
            cg = uniform_graining(space, N, eta, dx, dt)
        except (ValueError, ConfigError) as exc:
            points.append(SweepPoint(axes=(dx, dt), report=None,
                                     method="infeasible", note=str(exc)))
            continue
        hd = estimate_distribution(ensemble, cg, space)
        report = entropy_report(hd)
        ci = None
        if resamples >= 2:
            est = entropy_with_error(ensemble, cg, resamples=resamples, space=space)
            ci = (est.ci_low, est.ci_high)
        points.append(SweepPoint(axes=(dx, dt), report=report, ci=ci,
                                 method="monte-carlo"))
    return SweepResult(
        axis_names=("dx", "dt"),
        points=tuple(points),
        method="monte-carlo",
        provenance={"model": model, "config": cfg,
                    "config_sha256": config_digest({"model": model, **cfg}),
                    "seed": cfg["seed"], "count": cfg["count"]},
    )


# ---------------------------------------------------------------------------
# Urn studies (exact)
# ---------------------------------------------------------------------------

def _urn_log_binom(R: int) -> np.ndarray:
    return np.array([math.log2(math.comb(2 * R, n)) for n in range(2 * R + 1)])


def _urn_distribution(R: int, n0: int, times: tuple[int, ...], N: int) -> HistoryDistribution:
    """Exact joint law of the ball count at the given times, with volumes.

    ``N`` only sets the (N − n)·2R-bit constant from the unobserved times;
    the times themselves may exceed it (the offset convention is exactly
    that: a constant).
    """
    size = 2 * R + 1
    logb = _urn_log_binom(R)
    prev = np.zeros(size)
    prev[n0] = 1.0
    joint = {(): 1.0}
    marg = {(): prev}
    prev_t = 0
    for t in times:
        gap = urn_jstep_matrix(R, t - prev_t)
        nj: dict[tuple[int, ...], float] = {}
        nm: dict[tuple[int, ...], np.ndarray] = {}
        for prefix, vec in marg.items():
            out = gap @ vec
            for n in range(size):
                if out[n] > 0.0:
                    masked = np.zeros(size)
                    masked[n] = out[n]
                    nm[prefix + (n,)] = masked
                    nj[prefix + (n,)] = out[n]
        joint, marg, prev_t = nj, nm, t
    labels = sorted(joint)
    probs = np.array([joint[l] for l in labels])
    n = len(times)
    vols = np.array([sum(logb[b] for b in l) + (N - n) * 2 * R for l in labels])
    return HistoryDistribution(
        labels=tuple(labels), probs=probs, log2_volumes=vols,
        log2_total=N * 2 * R,
    )


def urn_two_time_surface(
    R: int = 15,
    n0: int | None = None,
    t1_list=None,
    m_list=None,
    N: int = 3,
) -> SweepResult:
    """Exact S_hs(t1, m) for ball counts observed at times t1 and t1 + m.

    Defaults: 2R = 30 balls all starting in one urn, t1 over 0..4R and the
    separation m over 1..2R.  N fixes only the constant offset from the
    unobserved times.
    """
    n0 = 2 * R if n0 is None else n0
    t1_list = list(range(0, 4 * R + 1)) if t1_list is None else list(t1_list)
    m_list = list(range(1, 2 * R + 1)) if m_list is None else list(m_list)
    points = []
    for t1, m in product(t1_list, m_list):
        hd = _urn_distribution(R, n0, (t1, t1 + m), N)
        points.append(SweepPoint(axes=(t1, m), report=entropy_report(hd)))
    cfg = {"R": R, "n0": n0, "N": N}
    return SweepResult(
        axis_names=("t1", "m"), points=tuple(points), method="exact",
        provenance={"model": "urn", "config": cfg,
                    "config_sha256": config_digest({"model": "urn", **cfg})},
    )


def urn_multi_time_curves(
    R: int = 15,
    n0: int | None = None,
    t1_list=None,
    ks=(1, 2, 3),
    N: int = 3,
) -> SweepResult:
    """Exact S_hs vs t1 for k-time histories at unit separations, k in ``ks``."""
    n0 = 2 * R if n0 is None else n0
    t1_list = list(range(0, 4 * R + 1)) if t1_list is None else list(t1_list)
    points = []
    for t1, k in product(t1_list, ks):
        times = tuple(t1 + i for i in range(k))
        hd = _urn_distribution(R, n0, times, N)
        points.append(SweepPoint(axes=(t1, k), report=entropy_report(hd)))
    cfg = {"R": R, "n0": n0, "N": N, "ks": list(ks)}
    return SweepResult(
        axis_names=("t1", "k"), points=tuple(points), method="exact",
        provenance={"model": "urn", "config": cfg,
                    "config_sha256": config_digest({"model": "urn", **cfg})},
    )


# ---------------------------------------------------------------------------
# Second law for histories: time translation
# ---------------------------------------------------------------------------

def second_law_translation(
    kernel: MarkovKernel,
    rho0: InitialCondition,
    cg: CoarseGraining,
    T_list,
    space: StateSpace | None = None,
) -> SweepResult:
    """S_hs of the same alternatives with every coarse time shifted by T.

    Translated times must stay within the grid's N fine times; a shift that
    leaves the grid is a config error.  T = 0 is the untranslated baseline.
    """
    grid = cg.grid
    points = []
    for T in T_list:
        times = tuple(t + int(T) for t in grid.coarse_times)
        if times[-1] > grid.N:
            raise ConfigError(
                f"translation T={T} pushes time {times[-1]} past the grid end {grid.N}"
            )
        shifted = CoarseGraining(
            TimeGrid(N=grid.N, eta=grid.eta, coarse_times=times),
            cg.partitions,
        )
        hd = exact_history_probs(kernel, rho0, shifted, space=space)
        points.append(SweepPoint(axes=(int(T),), report=entropy_report(hd)))
    return SweepResult(
        axis_names=("T",), points=tuple(points), method="exact",
        provenance={"model": "translation",
                    "config": {"times": list(grid.coarse_times),
                               "T": [int(T) for T in T_list]}},
    )


def urn_second_law_run(
    R: int = 15,
    n0: int | None = None,
    base_times: tuple[int, ...] = (1, 2),
    T_list=None,
) -> SweepResult:
    """Translation run for the urn: count observed at base_times + T.

    Exact j-step gaps are used throughout; the grid is sized to hold the
    largest translation.
    """
    n0 = 2 * R if n0 is None else n0
    T_list = list(range(0, 4 * R + 1)) if T_list is None else list(T_list)
    space = urn_space(R)
    N = max(base_times) + max(T_list)
    grid = TimeGrid(N=N, eta=1.0, coarse_times=tuple(base_times))
    part = SpatialPartition(1.0, 2 * R + 1, 2 * R + 1)
    cg = CoarseGraining(grid, [part] * len(base_times))
    kernel = urn_kernel(R)
    rho0 = InitialCondition.point_mass(n0, 2 * R + 1)
    result = second_law_translation(kernel, rho0, cg, T_list, space=space)
    cfg = {"R": R, "n0": n0, "base_times": list(base_times),
           "T": [int(T) for T in T_list]}
    return SweepResult(
        axis_names=result.axis_names, points=result.points, method="exact",
        provenance={"model": "urn-translation", "config": cfg,
                    "config_sha256": config_digest({"model": "urn-translation", **cfg})},
    )


# ---------------------------------------------------------------------------
# Random small instances (shared by the CLI and the invariant suites)
# ---------------------------------------------------------------------------

def random_markov_instance(
    seed: int,
    cells: int | None = None,
    N: int | None = None,
    max_cells: int = 6,
    max_N: int = 4,
):
    """A random kernel, start density, and graining on a small lattice.

    Returns (kernel, rho0, cg, space).  Kernel columns are Dirichlet(1)
    draws; the graining picks a random non-empty subset of times and a
    random divisor bin width per time.
    """
    rng = np.random.default_rng(seed)
    cells = int(rng.integers(2, max_cells + 1)) if cells is None else cells
    N = int(rng.integers(1, max_N + 1)) if N is None else N
    matrix = rng.gamma(1.0, size=(cells, cells))
    matrix /= matrix.sum(axis=0, keepdims=True)
    kernel = MarkovKernel(matrix, dt=1.0)
    rho0 = InitialCondition(rng.dirichlet(np.ones(cells)))
    n_times = int(rng.integers(1, N + 1))
    times = tuple(sorted(rng.choice(np.arange(1, N + 1), size=n_times, replace=False).tolist()))
    divisors = [d for d in range(1, cells + 1) if cells % d == 0]
    parts = []
    for _ in times:
        cpb = int(rng.choice(divisors))
        parts.append(SpatialPartition(float(cpb), cells // cpb, cells))
    space = StateSpace(DISCRETE, float(cells), cells)
    grid = TimeGrid(N=N, eta=1.0, coarse_times=times)
    cg = CoarseGraining(grid, parts)
    return kernel, rho0, cg, space


# ---------------------------------------------------------------------------
# Self-checks (CLI `check` subcommand)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def run_self_checks() -> list[CheckResult]:
    """Fast invariant suite over small exact instances."""
    from histent.entropy import history_space_entropy
    from histent.histories import coarsen

    checks: list[CheckResult] = []

    # walk anchors: finest graining N bits, trivial graining N log2 V bits
    space = StateSpace(DISCRETE, 16.0, 16)
    kernel = random_walk_kernel(space)
    rho0 = InitialCondition.point_mass(0, 16)
    fine = uniform_graining(space, 8, 1.0, 1.0, 1.0)
    triv = uniform_graining(space, 8, 1.0, 16.0, 8.0)
    s_fine = history_space_entropy(exact_history_probs(kernel, rho0, fine, space))
    s_triv = history_space_entropy(exact_history_probs(kernel, rho0, triv, space))
    checks.append(CheckResult(
        "walk-anchors", abs(s_fine - 8.0) < 1e-9 and abs(s_triv - 32.0) < 1e-9,
        f"finest {s_fine:.12f} bits (want 8), trivial {s_triv:.12f} bits (want 32)",
    ))

    # exact urn law against matrix powers at a modest size
    R = 4
    m_exact = urn_jstep_matrix(R, 7)
    m_power = np.linalg.matrix_power(urn_kernel(R).matrix, 7)
    err = float(np.max(np.abs(m_exact - m_power)))
    checks.append(CheckResult("urn-jstep", err < 1e-9, f"max |Δp| = {err:.2e}"))

    # monotonicity under both coarsening moves on random instances
    worst = 0.0
    for seed in range(8):
        kern, r0, cg, sp = random_markov_instance(seed, cells=4, N=4)
        base = history_space_entropy(exact_history_probs(kern, r0, cg, sp))
        for mode, factor in (("merge-bins", 2), ("drop-times", 2)):
            try:
                coarse = coarsen(cg, mode, factor)
            except ValueError:
                continue
            s2 = history_space_entropy(exact_history_probs(kern, r0, coarse, sp))
            worst = min(worst, s2 - base)
    checks.append(CheckResult(
        "coarsening-monotone", worst >= -1e-9, f"worst slack {worst:.2e} bits",
    ))

    # reconstruction inequality chain on random instances
    ok, detail = True, ""
    for seed in range(5):
        kern, r0, cg, sp = random_markov_instance(100 + seed, cells=4, N=3)
        rep = verify_inequalities(kern, cg, r0)
        if not rep.ok:
            ok, detail = False, f"seed {100 + seed}: slacks {rep.slacks}"
            break
    checks.append(CheckResult(
        "inequality-chain", ok, detail or "S_ic <= S_dc <= S_hs on 5 instances",
    ))
    return checks
