"""Command-line driver: sweeps, urn studies, translation runs, self-checks.

Subcommands
-----------
sweep       entropy-vs-graining surface for rw | diffusion | brownian
urn         exact urn studies (two-time surface, multi-time curves)
translate   second-law translation run (urn counts at shifted times)
maxent      reconstruction entropies S_ic <= S_dc <= S_hs on a seeded instance
check       fast invariant self-checks

Configuration comes from an optional JSON file (first positional argument)
with flags taking precedence (a warning notes each override).  The seed
resolves as: --seed flag, then the config file, then the HISTENT_SEED
environment variable, then the model default.  Exit codes: 0 success,
1 invariant violation, 2 configuration error.  Progress goes to stderr;
stdout stays machine-readable (used only with --stdout).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from histent import __version__
from histent.errors import ConfigError, ConvergenceError, HistentError, InvariantViolation
from histent.experiments import (
    config_digest,
    default_model_config,
    random_markov_instance,
    run_self_checks,
    sweep_entropy_vs_graining,
    urn_multi_time_curves,
    urn_second_law_run,
    urn_two_time_surface,
)
from histent.maxent import verify_inequalities

__all__ = ["RunConfig", "parse_config", "execute", "main"]

_SWEEP_KEYS = {"model", "dx", "dt", "count", "seed", "resamples"}
_URN_KEYS = {"figure", "R", "n0", "N", "t1", "m", "ks"}
_TRANSLATE_KEYS = {"R", "n0", "base_times", "T"}
_MAXENT_KEYS = {"V", "N", "seed"}
_FIGURE_MODELS = {1: "rw", 2: "diffusion", 3: "brownian"}


def _warn(msg: str) -> None:
    print(f"histent: warning: {msg}", file=sys.stderr)


def _progress(msg: str) -> None:
    print(f"histent: {msg}", file=sys.stderr)


@dataclass
class RunConfig:
    """A validated run: subcommand, its parameters, and output routing."""

    subcommand: str
    params: dict = field(default_factory=dict)
    out: str = "."
    fmt: str = "csv"
    stdout: bool = False
    workers: int = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histent",
        description="entropies of coarse-grained histories of stochastic processes",
    )
    parser.add_argument("--version", action="version", version=f"histent {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, helptext in (
        ("sweep", "entropy over a (dx, dt) graining grid"),
        ("urn", "exact urn-model studies"),
        ("translate", "second-law time-translation run"),
        ("maxent", "reconstruction-entropy chain on a seeded instance"),
        ("check", "run the invariant self-checks"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", nargs="?", default=None, help="JSON config file")
        p.add_argument("--model", choices=("rw", "diffusion", "brownian"), default=None)
        p.add_argument("--figure", type=int, default=None, help="figure one-shot (1-5)")
        p.add_argument("--dx", default=None, help="comma-separated bin widths")
        p.add_argument("--dt", default=None, help="comma-separated time spacings")
        p.add_argument("--count", type=int, default=None, help="trajectory count")
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--workers", type=int, default=None, help="parallel workers")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--stdout", action="store_true", help="write artifact to stdout")
    return parser


def _load_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _parse_axis(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad axis list {text!r}: {exc}") from exc


def _apply_flag(cfg: dict, key: str, value) -> None:
    if value is None:
        return
    if cfg.get(key) is not None and cfg[key] != value:
        _warn(f"flag --{key} ({value}) overrides config value ({cfg[key]})")
    cfg[key] = value


def _env_seed() -> int | None:
    raw = os.environ.get("HISTENT_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"HISTENT_SEED must be an integer, got {raw!r}") from exc


def _reject_flags(ns, names: tuple[str, ...]) -> None:
    for name in names:
        if getattr(ns, name) is not None:
            raise ConfigError(f"--{name} does not apply to '{ns.subcommand}'")


def parse_config(argv=None) -> RunConfig:
    """Flags + optional JSON file -> a fully validated RunConfig."""
    ns = _build_parser().parse_args(argv)
    cfg = _load_file(ns.config)
    rc = RunConfig(subcommand=ns.subcommand)
    rc.out = ns.out if ns.out is not None else str(cfg.pop("out", "."))
    rc.fmt = ns.format if ns.format is not None else str(cfg.pop("format", "csv"))
    rc.stdout = bool(ns.stdout or cfg.pop("stdout", False))
    rc.workers = ns.workers if ns.workers is not None else int(cfg.pop("workers", 1))
    if rc.workers < 1:
        raise ConfigError("workers must be >= 1")

    if ns.subcommand == "sweep":
        _reject_flags(ns, ())
        if ns.figure is not None:
            if ns.figure not in _FIGURE_MODELS:
                raise ConfigError(f"--figure {ns.figure} is not a sweep figure (1-3)")
            if ns.model is not None and ns.model != _FIGURE_MODELS[ns.figure]:
                raise ConfigError(
                    f"--figure {ns.figure} means model {_FIGURE_MODELS[ns.figure]!r}, "
                    f"but --model {ns.model} was given"
                )
            _apply_flag(cfg, "model", _FIGURE_MODELS[ns.figure])
        _apply_flag(cfg, "model", ns.model)
        if ns.dx is not None:
            _apply_flag(cfg, "dx", _parse_axis(ns.dx))
        if ns.dt is not None:
            _apply_flag(cfg, "dt", _parse_axis(ns.dt))
        _apply_flag(cfg, "count", ns.count)
        _apply_flag(cfg, "seed", ns.seed)
        model = cfg.pop("model", "rw")
        model_cfg = default_model_config(model)
        params = {"model": model, "dx": None, "dt": None, "resamples": 100}
        for key, val in cfg.items():
            if key in ("dx", "dt"):
                params[key] = [float(v) for v in val]
            elif key == "resamples":
                params[key] = int(val)
            elif key in ("count", "seed"):
                model_cfg[key] = int(val)
            elif key in model_cfg:
                model_cfg[key] = type(model_cfg[key])(val)
            else:
                raise ConfigError(f"unknown sweep config key {key!r} for model {model!r}")
        if ns.seed is None and "seed" not in cfg:
            env = _env_seed()
            if env is not None:
                model_cfg["seed"] = env
        params["config"] = model_cfg
        rc.params = params
        return rc

    if ns.subcommand == "urn":
        _reject_flags(ns, ("model", "dx", "dt", "count", "seed"))
        figure = ns.figure if ns.figure is not None else int(cfg.pop("figure", 4))
        if figure not in (4, 5):
            raise ConfigError(f"--figure {figure} is not an urn figure (4 or 5)")
        params = {"figure": figure, "R": 15, "n0": None, "N": 3,
                  "t1": None, "m": None, "ks": (1, 2, 3)}
        for key, val in cfg.items():
            if key not in _URN_KEYS:
                raise ConfigError(f"unknown urn config key {key!r}")
            params[key] = val
        params["R"] = int(params["R"])
        params["N"] = int(params["N"])
        if params["n0"] is not None:
            params["n0"] = int(params["n0"])
        rc.params = params
        return rc

    if ns.subcommand == "translate":
        _reject_flags(ns, ("model", "figure", "dx", "dt", "count", "seed"))
        params = {"R": 15, "n0": None, "base_times": (1, 2), "T": None}
        for key, val in cfg.items():
            if key not in _TRANSLATE_KEYS:
                raise ConfigError(f"unknown translate config key {key!r}")
            params[key] = val
        params["R"] = int(params["R"])
        if params["n0"] is not None:
            params["n0"] = int(params["n0"])
        params["base_times"] = tuple(int(t) for t in params["base_times"])
        if params["T"] is not None:
            params["T"] = [int(t) for t in params["T"]]
        rc.params = params
        return rc

    if ns.subcommand == "maxent":
        _reject_flags(ns, ("model", "figure", "dx", "dt", "count"))
        params = {"V": 4, "N": 2, "seed": None}
        for key, val in cfg.items():
            if key not in _MAXENT_KEYS:
                raise ConfigError(f"unknown maxent config key {key!r}")
            params[key] = int(val)
        _apply_flag(params, "seed", ns.seed)
        if params["seed"] is None:
            env = _env_seed()
            params["seed"] = env if env is not None else 0
        params["V"] = int(params["V"])
        params["N"] = int(params["N"])
        rc.params = params
        return rc

    # check
    _reject_flags(ns, ("model", "figure", "dx", "dt", "count", "seed"))
    if cfg:
        raise ConfigError(f"'check' takes no config keys, got {sorted(cfg)}")
    rc.params = {}
    return rc


def _emit(rc: RunConfig, stem: str, text: str, suffix: str) -> None:
    if rc.stdout:
        sys.stdout.write(text)
        return
    outdir = Path(rc.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{stem}.{suffix}"
    with open(path, "w", newline="") as fh:
        fh.write(text)
    _progress(f"wrote {path}")


def _emit_sweep(rc: RunConfig, stem: str, result) -> None:
    text = result.to_csv() if rc.fmt == "csv" else result.to_json()
    _emit(rc, stem, text, rc.fmt)


def execute(rc: RunConfig) -> int:
    """Run a validated config; returns the process exit code."""
    if rc.subcommand == "sweep":
        p = rc.params
        _progress(f"sweep model={p['model']} count={p['config']['count']} "
                  f"seed={p['config']['seed']} workers={rc.workers}")
        result = sweep_entropy_vs_graining(
            p["model"], p["config"], p["dx"], p["dt"],
            workers=rc.workers, resamples=p["resamples"],
        )
        _emit_sweep(rc, f"sweep_{p['model']}", result)
        return 0

    if rc.subcommand == "urn":
        p = rc.params
        if p["figure"] == 4:
            _progress(f"urn two-time surface R={p['R']}")
            result = urn_two_time_surface(p["R"], p["n0"], p["t1"], p["m"], p["N"])
            _emit_sweep(rc, "urn_surface", result)
        else:
            _progress(f"urn multi-time curves R={p['R']}")
            result = urn_multi_time_curves(p["R"], p["n0"], p["t1"],
                                           tuple(p["ks"]), p["N"])
            _emit_sweep(rc, "urn_curves", result)
        return 0

    if rc.subcommand == "translate":
        p = rc.params
        _progress(f"translation run R={p['R']} base_times={p['base_times']}")
        result = urn_second_law_run(p["R"], p["n0"], p["base_times"], p["T"])
        _emit_sweep(rc, "translate_urn", result)
        return 0

    if rc.subcommand == "maxent":
        p = rc.params
        _progress(f"maxent instance V={p['V']} N={p['N']} seed={p['seed']}")
        kernel, rho0, cg, _space = random_markov_instance(
            p["seed"], cells=p["V"], N=p["N"]
        )
        report = verify_inequalities(kernel, cg, rho0)
        payload = {
            "instance": {"V": p["V"], "N": p["N"], "seed": p["seed"],
                         "coarse_times": list(cg.grid.coarse_times)},
            "report": report.to_dict(),
            "provenance": {"version": __version__,
                           "config_sha256": config_digest(p)},
        }
        _emit(rc, "maxent_report", json.dumps(payload, sort_keys=True, indent=2) + "\n", "json")
        if not report.ok:
            _progress(f"inequality chain violated: slacks {report.slacks}")
            return 1
        return 0

    # check
    checks = run_self_checks()
    for c in checks:
        _progress(f"[{'ok' if c.ok else 'FAIL'}] {c.name}: {c.detail}")
    payload = {
        "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in checks],
        "provenance": {"version": __version__},
    }
    _emit(rc, "check_report", json.dumps(payload, sort_keys=True, indent=2) + "\n", "json")
    return 0 if all(c.ok for c in checks) else 1


def main(argv=None) -> int:
    try:
        rc = parse_config(argv)
    except ConfigError as exc:
        print(f"histent: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return execute(rc)
    except ConfigError as exc:
        print(f"histent: config error: {exc}", file=sys.stderr)
        return 2
    except (InvariantViolation, ConvergenceError) as exc:
        print(f"histent: invariant violation: {exc}", file=sys.stderr)
        return 1
    except HistentError as exc:
        print(f"histent: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
