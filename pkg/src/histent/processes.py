"""The four stochastic models: one-step kernels, samplers, exact pipelines.

Models
------
* periodic-lattice random walk: jump one site left or right with equal
  probability each fine step;
* continuous diffusion: Gaussian transition density
  p(x2|x1) = (pi D dt)^{-1/2} exp[-(x2-x1)^2 / (D dt)] (variance D dt / 2),
  integrated over destination bins;
* Brownian motion in phase space: dx = (p/m) dt, dp = -2 Gamma p dt + a dxi,
  integrated with the Euler-Maruyama scheme at the finest step;
* two-urn ball exchange: 2R numbered balls, one uniformly chosen ball
  switches urns each step; the ball count n in urn A is a birth-death chain
  with an exactly known j-step law.

`exact_history_probs` turns a kernel, an initial condition, and a
coarse-graining into the exact class distribution by alternating kernel
propagation with bin projection, visiting only classes of nonzero
probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from histent.errors import ClassCapExceeded, InvariantViolation
from histent.histories import (
    CONTINUUM,
    DISCRETE,
    CoarseGraining,
    HistoryDistribution,
    SpatialPartition,
    StateSpace,
    projector_volume,
)

__all__ = [
    "MarkovKernel",
    "InitialCondition",
    "BrownianParams",
    "UrnParams",
    "random_walk_kernel",
    "diffusion_kernel",
    "brownian_step",
    "urn_transition",
    "urn_kernel",
    "urn_jstep_matrix",
    "urn_space",
    "urn_coefficients",
    "urn_exact_prob",
    "exact_history_probs",
]

_COLUMN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovKernel:
    """A one-step transition kernel over the finest cells.

    ``matrix[i, j]`` is the probability of moving to cell i from cell j, so
    every column is a distribution.  ``dt`` is the physical timestep one
    application represents.  ``gap_factory``, when given, returns the exact
    k-step matrix; kernels built from a closed-form density use it so that
    propagation over a gap does not accumulate the small binning error of
    repeated one-step composition.  Without it, gaps fall back to matrix
    powers, which is exact for genuinely discrete chains.
    """

    matrix: np.ndarray
    dt: float
    gap_factory: Callable[[int], np.ndarray] | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kernel matrix must be square")
        if m.min() < -_COLUMN_TOL:
            raise InvariantViolation("negative transition probability")
        colsums = m.sum(axis=0)
        if np.max(np.abs(colsums - 1.0)) > _COLUMN_TOL:
            raise InvariantViolation(
                f"columns must sum to 1 (worst error {np.max(np.abs(colsums - 1.0)):.2e})"
            )
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def cell_count(self) -> int:
        return self.matrix.shape[0]

    def k_step_matrix(self, k: int) -> np.ndarray:
        """Exact k-step transition matrix."""
        k = int(k)
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0:
            return np.eye(self.cell_count)
        if self.gap_factory is not None:
            return self.gap_factory(k)
        return np.linalg.matrix_power(self.matrix, k)


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Distribution over the finest cells one step before the first slot."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("initial condition must be a vector")
        if p.min() < -_COLUMN_TOL:
            raise InvariantViolation("negative initial probability")
        if abs(p.sum() - 1.0) > _COLUMN_TOL:
            raise InvariantViolation(f"initial probabilities sum to {p.sum()}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, cell: int, cell_count: int) -> "InitialCondition":
        p = np.zeros(cell_count)
        p[cell] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, cell_count: int) -> "InitialCondition":
        return cls(np.full(cell_count, 1.0 / cell_count))


@dataclass(frozen=True)
class BrownianParams:
    """Dissipation Gamma, noise strength a, mass m, and start (x0, p0)."""

    Gamma: float
    a: float
    m: float
    x0: float = 0.0
    p0: float = 0.0

    def __post_init__(self):
        if self.Gamma < 0:
            raise ValueError("Gamma must be >= 0")
        if self.a < 0:
            raise ValueError("a must be >= 0")
        if not self.m > 0:
            raise ValueError("m must be positive")


@dataclass(frozen=True)
class UrnParams:
    """2R numbered balls; n of them currently in urn A."""

    R: int
    n: int

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if not 0 <= self.n <= 2 * self.R:
            raise ValueError(f"n must lie in 0..{2 * self.R}")


def random_walk_kernel(space: StateSpace, eta: float = 1.0) -> MarkovKernel:
    """Nearest-neighbor walk on the periodic lattice: 1/2 each way, mod V."""
    if space.kind != DISCRETE:
        raise ValueError("the random walk needs a discrete lattice")
    if space.boundary != "periodic":
        raise ValueError("the random walk is defined on a periodic lattice")
    V = space.cell_count
    if V < 2:
        raise ValueError("need at least two sites")
    m = np.zeros((V, V))
    idx = np.arange(V)
    m[(idx + 1) % V, idx] += 0.5
    m[(idx - 1) % V, idx] += 0.5
    return MarkovKernel(m, dt=eta)


def _gaussian_bin_matrix(D: float, tau: float, partition: SpatialPartition) -> np.ndarray:
    """Destination-bin integrals of the variance D*tau/2 Gaussian.

    Columns are indexed by source bin (density centered on the bin center),
    integrated over destination bins via the error function and renormalized
    to absorb the open-boundary truncation.
    """
    edges = np.arange(partition.bin_count + 1) * partition.bin_width
    centers = (edges[:-1] + edges[1:]) / 2.0
    scale = math.sqrt(D * tau)  # the density is exp[-(x2-x1)^2/(D tau)]
    z = (edges[:, None] - centers[None, :]) / scale
    cdf = 0.5 * (1.0 + erf(z))
    m = np.diff(cdf, axis=0)
    m /= m.sum(axis=0, keepdims=True)
    return m


def diffusion_kernel(D: float, dt: float, partition: SpatialPartition) -> MarkovKernel:
    """Binned Gaussian kernel with per-step variance D*dt/2 over ``partition``.

    The returned kernel carries a gap factory that rebuilds the exact binned
    Gaussian for k steps (variance k*D*dt/2) instead of composing binned
    one-step matrices, so coarse-grained class probabilities depend only on
    the physical gaps between coarse times, not on the bookkeeping step dt.
    """
    if not D > 0:
        raise ValueError("D must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    matrix = _gaussian_bin_matrix(D, dt, partition)

    def gap(k: int) -> np.ndarray:
        return _gaussian_bin_matrix(D, k * dt, partition)

    return MarkovKernel(matrix, dt=dt, gap_factory=gap)


def brownian_step(state, dt: float, params: BrownianParams, rng) -> tuple:
    """One Euler-Maruyama update of (x, p); draws exactly one normal per step.

    x += (p/m) dt;  p += -2 Gamma p dt + a sqrt(dt) z.  Accepts scalars or
    matching arrays.
    """
    x, p = state
    z = rng.standard_normal(np.shape(p)) if np.ndim(p) else rng.standard_normal()
    x = x + (p / params.m) * dt
    p = p - 2.0 * params.Gamma * p * dt + params.a * math.sqrt(dt) * z
    return x, p


def urn_transition(n: int, R: int) -> dict[int, float]:
    """One-step law of the ball count: up with (2R-n)/2R, down with n/2R."""
    UrnParams(R, n)  # validates the range
    out: dict[int, float] = {}
    if n < 2 * R:
        out[n + 1] = (2 * R - n) / (2 * R)
    if n > 0:
        out[n - 1] = n / (2 * R)
    return out


def urn_kernel(R: int) -> MarkovKernel:
    """The (2R+1)-state birth-death chain of the ball count.

    Gaps are propagated through the exact j-step law rather than float
    matrix powers, so multi-step probabilities stay exact to rounding.
    """
    size = 2 * R + 1
    m = np.zeros((size, size))
    for n in range(size):
        for n2, p in urn_transition(n, R).items():
            m[n2, n] = p
    return MarkovKernel(m, dt=1.0, gap_factory=lambda j: urn_jstep_matrix(R, j))


@lru_cache(maxsize=4096)
def urn_jstep_matrix(R: int, j: int) -> np.ndarray:
    """Exact j-step ball-count transition matrix; entry [n_j, n_0]."""
    size = 2 * R + 1
    m = np.array(
        [[urn_exact_prob(nj, j, n0, R) for n0 in range(size)] for nj in range(size)]
    )
    m.flags.writeable = False
    return m


def urn_space(R: int, N: int = 3) -> StateSpace:
    """State space whose cells are ball counts with binomial multiplicities.

    There are 2^{2R} ball arrangements in total and C(2R, n) of them have n
    balls in urn A, so Tr(I) over one slot is 2^{2R} and a count-n cell has
    volume C(2R, n).
    """
    mult = tuple(math.comb(2 * R, n) for n in range(2 * R + 1))
    return StateSpace(
        kind=DISCRETE,
        V=float(2 ** (2 * R)),
        cell_count=2 * R + 1,
        boundary="open",
        cell_multiplicity=mult,
    )


@lru_cache(maxsize=64)
def _coefficient_table(R: int) -> tuple[tuple[int, ...], ...]:
    """C_k^l for l = -R..R, k = 0..2R, as exact integers."""
    table = []
    for l in range(-R, R + 1):
        coeffs = [1]
        for _ in range(R - l):  # multiply by (1 - z)
            coeffs = [a - b for a, b in zip(coeffs + [0], [0] + coeffs)]
        for _ in range(R + l):  # multiply by (1 + z)
            coeffs = [a + b for a, b in zip(coeffs + [0], [0] + coeffs)]
        table.append(tuple(coeffs))
    return tuple(table)


def urn_coefficients(R: int, l: int) -> np.ndarray:
    """Exact integer coefficients of (1-z)^{R-l} (1+z)^{R+l}."""
    if not -R <= l <= R:
        raise ValueError(f"l must lie in -{R}..{R}")
    return np.array(_coefficient_table(R)[l + R], dtype=object)


def urn_exact_prob(n_j: int, j: int, n_0: int, R: int) -> float:
    """Exact probability that the count is n_j after j steps from n_0.

    Evaluates the spectral sum
        p = (-1)^{n_0} 2^{-2R} sum_{l=-R}^{R} (l/R)^j C_{n_j}^l C_{R+l}^{R-n_0}
    in exact integer arithmetic (one float division at the end), which keeps
    the alternating sum from losing the 1e-9 absolute accuracy the exact
    pipeline promises even at R = 15, j = 60.
    """
    UrnParams(R, n_0)
    UrnParams(R, n_j)
    if j < 0:
        raise ValueError("j must be >= 0")
    table = _coefficient_table(R)
    total = 0
    for l in range(-R, R + 1):
        lj = l**j if j > 0 else 1  # 0^0 = 1 keeps the j = 0 case a delta
        if lj == 0:
            continue
        total += lj * table[l + R][n_j] * table[(R - n_0) + R][R + l]
    num = (-1) ** n_0 * total
    den = (2 ** (2 * R)) * (R**j)
    p = num / den
    if p < -1e-9 or p > 1.0 + 1e-9:
        raise InvariantViolation(
            f"j-step law out of range: p({n_j}|{n_0}, j={j}, R={R}) = {p}"
        )
    return min(max(p, 0.0), 1.0)


def _class_probs(
    kernel: MarkovKernel,
    rho0: InitialCondition,
    cg: CoarseGraining,
    class_cap: int = 1_000_000,
) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Labels and probabilities of all nonzero-probability classes.

    Alternates gap propagation with bin projection, carrying one
    unnormalized cell-mass vector per live class prefix, so only reachable
    classes are ever expanded.
    """
    if kernel.cell_count != cg.cell_count:
        raise ValueError("kernel and coarse-graining cell counts differ")
    if rho0.probs.size != kernel.cell_count:
        raise ValueError("initial condition and kernel cell counts differ")
    branches: dict[tuple[int, ...], np.ndarray] = {(): rho0.probs}
    prev_t = 0
    for k, t in enumerate(cg.grid.coarse_times):
        gap = kernel.k_step_matrix(t - prev_t)
        new_branches: dict[tuple[int, ...], np.ndarray] = {}
        for prefix, vec in branches.items():
            v = gap @ vec
            part = cg.partition_at(k, prefix)
            cpb = part.cells_per_bin
            for b in range(part.bin_count):
                chunk = v[b * cpb : (b + 1) * cpb]
                if chunk.sum() > 0.0:
                    masked = np.zeros_like(v)
                    masked[b * cpb : (b + 1) * cpb] = chunk
                    new_branches[prefix + (b,)] = masked
        if len(new_branches) > class_cap:
            raise ClassCapExceeded(
                f"{len(new_branches)} classes exceed the cap of {class_cap}; "
                "use the Monte Carlo path for grainings this fine"
            )
        branches = new_branches
        prev_t = t
    labels = sorted(branches)
    probs = np.array([branches[l].sum() for l in labels])
    return labels, probs


def exact_history_probs(
    kernel: MarkovKernel,
    rho0: InitialCondition,
    cg: CoarseGraining,
    space: StateSpace | None = None,
    class_cap: int = 1_000_000,
) -> HistoryDistribution:
    """Exact class distribution of the coarse-graining under the kernel.

    ``space`` supplies the volume bookkeeping; omitting it assumes a uniform
    discrete lattice whose sites are the kernel's cells.  Only classes with
    nonzero probability are enumerated, and their number is capped (default
    10^6) because it is the reachable classes that bound memory and time.
    """
    if space is None:
        space = StateSpace(DISCRETE, float(kernel.cell_count), kernel.cell_count)
    labels, probs = _class_probs(kernel, rho0, cg, class_cap=class_cap)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvariantViolation(f"class probabilities sum to {total}")
    vols = np.array([projector_volume(cg, l, space) for l in labels])
    return HistoryDistribution(
        labels=tuple(labels),
        probs=probs,
        log2_volumes=vols,
        log2_total=cg.grid.N * space.log2_V,
    )
