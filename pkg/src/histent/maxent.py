"""Constrained maximum-entropy reconstructions over the first history slot.

Given a kernel and a coarse-graining, the class probability of a history is
a linear functional of the distribution occupied at the first history slot:
p_α = Σ_x C_α(x) ρ(x), where C_α(x) is the probability of landing in class α
given that slot-1 cell x.  Two reconstruction entropies follow by maximizing
over every ρ̃ consistent with the observed class probabilities:

* ``ic_entropy`` (S_ic): maximize the plain entropy −Σ ρ̃ log2 ρ̃;
* ``dc_entropy`` (S_dc): additionally credit each start cell with the path
  entropy s(x) it generates over the remaining fine steps, i.e. maximize
  −Σ ρ̃ log2 ρ̃ + Σ s(x) ρ̃(x).

Because any feasible ρ̃ extends to a full history distribution with the same
class probabilities, S_ic ≤ S_dc ≤ S_hs holds exactly; ``verify_inequalities``
evaluates all three sides on the exact pipeline.

The maximizer has exponential form ρ̃ ∝ exp[s(x) ln 2 + Σ_α λ^α C_α(x)].  The
multipliers are found by damped Newton on the concave dual, reduced to the
span of the constraint rows (modulo constants) so the Hessian stays positive
definite; multiplicative iterative scaling is the fallback when the reduced
Hessian is still numerically degenerate.  Classes with zero target
probability are eliminated first and ρ̃'s support restricted accordingly,
keeping every multiplier finite.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from histent.errors import ClassCapExceeded, ConvergenceError, InvariantViolation
from histent.histories import CoarseGraining, HistoryDistribution, TimeGrid
from histent.processes import InitialCondition, MarkovKernel, exact_history_probs

__all__ = [
    "MaxEntProblem",
    "MaxEntSolution",
    "build_constraints",
    "solve_maxent",
    "s_function",
    "ic_entropy",
    "dc_entropy",
    "InequalityReport",
    "verify_inequalities",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class MaxEntProblem:
    """Linear class constraints C ρ̃ = targets plus an optional entropy bonus.

    ``constraints`` is classes × cells with entries in [0, 1] and columns
    summing to 1 (the class set is exhaustive, so normalization of ρ̃ is
    implied by the constraints).  ``bonus`` is in bits per start cell.
    """

    labels: tuple
    constraints: np.ndarray
    targets: np.ndarray | None = None
    bonus: np.ndarray | None = None

    def __post_init__(self):
        C = np.asarray(self.constraints, dtype=float)
        if C.ndim != 2:
            raise ValueError("constraints must be a classes x cells matrix")
        if len(self.labels) != C.shape[0]:
            raise ValueError("one label per constraint row required")
        if C.min() < -1e-12 or C.max() > 1.0 + 1e-12:
            raise InvariantViolation("constraint entries must lie in [0, 1]")
        colsums = C.sum(axis=0)
        if np.max(np.abs(colsums - 1.0)) > 1e-9:
            raise InvariantViolation("constraint columns must sum to 1")
        C = np.clip(C, 0.0, 1.0)
        C.flags.writeable = False
        object.__setattr__(self, "constraints", C)
        if self.targets is not None:
            p = np.asarray(self.targets, dtype=float)
            if p.shape != (C.shape[0],):
                raise ValueError("one target per class required")
            if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-9:
                raise InvariantViolation("targets must form a distribution")
            p = np.clip(p, 0.0, None)
            p.flags.writeable = False
            object.__setattr__(self, "targets", p)
        if self.bonus is not None:
            s = np.asarray(self.bonus, dtype=float)
            if s.shape != (C.shape[1],):
                raise ValueError("one bonus entry per cell required")
            s = s.copy()
            s.flags.writeable = False
            object.__setattr__(self, "bonus", s)

    @property
    def cell_count(self) -> int:
        return self.constraints.shape[1]

    def with_targets(self, targets) -> "MaxEntProblem":
        return replace(self, targets=np.asarray(targets, dtype=float))

    def with_bonus(self, bonus) -> "MaxEntProblem":
        return replace(self, bonus=np.asarray(bonus, dtype=float))


@dataclass(frozen=True, eq=False)
class MaxEntSolution:
    """Maximizer ρ̃, its multipliers, and solve diagnostics.

    ``multipliers`` align with the problem's class labels; eliminated
    zero-target classes carry −inf (their formal multipliers diverge).
    ``objective_bits`` is −Σ ρ̃ log2 ρ̃ + Σ bonus·ρ̃.
    """

    rho: np.ndarray
    multipliers: np.ndarray
    objective_bits: float
    residual: float
    iterations: int
    method: str

    def to_dict(self) -> dict:
        return {
            "units": "bits",
            "objective_bits": self.objective_bits,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
            "rho": [float(v) for v in self.rho],
            "multipliers": [
                float(v) if math.isfinite(v) else None for v in self.multipliers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def build_constraints(
    kernel: MarkovKernel,
    cg: CoarseGraining,
    class_cap: int = 1_000_000,
) -> MaxEntProblem:
    """Class probabilities conditional on each slot-1 cell, as a matrix.

    Row α, column x holds the probability of class α given that the chain
    occupies cell x at the first history slot; the first gap therefore spans
    t_1 − 1 fine steps.  Only classes reachable from some start cell appear,
    and their number is capped.
    """
    cells = kernel.cell_count
    if cells != cg.cell_count:
        raise ValueError("kernel and coarse-graining cell counts differ")
    branches: dict[tuple[int, ...], np.ndarray] = {(): np.eye(cells)}
    prev_t = 1
    for k, t in enumerate(cg.grid.coarse_times):
        gap = kernel.k_step_matrix(t - prev_t)
        new_branches: dict[tuple[int, ...], np.ndarray] = {}
        for prefix, mat in branches.items():
            m = gap @ mat
            part = cg.partition_at(k, prefix)
            cpb = part.cells_per_bin
            for b in range(part.bin_count):
                block = m[b * cpb : (b + 1) * cpb, :]
                if block.sum() > 0.0:
                    masked = np.zeros_like(m)
                    masked[b * cpb : (b + 1) * cpb, :] = block
                    new_branches[prefix + (b,)] = masked
        if len(new_branches) > class_cap:
            raise ClassCapExceeded(
                f"{len(new_branches)} classes exceed the cap of {class_cap}"
            )
        branches = new_branches
        prev_t = t
    labels = sorted(branches)
    C = np.array([branches[l].sum(axis=0) for l in labels])
    return MaxEntProblem(labels=tuple(labels), constraints=C)


def s_function(kernel: MarkovKernel, grid: TimeGrid | None = None, n: int | None = None) -> np.ndarray:
    """Path entropy s(x) of n fine steps started from cell x, in bits.

    Uses the Markov conditional-entropy recursion s_n = h + Kᵀ s_{n-1} with
    h(x) the entropy of column x, never path enumeration.  Deterministic
    kernels give s ≡ 0; n steps of the symmetric walk give exactly n bits.
    ``n`` defaults to grid.N − 1, the steps remaining after the first slot.
    """
    if n is None:
        if grid is None:
            raise ValueError("either grid or n is required")
        n = grid.N - 1
    if n < 0:
        raise ValueError("n must be >= 0")
    K = kernel.matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(K > 0.0, np.log2(np.where(K > 0.0, K, 1.0)), 0.0)
    h = -(K * logs).sum(axis=0)
    s = np.zeros(K.shape[0])
    for _ in range(n):
        s = h + K.T @ s
    if s.min() < -1e-12:
        raise InvariantViolation("path entropy must be nonnegative")
    return np.clip(s, 0.0, None)


# ---------------------------------------------------------------------------
# Dual solve
# ---------------------------------------------------------------------------

def _iterative_scaling(sigma, C, p, tol, max_iter):
    """Multiplicative scaling fallback; valid because columns of C sum to 1."""
    lam = np.zeros(C.shape[0])
    logrho = sigma - logsumexp(sigma)
    best = np.inf
    for it in range(1, max_iter + 1):
        rho = np.exp(logrho)
        q = C @ rho
        resid = float(np.max(np.abs(q - p)))
        best = min(best, resid)
        if resid <= tol:
            return rho, lam, resid, it
        step = np.log(p / q)
        lam += step
        logrho = logrho + C.T @ step
        logrho -= logsumexp(logrho)
    raise ConvergenceError(
        f"iterative scaling did not reach {tol} in {max_iter} iterations",
        best_residual=best,
    )


def _reduced_newton(sigma, C, p, tol, max_iter):
    """Damped Newton on the dual, reduced to span(C rows) modulo constants."""
    cells = C.shape[1]
    M = C - C.mean(axis=1, keepdims=True)
    sv_vt = np.linalg.svd(M, full_matrices=False)
    sv, vt = sv_vt[1], sv_vt[2]
    cutoff = 1e-12 * max(1.0, sv[0]) if sv.size else 0.0
    rank = int(np.sum(sv > cutoff))
    B = vt[:rank].T  # cells x rank, orthonormal, orthogonal to the ones vector

    rho_feas, *_ = np.linalg.lstsq(C, p, rcond=None)
    if np.max(np.abs(C @ rho_feas - p)) > 1e-7:
        raise InvariantViolation("targets are not realizable by any start density")
    b = B.T @ rho_feas

    theta = np.zeros(rank)

    def dual_state(th):
        z = sigma + B @ th
        g = float(logsumexp(z)) - float(th @ b)
        rho = np.exp(z - logsumexp(z))
        return g, rho

    g, rho = dual_state(theta)
    if rank == 0:
        resid = float(np.max(np.abs(C @ rho - p)))
        return rho, theta, B, resid, 0
    for it in range(1, max_iter + 1):
        resid = float(np.max(np.abs(C @ rho - p)))
        if resid <= tol:
            return rho, theta, B, resid, it - 1
        grad = B.T @ rho - b
        Bw = B * rho[:, None]
        H = B.T @ Bw - np.outer(B.T @ rho, B.T @ rho)
        try:
            cf = cho_factor(H + 1e-14 * np.eye(rank))
            d = cho_solve(cf, -grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "dual Hessian is numerically singular", best_residual=resid
            )
        # backtracking line search; the dual value never worsens
        step, gd = 1.0, float(grad @ d)
        if gd >= 0.0:
            raise ConvergenceError(
                "Newton direction is not a descent direction", best_residual=resid
            )
        while True:
            g_new, rho_new = dual_state(theta + step * d)
            if g_new <= g + 1e-4 * step * gd:
                break
            step *= 0.5
            if step < 1e-14:
                raise ConvergenceError(
                    "line search stalled", best_residual=resid
                )
        theta = theta + step * d
        g, rho = g_new, rho_new
    resid = float(np.max(np.abs(C @ rho - p)))
    raise ConvergenceError(
        f"Newton did not reach {tol} in {max_iter} iterations",
        best_residual=resid,
    )


def solve_maxent(problem: MaxEntProblem, tol: float = 1e-9, max_iter: int = 500) -> MaxEntSolution:
    """Maximize −Σ ρ̃ log2 ρ̃ + Σ bonus·ρ̃ subject to the class constraints.

    Zero-target classes are eliminated and ρ̃'s support restricted to cells
    that cannot reach them before the dual solve; their reported multipliers
    are −inf.  Raises ConvergenceError (carrying the best residual) if
    neither Newton nor iterative scaling reaches ``tol``.
    """
    if problem.targets is None:
        raise ValueError("problem has no targets; use with_targets first")
    C_full = problem.constraints
    p_full = problem.targets
    n_classes, cells = C_full.shape
    s_bits = problem.bonus if problem.bonus is not None else np.zeros(cells)
    sigma_full = s_bits * _LN2

    zero = p_full <= 0.0
    support = ~(C_full[zero].sum(axis=0) > 0.0) if zero.any() else np.ones(cells, bool)
    if not support.any():
        raise InvariantViolation("every start cell reaches a zero-target class")
    C = C_full[np.ix_(~zero, support)]
    p = p_full[~zero]
    sigma = sigma_full[support]

    try:
        rho_s, theta, B, resid, iters = _reduced_newton(sigma, C, p, tol, max_iter)
        method = "newton" if iters else "closed-form"
        lam_s, *_ = np.linalg.lstsq(C.T, B @ theta, rcond=None)
    except ConvergenceError:
        rho_s, lam_s, resid, iters = _iterative_scaling(sigma, C, p, tol, 200 * max_iter)
        method = "iterative-scaling"

    rho = np.zeros(cells)
    rho[support] = rho_s
    lam = np.full(n_classes, -np.inf)
    lam[~zero] = lam_s
    pos = rho_s[rho_s > 0.0]
    objective = float(-(pos * np.log2(pos)).sum() + s_bits @ rho)
    full_resid = float(np.max(np.abs(C_full @ rho - p_full)))
    return MaxEntSolution(
        rho=rho,
        multipliers=lam,
        objective_bits=objective,
        residual=full_resid,
        iterations=iters,
        method=method,
    )


# ---------------------------------------------------------------------------
# The two reconstruction entropies and the inequality chain
# ---------------------------------------------------------------------------

def _aligned_targets(problem: MaxEntProblem, hd: HistoryDistribution) -> np.ndarray:
    lookup = {label: p for label, p in zip(hd.labels, hd.probs)}
    return np.array([lookup.get(label, 0.0) for label in problem.labels])


def ic_entropy(kernel: MarkovKernel, cg: CoarseGraining, rho0: InitialCondition) -> float:
    """S_ic: entropy of the least-informative start density matching the classes."""
    problem = build_constraints(kernel, cg)
    hd = exact_history_probs(kernel, rho0, cg)
    sol = solve_maxent(problem.with_targets(_aligned_targets(problem, hd)))
    return sol.objective_bits


def dc_entropy(kernel: MarkovKernel, cg: CoarseGraining, rho0: InitialCondition) -> float:
    """S_dc: as S_ic but crediting each start with its remaining path entropy."""
    problem = build_constraints(kernel, cg)
    hd = exact_history_probs(kernel, rho0, cg)
    bonus = s_function(kernel, cg.grid)
    sol = solve_maxent(
        problem.with_targets(_aligned_targets(problem, hd)).with_bonus(bonus)
    )
    return sol.objective_bits


@dataclass(frozen=True)
class InequalityReport:
    """S_ic ≤ S_dc ≤ S_hs with the two slacks; ok iff both ≥ −tolerance."""

    S_ic: float
    S_dc: float
    S_hs: float
    tolerance: float = 1e-6

    @property
    def slacks(self) -> tuple[float, float]:
        return (self.S_dc - self.S_ic, self.S_hs - self.S_dc)

    @property
    def ok(self) -> bool:
        return all(s >= -self.tolerance for s in self.slacks)

    def to_dict(self) -> dict:
        return {
            "units": "bits",
            "S_ic": self.S_ic,
            "S_dc": self.S_dc,
            "S_hs": self.S_hs,
            "slacks": list(self.slacks),
            "ok": self.ok,
        }


def verify_inequalities(
    kernel: MarkovKernel,
    cg: CoarseGraining,
    rho0: InitialCondition,
    tolerance: float = 1e-6,
) -> InequalityReport:
    """Evaluate S_ic, S_dc, S_hs on the exact pipeline and report the slacks.

    Assumes unit-volume cells (the lattice models), where the three measures
    share one microstate bookkeeping.
    """
    from histent.entropy import history_space_entropy

    problem = build_constraints(kernel, cg)
    hd = exact_history_probs(kernel, rho0, cg)
    targets = _aligned_targets(problem, hd)
    sol_ic = solve_maxent(problem.with_targets(targets))
    sol_dc = solve_maxent(
        problem.with_targets(targets).with_bonus(s_function(kernel, cg.grid))
    )
    return InequalityReport(
        S_ic=sol_ic.objective_bits,
        S_dc=sol_dc.objective_bits,
        S_hs=history_space_entropy(hd),
        tolerance=tolerance,
    )
