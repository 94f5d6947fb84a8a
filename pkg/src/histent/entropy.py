"""Entropy measures of a class distribution and their exact interrelations.

All values are in bits.  The measures:

* ``entropy_functional``: plain Shannon entropy −Σ p log2 p;
* ``history_space_entropy`` (S_hs): Shannon entropy plus the mean log class
  volume, the maximum of the entropy functional over fine-grained
  distributions constrained to reproduce the class probabilities;
* ``lp_depth`` (D_LP): how far S_hs falls short of its ceiling N log2 V —
  the thermodynamic cost, in bits, of the information the graining retains;
* ``isham_linden_entropy`` (I_x): one-parameter family interpolating between
  the Shannon entropy (x = 0) and the dimensionless S_hs (x = 1);
* ``step_by_step_entropy`` (S_sbs): the same construction applied one coarse
  time at a time, conditioning each step on the branch so far; differs from
  S_hs by exactly (N − n) log2 V.

Exact linear identities (checked by ``entropy_report``):
    S_hs − N log2 V = I_1 = −D_LP.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from histent.errors import InvariantViolation
from histent.histories import (
    CoarseGraining,
    HistoryDistribution,
    StateSpace,
    TimeGrid,
)

__all__ = [
    "entropy_functional",
    "history_space_entropy",
    "lp_depth",
    "isham_linden_entropy",
    "dimensionless_history_entropy",
    "step_by_step_entropy",
    "max_entropy_value",
    "markov_chain_entropy",
    "EntropyReport",
    "entropy_report",
]

_IDENTITY_TOL = 1e-9


def entropy_functional(probs) -> float:
    """Shannon entropy −Σ p log2 p in bits, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    if p.min() < -1e-12:
        raise ValueError(f"negative probability {p.min()}")
    p = p[p > 0.0]
    return float(-(p * np.log2(p)).sum())


def history_space_entropy(hd: HistoryDistribution) -> float:
    """S_hs = −Σ p log2 p + Σ p log2 Vol(class), in bits.

    Volumes enter in the log2 domain, so astronomically large classes
    (e.g. 2^1024 fine histories) cost nothing in precision.
    """
    mask = hd.probs > 0.0
    p = hd.probs[mask]
    v = hd.log2_volumes[mask]
    return float((p * (v - np.log2(p))).sum())


def dimensionless_history_entropy(hd: HistoryDistribution) -> float:
    """S_hs − N log2 V: volume-normalized, so bin-width conventions drop out."""
    return history_space_entropy(hd) - hd.log2_total


def lp_depth(hd: HistoryDistribution) -> float:
    """D_LP = Σ p log2 p − Σ p log2[Vol(class)/Vol(everything)] = N log2 V − S_hs."""
    return hd.log2_total - history_space_entropy(hd)


def isham_linden_entropy(hd: HistoryDistribution, x: float) -> float:
    """I_x = −Σ p log2 p + x Σ p log2[Vol(class)/Vol(everything)].

    I_0 is the Shannon entropy; I_1 = S_hs − N log2 V = −D_LP.  The volume
    term is ≤ 0, so I_x is non-increasing in x.
    """
    mask = hd.probs > 0.0
    p = hd.probs[mask]
    v = hd.log2_volumes[mask]
    return float((p * (x * (v - hd.log2_total) - np.log2(p))).sum())


def max_entropy_value(space: StateSpace, grid: TimeGrid) -> float:
    """The ceiling N log2 V that S_hs attains at the trivial graining."""
    return grid.N * space.log2_V


def markov_chain_entropy(gap_matrices, rho_start) -> float:
    """Joint Shannon entropy (bits) of (X_1 … X_n) under given gap kernels.

    X_k arises from X_{k-1} (X_1 from ``rho_start``) through gap_matrices[k-1].
    Uses the chain rule H = H(X_1) + Σ_k E[H(X_k | X_{k-1})], which is exact
    whenever the observed variable itself is the Markov state — e.g. the
    finest-cell sequence of a binned kernel.  Linear cost in the number of
    gaps, where direct enumeration of the joint would be exponential.
    """
    gaps = list(gap_matrices)
    if not gaps:
        return 0.0
    rho = np.asarray(gaps[0]) @ np.asarray(rho_start, dtype=float)
    H = entropy_functional(rho)
    for G in gaps[1:]:
        G = np.asarray(G)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(G > 0.0, np.log2(np.where(G > 0.0, G, 1.0)), 0.0)
        h_cols = -(G * logs).sum(axis=0)
        H += float(rho @ h_cols)
        rho = G @ rho
    return H


def step_by_step_entropy(kernel, rho0, cg: CoarseGraining, space: StateSpace | None = None) -> float:
    """S_sbs: per-time entropies conditioned on the branch so far, in bits.

    For each coarse time k the class probabilities conditional on the branch
    (b_1 … b_{k-1}) are formed as joint/marginal ratios, and each branch
    contributes its conditional Shannon entropy plus mean log bin volume,
    weighted by the branch probability.  Zero-probability branches
    contribute nothing.  Satisfies S_hs = S_sbs + (N − n) log2 V exactly.
    """
    from histent.processes import exact_history_probs

    if space is None:
        space = StateSpace("discrete-lattice", float(cg.cell_count), cg.cell_count)
    hd = exact_history_probs(kernel, rho0, cg, space=space)
    n = cg.grid.n
    total = 0.0
    for k in range(n):
        # joint over prefixes of length k+1 and marginal over length k
        joint: dict[tuple[int, ...], float] = {}
        marg: dict[tuple[int, ...], float] = {}
        for label, p in zip(hd.labels, hd.probs):
            if p <= 0.0:
                continue
            joint[label[: k + 1]] = joint.get(label[: k + 1], 0.0) + p
            marg[label[:k]] = marg.get(label[:k], 0.0) + p
        for prefix, pj in joint.items():
            cond = pj / marg[prefix[:k]]
            vol = space.bin_log2_volume(cg.partition_at(k, prefix[:k]), prefix[k])
            total += pj * (vol - math.log2(cond))
    return total


# ---------------------------------------------------------------------------
# Bundled report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyReport:
    """All entropy measures of one class distribution, in bits."""

    S_hs: float
    S_hs_dimensionless: float
    D_LP: float
    I_x: dict[float, float] = field(default_factory=dict)
    S_sbs: float | None = None

    def __post_init__(self):
        if abs(self.S_hs_dimensionless + self.D_LP) > _IDENTITY_TOL:
            raise InvariantViolation(
                "S_hs_dimensionless and -D_LP disagree: "
                f"{self.S_hs_dimensionless} vs {-self.D_LP}"
            )
        if 1.0 in self.I_x and abs(self.I_x[1.0] - self.S_hs_dimensionless) > _IDENTITY_TOL:
            raise InvariantViolation("I_1 must equal S_hs - N log2 V")

    def to_dict(self) -> dict:
        d = {
            "units": "bits",
            "S_hs": self.S_hs,
            "S_hs_dimensionless": self.S_hs_dimensionless,
            "D_LP": self.D_LP,
            "I_x": {str(x): v for x, v in sorted(self.I_x.items())},
        }
        if self.S_sbs is not None:
            d["S_sbs"] = self.S_sbs
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def entropy_report(
    hd: HistoryDistribution,
    x_values=(1.0, 1.5, 2.0),
    S_sbs: float | None = None,
) -> EntropyReport:
    """Evaluate every measure on one distribution; identities are rechecked."""
    s = history_space_entropy(hd)
    return EntropyReport(
        S_hs=s,
        S_hs_dimensionless=s - hd.log2_total,
        D_LP=hd.log2_total - s,
        I_x={float(x): isham_linden_entropy(hd, x) for x in x_values},
        S_sbs=S_sbs,
    )
