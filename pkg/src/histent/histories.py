"""Fine-grained history spaces, coarse-graining partitions, and class volumes.

A fine-grained history of a one-dimensional process is the full state
sequence (x_1, ..., x_N) over the N finest time slots; the initial condition
lives one step earlier, outside the history proper.  A coarse-graining keeps
a subset of the slots (the *coarse times*) and records, at each kept slot,
only the spatial bin the state fell in.  The resulting classes form an
exhaustive, mutually exclusive partition of history space.  Each class c_α
has a *projector volume* Tr(P_α): the number (discrete) or measure
(continuum) of fine-grained histories it contains.  Volumes are handled in
the log2 domain throughout, since counts like V^N overflow floats long
before the entropies of interest do.

Conventions
-----------
* Time slots are indexed 1..N; coarse times are a strictly increasing subset.
* Spatial bins are left-closed, right-open: bin i covers i*dx <= x < (i+1)*dx.
* Class labels are tuples of bin indices ordered by coarse time, earliest
  first.
* States may carry an integer multiplicity (the number of microstates a cell
  stands for); bin volumes then sum multiplicities instead of counting cells.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from histent.errors import InvariantViolation

DISCRETE = "discrete-lattice"
CONTINUUM = "binned-continuum"

__all__ = [
    "DISCRETE",
    "CONTINUUM",
    "StateSpace",
    "TimeGrid",
    "SpatialPartition",
    "CoarseGraining",
    "HistoryDistribution",
    "projector_volume",
    "classify",
    "coarsen",
    "uniform_graining",
    "graining_from_json",
    "graining_to_json",
]


@dataclass(frozen=True)
class StateSpace:
    """The single-time state space M.

    Parameters
    ----------
    kind : str
        ``"discrete-lattice"`` (V = site count) or ``"binned-continuum"``
        (V = total length, discretized onto ``cell_count`` equal cells).
    V : float
        Total volume of M; Tr over one time slot.
    cell_count : int
        Number of finest cells.
    boundary : str
        ``"periodic"`` or ``"open"``.
    cell_multiplicity : tuple of int, optional
        Microstate count each cell stands for.  When given, V must equal
        the exact sum of the multiplicities and bin volumes are computed by
        summing them (used for occupation-number chains whose "cells" are
        macrostates).
    """

    kind: str
    V: float
    cell_count: int
    boundary: str = "periodic"
    cell_multiplicity: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (DISCRETE, CONTINUUM):
            raise ValueError(f"unknown state-space kind: {self.kind!r}")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary rule: {self.boundary!r}")
        if not self.V > 0:
            raise ValueError("V must be positive")
        if self.cell_count < 1:
            raise ValueError("cell_count must be >= 1")
        if self.cell_multiplicity is not None:
            if self.kind != DISCRETE:
                raise ValueError("cell multiplicities require a discrete space")
            if len(self.cell_multiplicity) != self.cell_count:
                raise ValueError("need one multiplicity per cell")
            if any(m < 1 for m in self.cell_multiplicity):
                raise ValueError("multiplicities must be positive integers")
            total = sum(self.cell_multiplicity)
            if total != int(self.V):
                raise InvariantViolation(
                    f"multiplicities sum to {total}, but V = {self.V}"
                )
        elif self.kind == DISCRETE:
            if int(self.V) != self.V or int(self.V) != self.cell_count:
                raise InvariantViolation(
                    "discrete space needs integer V equal to cell_count"
                )
        else:
            # cell_count * cell_width must reproduce V; with cell_width
            # defined as V / cell_count this is exact by construction.
            pass

    @property
    def cell_width(self) -> float:
        """Physical width of one finest cell."""
        return self.V / self.cell_count

    @property
    def log2_V(self) -> float:
        return math.log2(self.V)

    def bin_log2_volume(self, partition: "SpatialPartition", b: int) -> float:
        """log2 of the single-time volume of bin ``b`` under ``partition``."""
        if not 0 <= b < partition.bin_count:
            raise ValueError(f"bin {b} out of range for {partition}")
        cpb = partition.cells_per_bin
        if self.cell_multiplicity is not None:
            total = sum(self.cell_multiplicity[b * cpb : (b + 1) * cpb])
            return math.log2(total)
        if self.kind == DISCRETE:
            return math.log2(cpb)
        return math.log2(partition.bin_width)


@dataclass(frozen=True)
class TimeGrid:
    """The finest-grained net of N times with step eta, plus the coarse subset.

    Slot k sits at physical time k*eta, counted from the initial condition
    at slot 0 (which is not part of the history).
    """

    N: int
    eta: float
    coarse_times: tuple[int, ...]

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        ts = tuple(int(t) for t in self.coarse_times)
        object.__setattr__(self, "coarse_times", ts)
        if not 1 <= len(ts) <= self.N:
            raise ValueError("need between 1 and N coarse times")
        if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError("coarse times must be strictly increasing")
        if ts[0] < 1 or ts[-1] > self.N:
            raise ValueError("coarse times must lie on the fine grid 1..N")

    @property
    def n(self) -> int:
        """Number of coarse times."""
        return len(self.coarse_times)

    @property
    def t_f(self) -> float:
        """Total duration N*eta."""
        return self.N * self.eta


@dataclass(frozen=True)
class SpatialPartition:
    """Uniform binning of the finest cells: bin i covers i*dx <= x < (i+1)*dx.

    ``bin_width`` is in the same units as the state-space volume; the
    cell->bin mapping is ``cell // cells_per_bin``, which matches the edge
    rule because cells are themselves left-closed intervals.
    """

    bin_width: float
    bin_count: int
    cell_count: int

    def __post_init__(self):
        if self.bin_count < 1 or self.cell_count < 1:
            raise ValueError("bin_count and cell_count must be >= 1")
        if self.cell_count % self.bin_count != 0:
            raise ValueError(
                f"{self.bin_count} bins do not evenly divide "
                f"{self.cell_count} cells"
            )
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")

    @classmethod
    def from_dx(cls, space: StateSpace, dx: float) -> "SpatialPartition":
        """Build the partition with bins of width ``dx`` over ``space``.

        ``dx`` must divide V so that bins are exhaustive and equal, and the
        implied bins must align with the finest cells.
        """
        ratio = space.V / dx
        bin_count = int(round(ratio))
        if bin_count < 1 or abs(ratio - bin_count) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"dx={dx} does not divide V={space.V}")
        if space.cell_count % bin_count != 0:
            raise ValueError(
                f"dx={dx} bins do not align with {space.cell_count} cells"
            )
        return cls(bin_width=dx, bin_count=bin_count, cell_count=space.cell_count)

    @property
    def cells_per_bin(self) -> int:
        return self.cell_count // self.bin_count

    def bin_of_cell(self, cell: int) -> int:
        if not 0 <= cell < self.cell_count:
            raise ValueError(f"cell {cell} outside 0..{self.cell_count - 1}")
        return cell // self.cells_per_bin

    def bin_of_x(self, x: float, boundary: str = "open") -> int:
        """Bin of a raw continuum coordinate, honoring the edge rule."""
        V = self.bin_width * self.bin_count
        if x < 0 or x > V:
            raise ValueError(f"state {x} outside [0, {V}]")
        b = int(x / self.bin_width)
        if b >= self.bin_count:  # x sits exactly on the upper domain edge
            b = 0 if boundary == "periodic" else self.bin_count - 1
        return b


class CoarseGraining:
    """A per-coarse-time stack of spatial partitions, optionally branch-dependent.

    Parameters
    ----------
    grid : TimeGrid
    partitions : sequence of SpatialPartition
        One per coarse time (the default partition at that time).
    branch_partitions : mapping, optional
        ``{(k, prefix): SpatialPartition}`` overriding the partition used at
        coarse-time index ``k`` (0-based) when the labels recorded at the
        earlier coarse times equal ``prefix``.  Every override must keep the
        same cell_count, so each branch still partitions the space exactly.
    """

    def __init__(
        self,
        grid: TimeGrid,
        partitions: Sequence[SpatialPartition],
        branch_partitions: Mapping[tuple[int, tuple[int, ...]], SpatialPartition]
        | None = None,
    ):
        if len(partitions) != grid.n:
            raise ValueError("need exactly one partition per coarse time")
        cells = {p.cell_count for p in partitions}
        if branch_partitions:
            cells |= {p.cell_count for p in branch_partitions.values()}
            for (k, prefix) in branch_partitions:
                if not 0 <= k < grid.n:
                    raise ValueError(f"branch key time index {k} out of range")
                if len(prefix) != k:
                    raise ValueError(
                        "branch prefix must list one label per earlier time"
                    )
        if len(cells) != 1:
            raise ValueError("all partitions must share one cell_count")
        self.grid = grid
        self.partitions = tuple(partitions)
        self.branch_partitions = dict(branch_partitions) if branch_partitions else {}

    @property
    def cell_count(self) -> int:
        return self.partitions[0].cell_count

    @property
    def branch_dependent(self) -> bool:
        return bool(self.branch_partitions)

    def partition_at(
        self, k: int, prefix: tuple[int, ...] = ()
    ) -> SpatialPartition:
        """Partition in force at coarse-time index ``k`` on branch ``prefix``."""
        return self.branch_partitions.get((k, tuple(prefix)), self.partitions[k])

    def __repr__(self) -> str:
        bins = "x".join(str(p.bin_count) for p in self.partitions)
        tag = "+branches" if self.branch_dependent else ""
        return f"CoarseGraining(times={self.grid.coarse_times}, bins={bins}{tag})"


@dataclass(frozen=True, eq=False)
class HistoryDistribution:
    """Probabilities and log2 projector volumes of a set of history classes.

    ``labels[i]`` is the bin-index tuple of class i (earliest coarse time
    first), ``probs[i]`` its probability, ``log2_volumes[i]`` its
    log2 Tr(P_α), and ``log2_total`` is log2 Tr(I) = N log2 V.
    """

    labels: tuple[tuple[int, ...], ...]
    probs: np.ndarray
    log2_volumes: np.ndarray
    log2_total: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        vols = np.asarray(self.log2_volumes, dtype=float)
        if len(self.labels) != probs.size or probs.size != vols.size:
            raise ValueError("labels, probs and volumes must align")
        if probs.size == 0:
            raise ValueError("a distribution needs at least one class")
        if probs.min(initial=0.0) < -1e-12:
            raise InvariantViolation("negative class probability")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise InvariantViolation(f"class probabilities sum to {total}")
        if np.any(vols > self.log2_total + 1e-9):
            raise InvariantViolation("class volume exceeds Tr(I)")
        probs = np.clip(probs, 0.0, None)
        probs.flags.writeable = False
        vols.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "log2_volumes", vols)
        object.__setattr__(self, "labels", tuple(tuple(l) for l in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def to_dict(self) -> dict:
        return {
            "units": "bits",
            "log2_total": self.log2_total,
            "classes": [
                {"label": list(l), "p": float(p), "log2_volume": float(v)}
                for l, p, v in zip(self.labels, self.probs, self.log2_volumes)
            ],
        }


def projector_volume(
    cg: CoarseGraining,
    label: Sequence[int],
    space: StateSpace,
    grid: TimeGrid | None = None,
) -> float:
    """log2 Tr(P_α): log2 volume of the class ``label`` under ``cg``.

    Each coarse time contributes the log2 volume of its recorded bin; each
    of the N - n unconstrained slots contributes log2 V.  For a uniform
    graining with n = N/Dt coarse times and bins of width dx this reduces to
    (N/Dt) log2 dx + N (1 - 1/Dt) log2 V.
    """
    grid = grid if grid is not None else cg.grid
    if grid is not cg.grid and grid != cg.grid:
        raise ValueError("grid does not match the coarse-graining")
    label = tuple(int(b) for b in label)
    if len(label) != grid.n:
        raise ValueError(
            f"label {label} has {len(label)} entries, expected {grid.n}"
        )
    if space.cell_count != cg.cell_count:
        raise ValueError("state space does not match the coarse-graining")
    total = 0.0
    for k, b in enumerate(label):
        part = cg.partition_at(k, label[:k])
        if not 0 <= b < part.bin_count:
            raise ValueError(f"unknown class label {label}: bin {b} at time {k}")
        total += space.bin_log2_volume(part, b)
    total += (grid.N - grid.n) * space.log2_V
    return total


def classify(
    fine_history: Sequence, cg: CoarseGraining, boundary: str = "open"
) -> tuple[int, ...]:
    """Class label of a fine-grained history (one state per fine time).

    States may be integer cell indices or raw continuum coordinates; raw
    coordinates are binned by the left-closed edge rule, with the upper
    domain edge wrapping (periodic) or clamping to the last bin (open).
    """
    if len(fine_history) != cg.grid.N:
        raise ValueError(
            f"history has {len(fine_history)} states, grid has N={cg.grid.N}"
        )
    label: tuple[int, ...] = ()
    for k, t in enumerate(cg.grid.coarse_times):
        part = cg.partition_at(k, label)
        state = fine_history[t - 1]
        if isinstance(state, (int, np.integer)):
            b = part.bin_of_cell(int(state))
        else:
            b = part.bin_of_x(float(state), boundary=boundary)
        label = label + (b,)
    return label


def coarsen(cg: CoarseGraining, mode: str, factor: int) -> CoarseGraining:
    """Coarsen a graining; every output class is a union of input classes.

    ``merge-bins`` fuses ``factor`` adjacent bins at every coarse time;
    ``drop-times`` keeps every ``factor``-th coarse time (the last one is
    always kept, so uniform grainings stay anchored at N).  ``factor`` must
    divide the bin count (merge-bins) or the coarse-time count (drop-times).
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    if cg.branch_dependent:
        raise NotImplementedError(
            "coarsen is only defined for branch-independent grainings"
        )
    if mode == "merge-bins":
        new_parts = []
        for p in cg.partitions:
            if p.bin_count % factor != 0:
                raise ValueError(
                    f"factor {factor} does not divide {p.bin_count} bins"
                )
            new_parts.append(
                SpatialPartition(
                    bin_width=p.bin_width * factor,
                    bin_count=p.bin_count // factor,
                    cell_count=p.cell_count,
                )
            )
        return CoarseGraining(cg.grid, new_parts)
    if mode == "drop-times":
        n = cg.grid.n
        if n % factor != 0:
            raise ValueError(f"factor {factor} does not divide {n} coarse times")
        keep = list(range(factor - 1, n, factor))
        grid = TimeGrid(
            cg.grid.N,
            cg.grid.eta,
            tuple(cg.grid.coarse_times[i] for i in keep),
        )
        return CoarseGraining(grid, [cg.partitions[i] for i in keep])
    raise ValueError(f"unknown coarsening mode: {mode!r}")


def uniform_graining(
    space: StateSpace, N: int, eta: float, dx: float, dt: int
) -> CoarseGraining:
    """The uniform graining with bin width ``dx`` at times dt, 2dt, ..., N.

    ``dt`` is in fine-step units and must divide N; ``dx`` must divide V and
    align with the finest cells.  Non-divisible requests are rejected rather
    than padded, since padding would change class volumes.
    """
    dt = int(dt)
    if dt < 1 or N % dt != 0:
        raise ValueError(f"dt={dt} does not divide N={N}")
    part = SpatialPartition.from_dx(space, dx)
    grid = TimeGrid(N, eta, tuple(range(dt, N + 1, dt)))
    return CoarseGraining(grid, [part] * grid.n)


def graining_from_json(
    spec: str | Mapping, space: StateSpace, N: int, eta: float
) -> CoarseGraining:
    """Build a graining from a JSON object like {"dx": 2, "dt": 4}.

    ``times`` (a list of fine-time indices) may be given instead of ``dt``.
    """
    obj = json.loads(spec) if isinstance(spec, str) else dict(spec)
    unknown = set(obj) - {"dx", "dt", "times"}
    if unknown:
        raise ValueError(f"unknown graining keys: {sorted(unknown)}")
    if "dx" not in obj:
        raise ValueError("graining spec needs 'dx'")
    part = SpatialPartition.from_dx(space, float(obj["dx"]))
    if "times" in obj:
        times = tuple(int(t) for t in obj["times"])
    elif "dt" in obj:
        dt = int(obj["dt"])
        if dt < 1 or N % dt != 0:
            raise ValueError(f"dt={dt} does not divide N={N}")
        times = tuple(range(dt, N + 1, dt))
    else:
        raise ValueError("graining spec needs 'dt' or 'times'")
    grid = TimeGrid(N, eta, times)
    return CoarseGraining(grid, [part] * grid.n)


def graining_to_json(cg: CoarseGraining) -> dict:
    """Serialize a branch-independent uniform-bin graining."""
    if cg.branch_dependent:
        raise ValueError("branch-dependent grainings have no JSON form")
    widths = {p.bin_width for p in cg.partitions}
    if len(widths) != 1:
        raise ValueError("per-time bin widths differ; no single 'dx'")
    return {"dx": cg.partitions[0].bin_width, "times": list(cg.grid.coarse_times)}
