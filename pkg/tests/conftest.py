"""Shared brute-force oracles and instance factories.

None of these reuse the package's propagation, volume, or entropy code:
class probabilities come from summing over every fine-grained path, volumes
from counting the paths inside each class, and maximum entropies from a
generic convex solver.  All are exponential in N and meant for V <= 6,
N <= 4, where V^N <= 1296 keeps full enumeration instant.
"""
import itertools
import math

import numpy as np
import pytest

from histent.experiments import random_markov_instance


# -- Path-level oracles -------------------------------------------------------

def path_probability(matrix, rho0_probs, path):
    """p(x1..xN) = sum_x0 rho0(x0) K[x1,x0] K[x2,x1] ... K[xN,x(N-1)]."""
    total = 0.0
    for x0, w in enumerate(rho0_probs):
        q = float(w)
        prev = x0
        for x in path:
            q *= matrix[x, prev]
            prev = x
        total += q
    return total


def label_of_path(path, cg):
    """Class label, recomputed from raw partition data (not classify())."""
    label = ()
    for k, t in enumerate(cg.grid.coarse_times):
        part = cg.partition_at(k, label)
        label = label + (path[t - 1] // part.cells_per_bin,)
    return label


def enumerate_classes(matrix, rho0_probs, cg):
    """{label: [probability, fine-path count]} by full path enumeration."""
    V = matrix.shape[0]
    N = cg.grid.N
    out = {}
    for path in itertools.product(range(V), repeat=N):
        p = path_probability(matrix, rho0_probs, path)
        lab = label_of_path(path, cg)
        if lab not in out:
            out[lab] = [0.0, 0]
        out[lab][0] += p
        out[lab][1] += 1
    return out


def oracle_shs(matrix, rho0_probs, cg):
    """-sum p log2 p + sum p log2(path count), straight off the enumeration."""
    s = 0.0
    for p, count in enumerate_classes(matrix, rho0_probs, cg).values():
        if p > 0.0:
            s += p * (math.log2(count) - math.log2(p))
    return s


def oracle_ix(matrix, rho0_probs, cg, x):
    """-sum p log2 p + x sum p log2(count / V^N)."""
    V = matrix.shape[0]
    log2_total = cg.grid.N * math.log2(V)
    s = 0.0
    for p, count in enumerate_classes(matrix, rho0_probs, cg).values():
        if p > 0.0:
            s += p * (-math.log2(p) + x * (math.log2(count) - log2_total))
    return s


def oracle_path_entropy(matrix, rho0_probs, N):
    """Shannon entropy (bits) of the full fine-grained path law."""
    V = matrix.shape[0]
    s = 0.0
    for path in itertools.product(range(V), repeat=N):
        p = path_probability(matrix, rho0_probs, path)
        if p > 0.0:
            s -= p * math.log2(p)
    return s


# -- Convex-solver oracle -----------------------------------------------------

def jaynes_numeric_shs(matrix, rho0_probs, cg):
    """Directly maximize -sum f ln f over fine-path laws matching every
    class probability.  Independent numerical oracle for S_hs (bits)."""
    import cvxpy as cp

    V = matrix.shape[0]
    N = cg.grid.N
    paths = list(itertools.product(range(V), repeat=N))
    labels = sorted({label_of_path(p, cg) for p in paths})
    index = {lab: i for i, lab in enumerate(labels)}
    A = np.zeros((len(labels), len(paths)))
    b = np.zeros(len(labels))
    for col, path in enumerate(paths):
        row = index[label_of_path(path, cg)]
        A[row, col] = 1.0
        b[row] += path_probability(matrix, rho0_probs, path)
    f = cp.Variable(len(paths), nonneg=True)
    problem = cp.Problem(cp.Maximize(cp.sum(cp.entr(f))), [A @ f == b])
    problem.solve(solver="CLARABEL")
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed: {problem.status}")
    return float(problem.value) / math.log(2.0)


def maxent_numeric(C, targets, bonus_bits=None):
    """Maximize -sum r log2 r + bonus.r subject to C r = targets, r >= 0."""
    import cvxpy as cp

    r = cp.Variable(C.shape[1], nonneg=True)
    obj = cp.sum(cp.entr(r)) / math.log(2.0)
    if bonus_bits is not None:
        obj = obj + bonus_bits @ r
    problem = cp.Problem(cp.Maximize(obj), [C @ r == targets])
    problem.solve(solver="CLARABEL")
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed: {problem.status}")
    return float(problem.value)


# -- Fixtures -----------------------------------------------------------------

@pytest.fixture(scope="session")
def small_instances():
    """Twenty seeded (kernel, rho0, cg, space) tuples for unit-level checks."""
    return [random_markov_instance(seed) for seed in range(20)]
