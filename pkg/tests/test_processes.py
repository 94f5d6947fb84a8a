"""Stochastic models and the exact class-probability pipeline.

Checks, in rough order of importance:
    - exact_history_probs agrees with full path enumeration on random instances
    - the closed-form urn j-step law agrees with float matrix powers
    - kernels are column-stochastic and gap factories compose physically
    - small hand-derivable cases come out exactly
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histent import (
    CONTINUUM,
    DISCRETE,
    ClassCapExceeded,
    CoarseGraining,
    InitialCondition,
    InvariantViolation,
    MarkovKernel,
    SpatialPartition,
    StateSpace,
    TimeGrid,
    brownian_step,
    diffusion_kernel,
    exact_history_probs,
    random_walk_kernel,
    uniform_graining,
    urn_coefficients,
    urn_exact_prob,
    urn_jstep_matrix,
    urn_kernel,
    urn_space,
    urn_transition,
)
from histent.processes import BrownianParams, UrnParams
from conftest import enumerate_classes


# -- Kernels ------------------------------------------------------------------

def test_markov_kernel_rejects_non_stochastic():
    with pytest.raises(InvariantViolation):
        MarkovKernel(np.array([[0.5, 0.1], [0.4, 0.9]]), dt=1.0)
    with pytest.raises(InvariantViolation):
        MarkovKernel(np.array([[1.1, 0.0], [-0.1, 1.0]]), dt=1.0)
    with pytest.raises(ValueError):
        MarkovKernel(np.ones((2, 3)) / 2.0, dt=1.0)


def test_k_step_matrix_matches_matrix_power():
    rng = np.random.default_rng(5)
    m = rng.gamma(1.0, size=(5, 5))
    m /= m.sum(axis=0, keepdims=True)
    kernel = MarkovKernel(m, dt=1.0)
    for k in (1, 2, 3, 7):
        np.testing.assert_allclose(
            kernel.k_step_matrix(k), np.linalg.matrix_power(m, k), atol=1e-13
        )


def test_random_walk_kernel_structure():
    space = StateSpace(DISCRETE, 8.0, 8)
    kernel = random_walk_kernel(space)
    m = kernel.matrix
    for c in range(8):
        assert m[(c + 1) % 8, c] == 0.5
        assert m[(c - 1) % 8, c] == 0.5
        assert m[:, c].sum() == 1.0
    with pytest.raises(ValueError):
        random_walk_kernel(StateSpace(DISCRETE, 8.0, 8, boundary="open"))
    with pytest.raises(ValueError):
        random_walk_kernel(StateSpace(CONTINUUM, 8.0, 8))


def test_diffusion_kernel_moments_and_gaps():
    space = StateSpace(CONTINUUM, 20.0, 200)
    part = SpatialPartition(space.cell_width, 200, 200)
    D, dt = 1.0, 0.25
    kernel = diffusion_kernel(D, dt, part)
    np.testing.assert_allclose(kernel.matrix.sum(axis=0), 1.0, atol=1e-12)
    # one step from the center: binned variance ~ D dt / 2 (+ width^2/12)
    centers = (np.arange(200) + 0.5) * space.cell_width
    col = kernel.matrix[:, 100]
    mean = (centers * col).sum()
    var = ((centers - mean) ** 2 * col).sum()
    assert var == pytest.approx(D * dt / 2.0 + space.cell_width**2 / 12.0, rel=1e-3)
    # the k-step gap is the variance-k*D*dt/2 Gaussian, not a matrix power
    g2 = kernel.k_step_matrix(2)
    col2 = g2[:, 100]
    mean2 = (centers * col2).sum()
    var2 = ((centers - mean2) ** 2 * col2).sum()
    assert var2 == pytest.approx(D * 2 * dt / 2.0 + space.cell_width**2 / 12.0, rel=1e-3)
    with pytest.raises(ValueError):
        diffusion_kernel(0.0, dt, part)
    with pytest.raises(ValueError):
        diffusion_kernel(D, -0.1, part)


def test_brownian_step_damping_without_noise():
    params = BrownianParams(Gamma=0.5, a=0.0, m=2.0, x0=0.0, p0=1.0)
    rng = np.random.default_rng(0)
    x, p = brownian_step((0.0, 1.0), 0.1, params, rng)
    assert x == pytest.approx(0.05)          # x += (p/m) dt
    assert p == pytest.approx(1.0 - 2 * 0.5 * 1.0 * 0.1)
    # array states pass through elementwise
    xs, ps = brownian_step((np.zeros(3), np.ones(3)), 0.1, params, rng)
    assert xs.shape == (3,)
    np.testing.assert_allclose(xs, 0.05)


def test_initial_condition_helpers():
    pm = InitialCondition.point_mass(2, 5)
    assert pm.probs[2] == 1.0 and pm.probs.sum() == 1.0
    un = InitialCondition.uniform(4)
    np.testing.assert_allclose(un.probs, 0.25)
    with pytest.raises(InvariantViolation):
        InitialCondition(np.array([0.5, 0.6]))
    with pytest.raises(InvariantViolation):
        InitialCondition(np.array([1.5, -0.5]))


# -- Urn model ------------------------------------------------------------------

def test_urn_transition_hand_values():
    # 4 balls, 1 in urn A: down 1/4, up 3/4
    assert urn_transition(1, 2) == {0: 0.25, 2: 0.75}
    assert urn_transition(0, 2) == {1: 1.0}
    assert urn_transition(4, 2) == {3: 1.0}
    with pytest.raises(ValueError):
        urn_transition(5, 2)
    with pytest.raises(ValueError):
        UrnParams(2, -1)


def test_urn_kernel_is_the_transition_table():
    kernel = urn_kernel(3)
    m = kernel.matrix
    np.testing.assert_allclose(m.sum(axis=0), 1.0, atol=1e-15)
    for n in range(7):
        for n2, p in urn_transition(n, 3).items():
            assert m[n2, n] == p


def test_urn_coefficients_small_cases():
    # R=1: (1-z)^{1-l} (1+z)^{1+l} for l = -1, 0, 1
    np.testing.assert_array_equal(urn_coefficients(1, -1), [1, -2, 1])
    np.testing.assert_array_equal(urn_coefficients(1, 0), [1, 0, -1])
    np.testing.assert_array_equal(urn_coefficients(1, 1), [1, 2, 1])
    with pytest.raises(ValueError):
        urn_coefficients(1, 2)


def test_urn_exact_prob_closed_form_vs_matrix_power():
    for R in (1, 2, 3, 5):
        m = urn_kernel(R).matrix
        power = np.eye(2 * R + 1)
        for j in range(13):
            exact = urn_jstep_matrix(R, j)
            np.testing.assert_allclose(exact, power, atol=1e-12)
            power = m @ power


def test_urn_jstep_delta_at_zero():
    np.testing.assert_array_equal(urn_jstep_matrix(4, 0), np.eye(9))


@settings(deadline=None, max_examples=60)
@given(st.integers(1, 6), st.integers(0, 20), st.integers(0, 12))
def test_urn_exact_prob_is_a_distribution(R, j, n0_raw):
    n0 = n0_raw % (2 * R + 1)
    probs = [urn_exact_prob(nj, j, n0, R) for nj in range(2 * R + 1)]
    assert all(0.0 <= p <= 1.0 for p in probs)
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)
    # parity: the count changes by one each step
    for nj, p in enumerate(probs):
        if (nj - n0 - j) % 2 == 1:
            assert p == 0.0


def test_urn_space_volumes():
    space = urn_space(2)
    assert space.V == 16.0
    assert space.cell_count == 5
    assert space.cell_multiplicity == (1, 4, 6, 4, 1)
    part = SpatialPartition(1.0, 5, 5)
    assert space.bin_log2_volume(part, 2) == pytest.approx(math.log2(6))


# -- Exact class probabilities ---------------------------------------------------

def test_exact_history_probs_against_enumeration(small_instances):
    for kernel, rho0, cg, space in small_instances:
        hd = exact_history_probs(kernel, rho0, cg, space)
        oracle = enumerate_classes(kernel.matrix, rho0.probs, cg)
        got = dict(zip(hd.labels, hd.probs))
        for lab, (p, count) in oracle.items():
            if p > 0.0:
                assert got.pop(lab) == pytest.approx(p, abs=1e-12)
        assert not got  # nothing extra: zero-probability classes stay absent
        assert hd.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_exact_history_probs_point_mass_walk():
    """One step of the walk from a point mass: two classes, half each."""
    space = StateSpace(DISCRETE, 8.0, 8)
    kernel = random_walk_kernel(space)
    rho0 = InitialCondition.point_mass(4, 8)
    cg = uniform_graining(space, 1, 1.0, 1.0, 1)
    hd = exact_history_probs(kernel, rho0, cg)
    assert set(hd.labels) == {(3,), (5,)}
    np.testing.assert_allclose(hd.probs, 0.5)


def test_exact_history_probs_class_cap():
    space = StateSpace(DISCRETE, 8.0, 8)
    kernel = random_walk_kernel(space)
    rho0 = InitialCondition.uniform(8)
    cg = uniform_graining(space, 3, 1.0, 1.0, 1)
    with pytest.raises(ClassCapExceeded):
        exact_history_probs(kernel, rho0, cg, class_cap=4)


def test_exact_history_probs_branch_dependent():
    """Branch overrides must change the classes actually produced."""
    space = StateSpace(DISCRETE, 4.0, 4)
    kernel = random_walk_kernel(space)
    rho0 = InitialCondition.uniform(4)
    grid = TimeGrid(N=2, eta=1.0, coarse_times=(1, 2))
    coarse = SpatialPartition(2.0, 2, 4)
    fine = SpatialPartition(1.0, 4, 4)
    cg = CoarseGraining(grid, [coarse, coarse], {(1, (0,)): fine})
    hd = exact_history_probs(kernel, rho0, cg)
    widths = {lab[0]: set() for lab in hd.labels}
    for lab in hd.labels:
        widths[lab[0]].add(lab[1])
    assert max(widths[0]) > 1   # branch 0 resolves all four cells
    assert max(widths[1]) <= 1  # branch 1 keeps two bins
    # probabilities still sum to one across the mixed graining
    assert hd.probs.sum() == pytest.approx(1.0, abs=1e-12)
