import numpy as np
import pytest
from hypothesis import given, strategies as st

from singlecopy import kernels
from singlecopy.densmat import validate_density
from singlecopy.errors import BudgetExhausted, MOutOfRange, NotTwoQubit
from singlecopy.locc import LocalFilter, apply_filter_pair
from singlecopy.optimize import (
    Budget,
    FilterClass,
    correlation_matrix,
    diagonal_filter_fraction,
    fidelity_via_N,
    fsup_estimate,
    oneway_analytic_optimum,
    restart_points,
)
from singlecopy.states import eq10_state, isotropic, max_entangled, random_density

SMALL = Budget(restarts=8, max_iters=4000)


def test_one_way_bob_reaches_two_thirds():
    rep = fsup_estimate(eq10_state(0.5, 2), FilterClass("one_way_B_filters"), SMALL)
    assert abs(rep.best_F - 2 / 3) < 1e-6
    A, B = (f.mat for f in rep.best_filters)
    assert np.allclose(A, np.eye(2))
    ratio = np.abs(B[0, 0] / B[1, 1])
    assert abs(ratio - 3.0) < 1e-3
    assert abs(B[0, 1]) < 1e-4 and abs(B[1, 0]) < 1e-4


def test_report_fields():
    rep = fsup_estimate(eq10_state(0.5, 2), FilterClass("two_way"), SMALL)
    hist = [f for _, f in rep.history]
    assert len(hist) == SMALL.restarts
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] == pytest.approx(rep.best_F, abs=1e-9)
    assert 0 < rep.success_prob <= 1
    out = apply_filter_pair(eq10_state(0.5, 2), *rep.best_filters)
    assert out.achieved_F == pytest.approx(rep.best_F, abs=1e-9)
    doc = rep.to_json_dict()
    assert doc["filter_class"] == "two_way" and doc["m"] == 2


def test_same_seed_same_report():
    s = random_density(2, 2, 3, 4)
    a = fsup_estimate(s, FilterClass("two_way"), SMALL).to_json_dict()
    b = fsup_estimate(s, FilterClass("two_way"), SMALL).to_json_dict()
    assert a == b


def test_restart_points_prefix_stable():
    short = restart_points(2, 2, kernels.MODE_TWO_WAY, Budget(restarts=3, seed=5))
    long = restart_points(2, 2, kernels.MODE_TWO_WAY, Budget(restarts=6, seed=5))
    assert np.array_equal(short, long[:3])


def test_unitary_class_cannot_raise_isotropic_fraction():
    s = isotropic(0.6, 2)
    rep = fsup_estimate(s, FilterClass("deterministic_two_way"), SMALL)
    assert rep.best_F == pytest.approx(0.6, abs=1e-9)


def test_strict_budget_raises():
    with pytest.raises(BudgetExhausted):
        fsup_estimate(random_density(2, 2, 4, 0), FilterClass("two_way"),
                      Budget(restarts=2, max_iters=3), strict=True)


def test_bad_inputs():
    with pytest.raises(ValueError):
        FilterClass("three_way")
    with pytest.raises(MOutOfRange):
        fsup_estimate(eq10_state(0.5, 2), FilterClass("two_way", m=3), SMALL)
    with pytest.raises(ValueError, match="unknown"):
        Budget.from_json_dict({"restarts": 2, "iters": 3})


def test_correlation_matrix_of_max_entangled():
    t = correlation_matrix(max_entangled(2, 2).density()).t
    assert np.allclose(t, np.diag([1, -1, 1]))
    assert fidelity_via_N(validate_density(np.eye(4) / 4, 2, 2)) == pytest.approx(0.25)
    with pytest.raises(NotTwoQubit):
        correlation_matrix(eq10_state(0.5, 3))


@given(st.floats(0, 1))
def test_fidelity_via_N_on_isotropic(F):
    # isotropic states with F >= 1/4 are already in the optimal local frame
    val = fidelity_via_N(isotropic(F, 2))
    if F >= 0.25:
        assert val == pytest.approx(F, abs=1e-12)
    else:
        assert val >= F


@given(st.floats(0.01, 0.99), st.floats(0.01, 5))
def test_diagonal_fraction_matches_simulation(p, t):
    out = apply_filter_pair(eq10_state(p, 2), LocalFilter.identity("A", 2),
                            LocalFilter("B", np.diag([1.0, t])))
    assert diagonal_filter_fraction(p, t) == pytest.approx(out.achieved_F, abs=1e-12)


@given(st.floats(0.05, 0.95))
def test_oneway_optimum_is_grid_max(p):
    t_star, F_star = oneway_analytic_optimum(p)
    grid = np.linspace(1e-4, 10, 100001)
    vals = diagonal_filter_fraction(p, grid)
    assert F_star >= vals.max() - 1e-12
    assert abs(grid[vals.argmax()] - t_star) < 1e-3
    with pytest.raises(ValueError):
        oneway_analytic_optimum(1.0)


def _bell_diagonal(t):
    from singlecopy.optimize import PAULI

    m = np.eye(4, dtype=complex) + sum(c * np.kron(s, s) for c, s in zip(t, PAULI))
    return validate_density(m / 4, 2, 2)


@pytest.mark.parametrize("seed", range(4))
def test_N_formula_matches_unitary_search_when_det_negative(seed):
    s = random_density(2, 2, 4, seed)
    assert np.linalg.det(correlation_matrix(s).t) < 0
    rep = fsup_estimate(s, FilterClass("deterministic_two_way"), SMALL)
    assert rep.best_F == pytest.approx(fidelity_via_N(s), abs=1e-9)


def test_N_formula_is_only_a_bound_when_det_positive():
    # T = diag(0.3, 0.3, 0.3): local unitaries reach (1 + 0.3 + 0.3 - 0.3)/4
    s = _bell_diagonal([0.3, 0.3, 0.3])
    rep = fsup_estimate(s, FilterClass("deterministic_two_way"), SMALL)
    assert rep.best_F == pytest.approx(0.325, abs=1e-9)
    assert fidelity_via_N(s) == pytest.approx(0.475, abs=1e-12)
