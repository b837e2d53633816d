from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singlecopy.densmat import validate_density
from singlecopy.errors import DimMismatch, MOutOfRange, NotTracePreserving
from singlecopy.locc import (
    KrausChannel,
    LocalFilter,
    apply_filter_pair,
    balance_marginal,
    depolarizing_channel,
    identity_channel,
    random_channel,
    unitary_channel,
)
from singlecopy.optimize import Budget
from singlecopy.protocols import (
    ScdBudget,
    ScdCertificate,
    channel_dual_state,
    classify_dual,
    dual_marginal_error,
    ec_feasibility,
    quasidistill_closed_form,
    quasidistill_filters,
    quasidistill_sequence,
    rank_condition,
    scd_check,
    scd_search,
    teleport_fidelity,
)
from singlecopy.states import ab_state, eq10_state, isotropic, random_density

SMALL = Budget(restarts=8, max_iters=6000)


@given(st.floats(0.01, 0.99), st.integers(1, 500), st.sampled_from([2, 3, 4]))
def test_quasidistill_matches_closed_form(p, n, d):
    (row,) = quasidistill_sequence(p, d, [n])
    assert row.F_simulated == pytest.approx(row.F_closed_form, abs=1e-12)
    assert row.p_simulated == pytest.approx(row.p_closed_form, abs=1e-12)


def test_quasidistill_literal_kraus_squares_n():
    # taking the diagonal matrices themselves as Kraus operators is step n^2
    p, n = 0.3, 7
    A = np.diag([1 / n, 1.0])
    B = np.diag([1.0, 1 / n])
    out = apply_filter_pair(eq10_state(p, 2), LocalFilter("A", A), LocalFilter("B", B))
    assert out.achieved_F == pytest.approx(quasidistill_closed_form(p, n * n)[0], abs=1e-12)


def test_quasidistill_filters_are_effects_roots():
    A, B = quasidistill_filters(4, 3)
    assert np.allclose(A @ A, np.diag([0.25, 1, 1]))
    assert np.allclose(B @ B, np.diag([1, 0.25, 0.25]))
    with pytest.raises(ValueError):
        quasidistill_filters(0.5, 2)
    with pytest.raises(ValueError):
        quasidistill_sequence(1.0, 2, [1])


def test_quasidistill_F_tends_to_one():
    rows = quasidistill_sequence(0.2, 3, [1, 10, 100, 10000])
    Fs = [r.F_simulated for r in rows]
    assert Fs == sorted(Fs) and Fs[-1] > 0.999
    assert rows[-1].p_simulated < 1e-4


def test_scd_basis_certificate():
    s = eq10_state(0.5, 3)
    cert = scd_search(s, 2)
    assert cert is not None and scd_check(s, cert)
    assert cert.schmidt_rank == 2


def test_scd_search_finds_rotated_certificate():
    rng = np.random.default_rng(2)
    u, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    k = np.kron(u, u.conj())
    s0 = eq10_state(0.5, 3)
    s = validate_density(k @ s0.mat @ k.conj().T, 3, 3)
    cert = scd_search(s, 2, ScdBudget(perturbations=400))
    assert cert is not None and scd_check(s, cert)
    # the basis pairs fail here, so the certificate came from the hill climb
    assert not np.allclose(np.abs(cert.proj_a), np.eye(3)[:, [0, 2]])


def test_scd_check_rejects():
    s = eq10_state(0.5, 3)
    e = np.eye(3, dtype=complex)
    v = scd_check(s, ScdCertificate(e[:, [0, 1]], e[:, [0, 1]]))
    assert not v and "mixed" in v.reason
    v = scd_check(s, ScdCertificate(e[:, [0, 1]], e[:, [1, 2]]))
    assert not v
    with pytest.raises(DimMismatch):
        scd_check(s, ScdCertificate(e[:, [0, 1]], e[:, [0]]))
    with pytest.raises(DimMismatch):
        scd_check(s, ScdCertificate(2 * e[:, [0, 1]], e[:, [0, 1]]))


@given(st.integers(2, 9), st.integers(0, 1000))
def test_rank_condition_full_m(rank, seed):
    s = random_density(3, 3, rank, seed)
    assert not rank_condition(s, 3)
    assert rank_condition(s, 2) == (rank <= 6)
    assert scd_search(s, 3) is None


def test_rank_condition_m_range():
    with pytest.raises(MOutOfRange):
        rank_condition(eq10_state(0.5, 2), 3)


@given(st.fractions(0, 1), st.integers(2, 10))
def test_teleport_exact(F, d):
    f = teleport_fidelity(F, d)
    assert isinstance(f, Fraction)
    assert f == (d * F + 1) / Fraction(d + 1)
    assert (f < 1) == (F < 1)


def test_teleport_float_and_bounds():
    assert teleport_fidelity(1.0, 4) == 1.0
    assert teleport_fidelity(0.5, 2) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        teleport_fidelity(1.5, 2)
    with pytest.raises(ValueError):
        teleport_fidelity(0.5, 1)


@given(st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_dual_marginal_is_maximally_mixed(seed, d):
    dual = channel_dual_state(random_channel(d, 3, seed))
    assert dual_marginal_error(dual) <= 1e-10


def test_dual_of_unitary_is_pure():
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    dual = channel_dual_state(unitary_channel(h))
    assert dual.is_pure


def test_ec_verdicts():
    assert ec_feasibility(identity_channel(2)).verdict == "perfect_probabilistic"
    assert ec_feasibility(depolarizing_channel(2, 0.02)).verdict == "no_perfect_correction"
    v = classify_dual(ab_state(0.6, 0.8), SMALL)
    assert v.verdict == "quasi_probabilistic_candidate"
    assert v.evidence["fsup_two_way"] >= 0.999


def test_ec_balanced_dual_channel():
    from singlecopy.locc import channel_from_dual

    ch = channel_from_dual(balance_marginal(ab_state(0.6, 0.8)))
    assert ec_feasibility(ch, SMALL).verdict == "quasi_probabilistic_candidate"


def test_ec_inconclusive_for_rank_deficient_mixed_dual():
    # isotropic-like mixture restricted to a rank-3 subspace of a 2x2 system
    s = isotropic(0.5, 2)
    evals, vecs = np.linalg.eigh(s.mat)
    keep = vecs[:, 1:]
    m = keep @ np.diag([0.2, 0.3, 0.5]) @ keep.conj().T
    v = classify_dual(validate_density(m, 2, 2), SMALL)
    assert v.verdict == "inconclusive"
    assert v.evidence["fsup_two_way"] < 0.999


def test_dual_rejects_non_tp():
    ch = identity_channel(2)
    object.__setattr__(ch, "kraus_ops", (0.5 * np.eye(2),))
    with pytest.raises(NotTracePreserving):
        channel_dual_state(ch)
    assert isinstance(ch, KrausChannel)
