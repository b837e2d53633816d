"""End-to-end procedures built on states, filters and the optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable

import numpy as np

from .densmat import DensityMatrix, hermitize, partial_trace, schmidt_rank
from .errors import DimMismatch, MOutOfRange, NotTracePreserving
from .locc import (
    PROB_FLOOR,
    TP_TOL,
    KrausChannel,
    LocalFilter,
    apply_channel,
    apply_filter_pair,
    tp_error,
)
from .optimize import Budget, FilterClass, fsup_estimate
from .states import eq10_state, max_entangled

PURITY_TOL = 1e-9
ORTHO_TOL = 1e-9
QUASI_THRESHOLD = 1.0 - 1e-3


# -- quasi-distillation -------------------------------------------------------


@dataclass(frozen=True)
class QuasiDistillRow:
    n: int
    F_simulated: float
    F_closed_form: float
    p_simulated: float
    p_closed_form: float


def quasidistill_filters(n: float, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Kraus filters of the n-th step on a d x d system.

    The measurement effects are diag(1/n, 1, ..., 1) for Alice and
    diag(1, 1/n, ..., 1/n) for Bob; the filters returned are their square
    roots.
    """
    if n < 1:
        raise ValueError(f"n={n} must be at least 1")
    a = np.ones(d)
    a[0] = n**-0.5
    b = np.full(d, n**-0.5)
    b[0] = 1.0
    return np.diag(a), np.diag(b)


def quasidistill_closed_form(p: float, n: float) -> tuple[float, float]:
    """(F, success probability) after step n: np/((n-1)p+1), (p + (1-p)/n)/n."""
    return n * p / ((n - 1) * p + 1), (p + (1 - p) / n) / n


def quasidistill_sequence(p: float, d: int, n_values: Iterable[int]) -> list[QuasiDistillRow]:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p={p} outside (0, 1)")
    s = eq10_state(p, d)
    rows = []
    for n in n_values:
        A, B = quasidistill_filters(n, d)
        out = apply_filter_pair(s, LocalFilter("A", A), LocalFilter("B", B))
        F_cf, p_cf = quasidistill_closed_form(p, n)
        rows.append(QuasiDistillRow(int(n), out.achieved_F, F_cf, out.success_prob, p_cf))
    return rows


# -- single-copy distillability -----------------------------------------------


@dataclass(frozen=True)
class ScdCertificate:
    """Orthonormal bases (as columns) of Alice's and Bob's m-dim subspaces."""

    proj_a: np.ndarray
    proj_b: np.ndarray
    residual_purity: float = float("nan")
    schmidt_rank: int = 0

    @property
    def m(self) -> int:
        return self.proj_a.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "residual_purity": self.residual_purity,
            "schmidt_rank": self.schmidt_rank,
            "proj_a": {"re": self.proj_a.real.tolist(), "im": self.proj_a.imag.tolist()},
            "proj_b": {"re": self.proj_b.real.tolist(), "im": self.proj_b.imag.tolist()},
        }


@dataclass(frozen=True)
class ScdVerdict:
    valid: bool
    reason: str = ""
    purity: float = float("nan")
    schmidt_rank: int = 0

    def __bool__(self) -> bool:
        return self.valid


def _check_basis(u: np.ndarray, dim: int, name: str) -> None:
    if u.ndim != 2 or u.shape[0] != dim:
        raise DimMismatch(f"{name} must have {dim} rows, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1])))
    if err > ORTHO_TOL:
        raise DimMismatch(f"{name} columns are not orthonormal (error {err:.3e})")


def _project(s: DensityMatrix, ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
    k = np.kron(ua.conj().T, ub.conj().T)
    return k @ s.mat @ k.conj().T


def scd_check(s: DensityMatrix, cert: ScdCertificate) -> ScdVerdict:
    """Does P (x) Q leave a pure state of Schmidt rank m?"""
    ua = np.asarray(cert.proj_a, dtype=complex)
    ub = np.asarray(cert.proj_b, dtype=complex)
    if ua.ndim != 2 or ub.ndim != 2 or ua.shape[1] != ub.shape[1]:
        raise DimMismatch("Alice and Bob subspaces must have the same dimension m")
    _check_basis(ua, s.dim_a, "proj_a")
    _check_basis(ub, s.dim_b, "proj_b")
    m = ua.shape[1]
    sigma = _project(s, ua, ub)
    tr = float(np.trace(sigma).real)
    if tr <= PROB_FLOOR:
        return ScdVerdict(False, f"projection annihilates the state (trace {tr:.3e})", 0.0, 0)
    evals, vecs = np.linalg.eigh(hermitize(sigma) / tr)
    purity = float(evals[-1])
    sr = schmidt_rank(vecs[:, -1], m, m)
    if purity <= 1.0 - PURITY_TOL:
        n_nonzero = int(np.count_nonzero(evals > PURITY_TOL))
        return ScdVerdict(
            False, f"mixed residue: {n_nonzero} nonzero eigenvalues, purity {purity:.12g}", purity, sr
        )
    if sr != m:
        return ScdVerdict(False, f"pure residue has Schmidt rank {sr}, need {m}", purity, sr)
    return ScdVerdict(True, "", purity, sr)


def rank_condition(s: DensityMatrix, m: int) -> bool:
    """Necessary condition for m x m SCD: rank <= d_A d_B - m^2 + 1.

    ``False`` means single-copy distillation to rank m is impossible.
    """
    if not 1 <= m <= s.d:
        raise MOutOfRange(f"m={m} outside [1, {s.d}]")
    return s.rank <= s.dim_a * s.dim_b - m * m + 1


@dataclass(frozen=True)
class ScdBudget:
    perturbations: int = 200
    step: float = 0.1
    seed: int = 0


def _purity(s: DensityMatrix, ua: np.ndarray, ub: np.ndarray) -> float:
    sigma = _project(s, ua, ub)
    tr = float(np.trace(sigma).real)
    if tr <= PROB_FLOOR:
        return 0.0
    return float(np.linalg.eigvalsh(hermitize(sigma) / tr)[-1])


def _orth(u: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(u)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _certify(s: DensityMatrix, ua, ub) -> ScdCertificate | None:
    v = scd_check(s, ScdCertificate(ua, ub))
    if v.valid:
        return ScdCertificate(ua, ub, v.purity, v.schmidt_rank)
    return None


def scd_search(s: DensityMatrix, m: int, budget: ScdBudget = ScdBudget()) -> ScdCertificate | None:
    """Look for an m x m product projection certifying single-copy distillability.

    Tries every pair of computational-basis subspaces first, then a seeded
    hill climb on the purity of the projected state starting from each pair.
    A returned certificate always passes :func:`scd_check`; ``None`` proves
    nothing.
    """
    if not rank_condition(s, m):
        return None
    eye_a, eye_b = np.eye(s.dim_a, dtype=complex), np.eye(s.dim_b, dtype=complex)
    pairs = [(eye_a[:, list(ca)], eye_b[:, list(cb)])
             for ca in combinations(range(s.dim_a), m)
             for cb in combinations(range(s.dim_b), m)]
    for ua, ub in pairs:
        cert = _certify(s, ua, ub)
        if cert is not None:
            return cert

    rng = np.random.default_rng(budget.seed)
    for ua, ub in pairs:
        best = _purity(s, ua, ub)
        step = budget.step
        for _ in range(budget.perturbations):
            ga = rng.standard_normal(ua.shape) + 1j * rng.standard_normal(ua.shape)
            gb = rng.standard_normal(ub.shape) + 1j * rng.standard_normal(ub.shape)
            na, nb = _orth(ua + step * ga), _orth(ub + step * gb)
            pur = _purity(s, na, nb)
            if pur > best:
                ua, ub, best = na, nb, pur
                step *= 1.2
                if best > 1.0 - PURITY_TOL:
                    cert = _certify(s, ua, ub)
                    if cert is not None:
                        return cert
            else:
                step *= 0.9
    return None


# -- teleportation ----------------------------------------------------------


def teleport_fidelity(F, d: int):
    """Optimal teleportation fidelity (dF + 1)/(d + 1).

    Exact for ``Fraction``/``int`` input, float otherwise.
    """
    if not 0 <= F <= 1:
        raise ValueError(f"F={F} outside [0, 1]")
    if d < 2:
        raise ValueError("d must be at least 2")
    if isinstance(F, (Fraction, int)):
        return (d * Fraction(F) + 1) / (d + 1)
    return (d * F + 1.0) / (d + 1)


# -- channels and error correction -------------------------------------------


def channel_dual_state(ch: KrausChannel) -> DensityMatrix:
    """(I (x) Lambda)(P+) with P+ on input_dim x input_dim."""
    err = tp_error(ch.kraus_ops, ch.input_dim)
    if err > TP_TOL:
        raise NotTracePreserving(f"max |sum K^dagger K - I| = {err:.3e}")
    d = ch.input_dim
    return apply_channel(max_entangled(d, d).density(), ch, "B")


VERDICTS = (
    "perfect_probabilistic",
    "quasi_probabilistic_candidate",
    "no_perfect_correction",
    "inconclusive",
)


@dataclass(frozen=True)
class EcFeasibility:
    verdict: str
    evidence: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"verdict": self.verdict, "evidence": self.evidence}


def classify_dual(dual: DensityMatrix, budget: Budget = Budget()) -> EcFeasibility:
    """Probabilistic error-correction verdict from a channel's dual state.

    * full rank: filtering cannot reach F = 1, so ``no_perfect_correction``
    * pure with full Schmidt rank: ``perfect_probabilistic``
    * otherwise the two-way filter search decides between
      ``quasi_probabilistic_candidate`` (F >= 1 - 1e-3) and ``inconclusive``
    """
    evidence = {
        "dual_dim": [dual.dim_a, dual.dim_b],
        "dual_rank": dual.rank,
        "largest_eigenvalue": float(dual.eigenvalues[-1]),
    }
    if dual.is_full_rank:
        evidence["reason"] = "dual state has full rank"
        return EcFeasibility("no_perfect_correction", evidence)
    if dual.is_pure:
        vec = np.linalg.eigh(dual.mat)[1][:, -1]
        sr = schmidt_rank(vec, dual.dim_a, dual.dim_b)
        evidence["schmidt_rank"] = sr
        if sr == dual.d:
            evidence["reason"] = "dual state is pure with full Schmidt rank"
            return EcFeasibility("perfect_probabilistic", evidence)
    rep = fsup_estimate(dual, FilterClass("two_way"), budget)
    evidence.update(
        fsup_two_way=rep.best_F,
        fsup_converged=rep.converged,
        fsup_restarts=rep.restarts,
        threshold=QUASI_THRESHOLD,
    )
    if rep.best_F >= QUASI_THRESHOLD:
        evidence["reason"] = "two-way filtering pushes F past the threshold"
        return EcFeasibility("quasi_probabilistic_candidate", evidence)
    evidence["reason"] = "rank-deficient dual but filter search plateaued below threshold"
    return EcFeasibility("inconclusive", evidence)


def ec_feasibility(ch: KrausChannel, budget: Budget = Budget()) -> EcFeasibility:
    return classify_dual(channel_dual_state(ch), budget)


def dual_marginal_error(dual: DensityMatrix) -> float:
    """max |Tr_B(rho) - I/d_A| entrywise."""
    marg = partial_trace(dual, "A")
    return float(np.max(np.abs(marg - np.eye(dual.dim_a) / dual.dim_a)))


__all__ = [
    "QuasiDistillRow", "quasidistill_filters", "quasidistill_closed_form",
    "quasidistill_sequence", "ScdCertificate", "ScdVerdict", "scd_check",
    "rank_condition", "ScdBudget", "scd_search", "teleport_fidelity",
    "channel_dual_state", "EcFeasibility", "classify_dual", "ec_feasibility",
    "dual_marginal_error",
]
