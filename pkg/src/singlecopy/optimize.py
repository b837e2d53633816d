"""Search for the best singlet fraction reachable by local filtering.

``fsup_estimate`` maximizes the m-singlet fraction of the filtered state
over one of four filter classes with random-restart Nelder-Mead. Whatever it
returns is a lower bound on the supremum over that class.

The two-qubit helpers (``correlation_matrix``, ``fidelity_via_N``) evaluate
the closed form (1 + N)/4, where N is the sum of singular values of the
Pauli correlation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import kernels
from .densmat import DensityMatrix
from .errors import BudgetExhausted, MOutOfRange, NotTwoQubit
from .locc import LocalFilter, apply_filter_pair

TIE_TOL = 1e-9

CLASS_MODES = {
    "two_way": kernels.MODE_TWO_WAY,
    "one_way_A_filters": kernels.MODE_ALICE,
    "one_way_B_filters": kernels.MODE_BOB,
    "deterministic_two_way": kernels.MODE_UNITARY,
}


@dataclass(frozen=True)
class FilterClass:
    """Which parties may filter.

    ``one_way_*`` classes keep the other party's conclusive filter at the
    identity. ``deterministic_two_way`` only searches local unitaries; since
    twirling is trace preserving and keeps F, this approximates the
    trace-preserving class from below.
    """

    tag: str
    m: int | None = None

    def __post_init__(self):
        if self.tag not in CLASS_MODES:
            raise ValueError(f"unknown filter class {self.tag!r}; expected {sorted(CLASS_MODES)}")


@dataclass(frozen=True)
class Budget:
    restarts: int = 64
    max_iters: int = 20000
    xtol: float = 1e-10
    ftol: float = 1e-13
    seed: int = 0

    @classmethod
    def from_json_dict(cls, data: dict) -> "Budget":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown budget fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class OptimizationReport:
    best_F: float
    best_filters: tuple[LocalFilter, LocalFilter]
    restarts: int
    evals: int
    converged: bool
    history: list[tuple[int, float]] = field(default_factory=list)
    success_prob: float = float("nan")
    filter_class: str = ""
    m: int = 0
    backend: str = ""

    def to_json_dict(self) -> dict:
        return {
            "best_F": self.best_F,
            "filter_class": self.filter_class,
            "m": self.m,
            "success_prob": self.success_prob,
            "converged": self.converged,
            "restarts": self.restarts,
            "evals": self.evals,
            "filter_A": self.best_filters[0].to_json_dict(),
            "filter_B": self.best_filters[1].to_json_dict(),
            "history": [[r, f] for r, f in self.history],
        }


def _identity_start(da: int, db: int, mode: int) -> np.ndarray:
    def block(d):
        return np.concatenate([np.eye(d).ravel(), np.zeros(d * d)])

    if mode == kernels.MODE_ALICE:
        return block(da)
    if mode == kernels.MODE_BOB:
        return block(db)
    return np.concatenate([block(da), block(db)])


def restart_points(da: int, db: int, mode: int, budget: Budget) -> np.ndarray:
    """Initial points: the identity filters first, then seeded Gaussians.

    Restart ``r > 0`` draws from its own child of ``SeedSequence(seed)`` so a
    restart's start does not depend on how many others run.
    """
    n = kernels.n_params(da, db, mode)
    starts = np.empty((budget.restarts, n))
    children = np.random.SeedSequence(budget.seed).spawn(budget.restarts)
    for r, child in enumerate(children):
        if r == 0:
            starts[r] = _identity_start(da, db, mode)
        else:
            starts[r] = np.random.default_rng(child).standard_normal(n)
    return starts


def _cond(M: np.ndarray) -> float:
    sv = np.linalg.svd(M, compute_uv=False)
    return float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")


def fsup_estimate(
    s: DensityMatrix,
    cls: FilterClass,
    budget: Budget = Budget(),
    *,
    backend: str | None = None,
    strict: bool = False,
) -> OptimizationReport:
    """Best m-singlet fraction found over the filter class ``cls``.

    With ``strict=True`` a search whose best restart did not meet the
    tolerances raises ``BudgetExhausted`` instead of returning
    ``converged=False``.
    """
    m = s.d if cls.m is None else cls.m
    if not 1 <= m <= s.d:
        raise MOutOfRange(f"m={m} outside [1, {s.d}]")
    if budget.restarts < 1:
        raise ValueError("budget.restarts must be at least 1")
    mode = CLASS_MODES[cls.tag]
    da, db = s.dim_a, s.dim_b
    starts = restart_points(da, db, mode, budget)
    xs, fs, nevs, convs = kernels.maximize_filters(
        starts, s.mat, da, db, m, mode,
        max_iters=budget.max_iters, xtol=budget.xtol, ftol=budget.ftol, backend=backend,
    )
    fs = np.clip(fs, 0.0, 1.0)
    running = np.maximum.accumulate(fs)
    history = [(r, float(f)) for r, f in enumerate(running)]

    # among (numerically) tied optima prefer the best-conditioned filter pair,
    # which has the largest implementable success probability
    top = float(fs.max())
    best, best_cond = -1, float("inf")
    for r in np.flatnonzero(fs >= top - TIE_TOL):
        A, B = kernels.decode_filters(xs[r], da, db, mode)
        c = _cond(A) * _cond(B)
        if best < 0 or c < best_cond:
            best, best_cond = int(r), c
    A, B = kernels.decode_filters(xs[best], da, db, mode)
    if mode == kernels.MODE_UNITARY:
        fa, fb = LocalFilter("A", A), LocalFilter("B", B)
    else:
        fa = LocalFilter.identity("A", da) if mode == kernels.MODE_BOB else LocalFilter.hs_normalized("A", A)
        fb = LocalFilter.identity("B", db) if mode == kernels.MODE_ALICE else LocalFilter.hs_normalized("B", B)
    outcome = apply_filter_pair(s, fa, fb, m)
    converged = bool(convs[best])
    if strict and not converged:
        raise BudgetExhausted(
            f"best restart {best} did not converge within {budget.max_iters} iterations"
        )
    return OptimizationReport(
        best_F=float(fs[best]),
        best_filters=(fa, fb),
        restarts=budget.restarts,
        evals=int(nevs.sum()),
        converged=converged,
        history=history,
        success_prob=outcome.success_prob,
        filter_class=cls.tag,
        m=m,
        backend=kernels.default_backend() if backend is None else backend,
    )


# -- two-qubit closed forms -------------------------------------------------

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class CorrelationMatrix:
    t: np.ndarray

    @property
    def N(self) -> float:
        """Trace norm of T, i.e. Tr sqrt(T^dagger T)."""
        return float(np.sum(np.linalg.svd(self.t, compute_uv=False)))


def _require_two_qubit(s: DensityMatrix) -> None:
    if (s.dim_a, s.dim_b) != (2, 2):
        raise NotTwoQubit(f"expected a 2x2 state, got {s.dim_a}x{s.dim_b}")


def correlation_matrix(s: DensityMatrix) -> CorrelationMatrix:
    """T_ij = Tr[rho (sigma_i (x) sigma_j)] for i, j in x, y, z."""
    _require_two_qubit(s)
    t = np.array([[np.trace(s.mat @ np.kron(a, b)).real for b in PAULI] for a in PAULI])
    return CorrelationMatrix(t)


def fidelity_via_N(s: DensityMatrix) -> float:
    """(1 + N)/4.

    This matches the best fraction over local unitaries when det T < 0. For
    det T > 0 it is only an upper bound: e.g. T = 0.3 I gives 0.475 against a
    reachable 0.325.
    """
    return (1.0 + correlation_matrix(s).N) / 4.0


def diagonal_filter_fraction(p: float, t: float) -> float:
    """Singlet fraction after Bob filters p P+ + (1-p)|01><01| with diag(1, t)."""
    return p * (1 + t) ** 2 / (2 * p * (1 + t * t) + 4 * (1 - p) * t * t)


def oneway_analytic_optimum(p: float) -> tuple[float, float]:
    """Best Bob-side diagonal filter ratio and the fraction it reaches.

    Setting the derivative of ``diagonal_filter_fraction`` to zero leaves
    ``2p = (4 - 2p) t``, so ``t* = p/(2 - p)`` and ``F* = 1/(2 - p)``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p={p} outside (0, 1)")
    return p / (2.0 - p), 1.0 / (2.0 - p)
