"""Constructors for the state families used throughout the package."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .densmat import (
    DensityMatrix,
    PureState,
    density_from_unnormalized,
    max_entangled_vector,
    validate_density,
)
from .errors import (
    DimensionShrink,
    InvalidPermutation,
    MOutOfRange,
    NonPositiveParameter,
    NonSquareSystem,
    RankOutOfRange,
)


def _check_prob(name: str, p: float, lo_open: bool = False) -> None:
    if not (0.0 < p <= 1.0 if lo_open else 0.0 <= p <= 1.0):
        raise ValueError(f"{name}={p} outside {'(0, 1]' if lo_open else '[0, 1]'}")


def max_entangled(d_a: int, d_b: int) -> PureState:
    """(1/sqrt(d)) sum_i |i>|i> with d = min(d_a, d_b)."""
    return PureState(max_entangled_vector(d_a, d_b), d_a, d_b)


def max_entangled_m(d_a: int, d_b: int, m: int) -> PureState:
    if not 2 <= m <= min(d_a, d_b):
        raise MOutOfRange(f"m={m} outside [2, {min(d_a, d_b)}]")
    return PureState(max_entangled_vector(d_a, d_b, m), d_a, d_b)


def _proj(d: int) -> np.ndarray:
    v = max_entangled_vector(d, d)
    return np.outer(v, v.conj())


def eq10_state(p: float, d: int) -> DensityMatrix:
    """p P+ + (1 - p) |0><0| (x) |1><1| on a d x d system.

    The standard example that is quasi-distillable under two-way filtering.
    """
    _check_prob("p", p)
    if d < 2:
        raise ValueError("d must be at least 2")
    m = p * _proj(d)
    m[1, 1] += 1.0 - p  # |0>|1> sits at index 0*d + 1
    return validate_density(m, d, d)


def permutation_family(p: float, d: int, perm: Sequence[int]) -> DensityMatrix:
    """p P+ + ((1 - p)/d) sum_i |i><i| (x) |perm(i)><perm(i)|."""
    _check_prob("p", p, lo_open=True)
    perm = [int(k) for k in perm]
    if len(perm) != d or sorted(perm) != list(range(d)):
        raise InvalidPermutation(f"{perm} is not a bijection on 0..{d - 1}")
    m = p * _proj(d)
    for i, j in enumerate(perm):
        m[i * d + j, i * d + j] += (1.0 - p) / d
    return validate_density(m, d, d)


def ab_state(a: float, b: float) -> DensityMatrix:
    """b/(a+b) |Psi><Psi| + a/(a+b) |01><01| with Psi = a|00> + b|11>.

    ``(a, b)`` is rescaled onto the unit circle first. The second term is
    taken as the projector onto |01>; written as |0><1| it would not be
    Hermitian.
    """
    if a <= 0 or b <= 0:
        raise NonPositiveParameter(f"a={a}, b={b} must both be positive")
    r = np.hypot(a, b)
    a, b = a / r, b / r
    psi = np.array([a, 0, 0, b], dtype=complex)
    m = b / (a + b) * np.outer(psi, psi)
    m[1, 1] += a / (a + b)
    return validate_density(m, 2, 2)


def isotropic(F: float, d: int) -> DensityMatrix:
    _check_prob("F", F)
    P = _proj(d)
    m = F * P + (1.0 - F) * (np.eye(d * d) - P) / (d * d - 1)
    return validate_density(m, d, d)


def embed(s: DensityMatrix, d_new: int) -> DensityMatrix:
    """Zero-pad a d x d state into d_new x d_new in the computational basis."""
    if s.dim_a != s.dim_b:
        raise NonSquareSystem(f"embed needs a d x d state, got {s.dim_a}x{s.dim_b}")
    d = s.dim_a
    if d_new < d:
        raise DimensionShrink(f"cannot embed {d}x{d} into {d_new}x{d_new}")
    t = np.zeros((d_new, d_new, d_new, d_new), dtype=complex)
    t[:d, :d, :d, :d] = s.mat.reshape(d, d, d, d)
    return validate_density(t.reshape(d_new**2, d_new**2), d_new, d_new)


def random_density(d_a: int, d_b: int, rank: int, seed: int) -> DensityMatrix:
    """G G^dagger / Tr with G an (n x rank) complex Gaussian matrix.

    Draws come from ``numpy.random.default_rng(seed)`` (PCG64): real parts
    first, then imaginary parts, each in row-major order.
    """
    n = d_a * d_b
    if not 1 <= rank <= n:
        raise RankOutOfRange(f"rank={rank} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return density_from_unnormalized(g @ g.conj().T, d_a, d_b)


FAMILIES = (
    "max_entangled",
    "max_entangled_m",
    "eq10",
    "permutation",
    "ab_state",
    "isotropic",
    "embedded",
    "random",
)


@dataclass(frozen=True)
class StateFamilySpec:
    """Declarative description of a state, as accepted from JSON.

    ``embedded`` takes ``eq10_state(p, d)`` (``p=1`` gives P+) and pads it into
    ``d_new x d_new``.
    """

    family: str
    p: float | None = None
    d: int | None = None
    d_b: int | None = None
    m: int | None = None
    permutation: tuple[int, ...] | None = None
    a: float | None = None
    b: float | None = None
    F: float | None = None
    d_new: int | None = None
    rank: int | None = None
    seed: int = 0

    @classmethod
    def from_json_dict(cls, data: dict) -> "StateFamilySpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown state-spec fields: {sorted(unknown)}")
        data = dict(data)
        if data.get("permutation") is not None:
            data["permutation"] = tuple(int(k) for k in data["permutation"])
        return cls(**data)

    def _need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"family {self.family!r} needs {missing}")

    def build(self) -> DensityMatrix:
        fam = self.family
        if fam == "max_entangled":
            self._need("d")
            return max_entangled(self.d, self.d_b or self.d).density()
        if fam == "max_entangled_m":
            self._need("d", "m")
            return max_entangled_m(self.d, self.d_b or self.d, self.m).density()
        if fam == "eq10":
            self._need("p", "d")
            return eq10_state(self.p, self.d)
        if fam == "permutation":
            self._need("p", "d", "permutation")
            return permutation_family(self.p, self.d, self.permutation)
        if fam == "ab_state":
            self._need("a", "b")
            return ab_state(self.a, self.b)
        if fam == "isotropic":
            self._need("F", "d")
            return isotropic(self.F, self.d)
        if fam == "embedded":
            self._need("d", "d_new")
            return embed(eq10_state(1.0 if self.p is None else self.p, self.d), self.d_new)
        if fam == "random":
            self._need("d")
            d_b = self.d_b or self.d
            rank = self.rank or self.d * d_b
            return random_density(self.d, d_b, rank, self.seed)
        raise ValueError(f"unknown family {fam!r}; expected one of {FAMILIES}")
