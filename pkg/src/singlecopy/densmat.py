"""Validated bipartite states and the dense linear algebra they need.

Matrices are plain complex ``numpy`` arrays. ``DensityMatrix`` and
``PureState`` wrap them with recorded local dimensions and are immutable
once built (the underlying arrays are flagged read-only).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    MOutOfRange,
    NegativeEigenvalue,
    NonHermitian,
    NonUnitTrace,
    NotNormalized,
)

HERM_TOL = 1e-9
TRACE_TOL = 1e-9
RANK_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state of a ``dim_a x dim_b`` system.

    Use :func:`validate_density` to build one; the constructor does not check
    positivity by itself.
    """

    mat: np.ndarray
    dim_a: int
    dim_b: int
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return min(self.dim_a, self.dim_b)

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > RANK_TOL))

    @property
    def is_pure(self) -> bool:
        return self.rank == 1

    @property
    def is_full_rank(self) -> bool:
        return self.rank == self.dim

    def to_json_dict(self) -> dict:
        return matrix_to_json(self.mat, self.dim_a, self.dim_b)

    @classmethod
    def from_json_dict(cls, data: dict) -> "DensityMatrix":
        mat, dim_a, dim_b = matrix_from_json(data)
        return validate_density(mat, dim_a, dim_b)


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self):
        amp = _frozen(np.ravel(self.amplitudes))
        if amp.size != self.dim_a * self.dim_b:
            raise DimMismatch(
                f"amplitude count {amp.size} != {self.dim_a}*{self.dim_b}"
            )
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > TRACE_TOL:
            raise NotNormalized(f"norm deviates from 1 by {abs(norm - 1.0):.3e}")
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def normalized(cls, amplitudes, dim_a: int, dim_b: int) -> "PureState":
        amp = np.asarray(amplitudes, dtype=complex).ravel()
        return cls(amp / np.linalg.norm(amp), dim_a, dim_b)

    def coefficient_matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dim_a, self.dim_b)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> DensityMatrix:
        return validate_density(self.projector(), self.dim_a, self.dim_b)


@dataclass(frozen=True)
class SchmidtDecomposition:
    coefficients: np.ndarray
    left_vectors: np.ndarray  # columns
    right_vectors: np.ndarray  # columns

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.coefficients > RANK_TOL))

    def reconstruct(self) -> np.ndarray:
        return np.einsum(
            "k,ik,jk->ij", self.coefficients, self.left_vectors, self.right_vectors
        ).ravel()


def validate_density(m, dim_a: int, dim_b: int) -> DensityMatrix:
    """Check the state invariants of ``m`` and wrap it.

    Raises one of ``NonHermitian``, ``NonUnitTrace`` or ``NegativeEigenvalue``
    naming the size of the violation.
    """
    m = np.asarray(m, dtype=complex)
    n = dim_a * dim_b
    if m.shape != (n, n):
        raise DimMismatch(f"matrix shape {m.shape} does not match {dim_a}x{dim_b}")
    if not np.all(np.isfinite(m)):
        raise NonHermitian("matrix has non-finite entries")
    herm_err = float(np.max(np.abs(m - m.conj().T)))
    if herm_err > HERM_TOL:
        raise NonHermitian(f"max |m - m^dagger| = {herm_err:.3e} exceeds {HERM_TOL}")
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise NonUnitTrace(f"trace {tr:.12g} deviates from 1 by {abs(tr - 1.0):.3e}")
    evals = np.linalg.eigvalsh(hermitize(m))
    if evals[0] < -HERM_TOL:
        raise NegativeEigenvalue(f"smallest eigenvalue {evals[0]:.3e} below {-HERM_TOL}")
    evals = np.array(evals, dtype=float)
    evals.flags.writeable = False
    return DensityMatrix(_frozen(m), dim_a, dim_b, evals)


def density_from_unnormalized(m, dim_a: int, dim_b: int) -> DensityMatrix:
    """Hermitize and trace-normalize ``m`` before validation."""
    m = hermitize(np.asarray(m, dtype=complex))
    return validate_density(m / np.trace(m).real, dim_a, dim_b)


def partial_trace(s: DensityMatrix, side: str) -> np.ndarray:
    """Reduced matrix of the kept ``side`` ("A" or "B")."""
    t = s.mat.reshape(s.dim_a, s.dim_b, s.dim_a, s.dim_b)
    if side == "A":
        return np.einsum("ijkj->ik", t)
    if side == "B":
        return np.einsum("ijil->jl", t)
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


def schmidt(v: PureState) -> SchmidtDecomposition:
    u, s, vh = np.linalg.svd(v.coefficient_matrix())
    k = min(v.dim_a, v.dim_b)
    return SchmidtDecomposition(s[:k], u[:, :k], vh[:k, :].T)


def schmidt_rank(vec: np.ndarray, dim_a: int, dim_b: int) -> int:
    s = np.linalg.svd(np.reshape(vec, (dim_a, dim_b)), compute_uv=False)
    s = s / np.linalg.norm(s)
    return int(np.count_nonzero(s > RANK_TOL))


def norms(m) -> tuple[float, float]:
    """Hilbert-Schmidt norm and trace norm of ``m``."""
    sv = np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)
    return float(np.sqrt(np.sum(sv**2))), float(np.sum(sv))


def max_entangled_vector(dim_a: int, dim_b: int, m: int | None = None) -> np.ndarray:
    d = min(dim_a, dim_b)
    m = d if m is None else m
    if not 1 <= m <= d:
        raise MOutOfRange(f"m={m} outside [1, {d}]")
    v = np.zeros(dim_a * dim_b, dtype=complex)
    idx = np.arange(m)
    v[idx * dim_b + idx] = 1.0 / np.sqrt(m)
    return v


def singlet_fraction(s: DensityMatrix, m: int | None = None) -> float:
    """Overlap of ``s`` with the rank-``m`` symmetric maximally entangled state.

    ``m`` defaults to ``min(dim_a, dim_b)``, which gives the plain singlet
    fraction.
    """
    v = max_entangled_vector(s.dim_a, s.dim_b, m)
    return float(np.real(v.conj() @ s.mat @ v))


def matrix_to_json(mat: np.ndarray, dim_a: int, dim_b: int) -> dict:
    mat = np.asarray(mat)
    return {
        "dim_a": int(dim_a),
        "dim_b": int(dim_b),
        "re": mat.real.tolist(),
        "im": mat.imag.tolist(),
    }


def matrix_from_json(data: dict) -> tuple[np.ndarray, int, int]:
    unknown = set(data) - {"dim_a", "dim_b", "re", "im"}
    if unknown:
        raise ValueError(f"unknown matrix fields: {sorted(unknown)}")
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape:
        raise DimMismatch("re and im parts differ in shape")
    return re + 1j * im, int(data["dim_a"]), int(data["dim_b"])
