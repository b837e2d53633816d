"""Local filters, trace-preserving channels and twirling.

A conclusive local operation is modelled by its single surviving branch: a
pair of filters ``A`` (Alice) and ``B`` (Bob) acting as
``rho -> (A (x) B) rho (A (x) B)^dagger / Tr(...)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .densmat import (
    RANK_TOL,
    DensityMatrix,
    density_from_unnormalized,
    hermitize,
    matrix_to_json,
    norms,
    partial_trace,
    singlet_fraction,
    validate_density,
)
from .errors import DimMismatch, NonSquareSystem, NotTracePreserving, VanishingOutcome
from .states import isotropic

PROB_FLOOR = 1e-14
TP_TOL = 1e-9
NORM_TOL = 1e-9

SIDES = ("A", "B")
NORMALIZATIONS = ("hs_unit", "trace_unit", "none")


@dataclass(frozen=True)
class LocalFilter:
    side: str
    mat: np.ndarray
    normalization: str = "none"

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        mat = np.array(self.mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimMismatch(f"filter must be square, got shape {mat.shape}")
        hs, tn = norms(mat)
        if self.normalization == "hs_unit" and abs(hs - 1.0) > NORM_TOL:
            raise ValueError(f"hs_unit filter has HS norm {hs:.12g}")
        if self.normalization == "trace_unit" and abs(tn - 1.0) > NORM_TOL:
            raise ValueError(f"trace_unit filter has trace norm {tn:.12g}")
        mat.flags.writeable = False
        object.__setattr__(self, "mat", mat)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def identity(cls, side: str, dim: int) -> "LocalFilter":
        return cls(side, np.eye(dim))

    @classmethod
    def hs_normalized(cls, side: str, mat) -> "LocalFilter":
        mat = np.asarray(mat, dtype=complex)
        return cls(side, mat / norms(mat)[0], "hs_unit")

    @classmethod
    def trace_normalized(cls, side: str, mat) -> "LocalFilter":
        mat = np.asarray(mat, dtype=complex)
        return cls(side, mat / norms(mat)[1], "trace_unit")

    def implementable(self) -> np.ndarray:
        """The filter rescaled so its largest singular value is 1.

        This is the largest multiple ``K`` for which ``I - K^dagger K`` is
        still positive, so ``K`` can be one element of a two-outcome
        measurement.
        """
        smax = np.linalg.norm(self.mat, 2)
        if smax == 0:
            raise VanishingOutcome("filter is the zero matrix")
        return self.mat / smax

    def to_json_dict(self) -> dict:
        d = matrix_to_json(self.mat, self.dim, self.dim)
        return {"side": self.side, "normalization": self.normalization,
                "re": d["re"], "im": d["im"]}


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators.

    Each operator has shape ``(output_dim, input_dim)``.
    """

    kraus_ops: tuple
    input_dim: int
    output_dim: int

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise DimMismatch("channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (self.output_dim, self.input_dim):
                raise DimMismatch(
                    f"Kraus operator shape {k.shape} != ({self.output_dim}, {self.input_dim})"
                )
            k.flags.writeable = False
        err = tp_error(ops, self.input_dim)
        if err > TP_TOL:
            raise NotTracePreserving(f"max |sum K^dagger K - I| = {err:.3e}")
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def from_ops(cls, ops: Sequence) -> "KrausChannel":
        ops = [np.asarray(k, dtype=complex) for k in ops]
        return cls(tuple(ops), ops[0].shape[1], ops[0].shape[0])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def to_json_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "kraus": [{"re": k.real.tolist(), "im": k.imag.tolist()} for k in self.kraus_ops],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "KrausChannel":
        unknown = set(data) - {"input_dim", "output_dim", "kraus"}
        if unknown:
            raise ValueError(f"unknown channel fields: {sorted(unknown)}")
        ops = []
        for entry in data["kraus"]:
            re = np.asarray(entry["re"], dtype=float)
            im = np.asarray(entry.get("im", np.zeros_like(re)), dtype=float)
            ops.append(re + 1j * im)
        return cls(tuple(ops), int(data["input_dim"]), int(data["output_dim"]))


def tp_error(ops, input_dim: int) -> float:
    s = sum(k.conj().T @ k for k in ops)
    return float(np.max(np.abs(s - np.eye(input_dim))))


@dataclass(frozen=True)
class LoccOutcome:
    post_state: DensityMatrix
    success_prob: float
    achieved_F: float


def _conclusive(s: DensityMatrix, unnorm: np.ndarray, m: int | None) -> LoccOutcome:
    tr = float(np.trace(unnorm).real)
    if tr <= PROB_FLOOR:
        raise VanishingOutcome(f"conclusive branch has probability {tr:.3e} <= {PROB_FLOOR}")
    post = density_from_unnormalized(unnorm, s.dim_a, s.dim_b)
    return LoccOutcome(post, min(tr, 1.0), singlet_fraction(post, m))


def apply_filter_pair(
    s: DensityMatrix, fa: LocalFilter, fb: LocalFilter, m: int | None = None
) -> LoccOutcome:
    """Filter ``s`` with ``fa (x) fb`` and keep the conclusive branch.

    ``achieved_F`` is the ``m``-singlet fraction of the normalized output and
    does not depend on the scale of either filter; ``success_prob`` is
    computed with both filters rescaled to unit largest singular value.
    """
    if fa.side != "A" or fb.side != "B":
        raise ValueError("expected an Alice filter and a Bob filter")
    if fa.dim != s.dim_a or fb.dim != s.dim_b:
        raise DimMismatch(
            f"filters {fa.dim}x{fb.dim} do not match state {s.dim_a}x{s.dim_b}"
        )
    k = np.kron(fa.implementable(), fb.implementable())
    return _conclusive(s, k @ s.mat @ k.conj().T, m)


def _lift(op: np.ndarray, side: str, dim_a: int, dim_b: int) -> np.ndarray:
    if side == "A":
        return np.kron(op, np.eye(dim_b))
    return np.kron(np.eye(dim_a), op)


def apply_channel(s: DensityMatrix, ch: KrausChannel, side: str) -> DensityMatrix:
    """sum_k (I (x) K_k) rho (I (x) K_k)^dagger, or mirrored onto Alice."""
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    dim = s.dim_a if side == "A" else s.dim_b
    if ch.input_dim != dim:
        raise DimMismatch(f"channel input {ch.input_dim} != side {side} dimension {dim}")
    out = 0
    for k in ch.kraus_ops:
        lk = _lift(k, side, s.dim_a, s.dim_b)
        out = out + lk @ s.mat @ lk.conj().T
    da, db = (ch.output_dim, s.dim_b) if side == "A" else (s.dim_a, ch.output_dim)
    return validate_density(hermitize(out), da, db)


def apply_one_way(
    s: DensityMatrix, v: LocalFilter, ch: KrausChannel, m: int | None = None
) -> LoccOutcome:
    """One-way conclusive step: TP map on one side, then filter ``v`` on the other.

    ``v.side`` names the filtering (communicating) party; ``ch`` acts on the
    opposite party. Because ``ch`` is trace preserving, the reduced state of
    the filtering party depends on ``v`` alone.
    """
    other = "B" if v.side == "A" else "A"
    after = apply_channel(s, ch, other)
    if v.dim != (after.dim_a if v.side == "A" else after.dim_b):
        raise DimMismatch("filter dimension does not match its side")
    k = _lift(v.implementable(), v.side, after.dim_a, after.dim_b)
    return _conclusive(after, k @ after.mat @ k.conj().T, m)


def twirl(s: DensityMatrix) -> DensityMatrix:
    """U (x) U* twirl, evaluated exactly as the isotropic projection."""
    if s.dim_a != s.dim_b:
        raise NonSquareSystem(f"twirl needs d x d, got {s.dim_a}x{s.dim_b}")
    F = min(max(singlet_fraction(s), 0.0), 1.0)
    return isotropic(F, s.dim_a)


# -- channel constructors ------------------------------------------------


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel((np.eye(d),), d, d)


def unitary_channel(u) -> KrausChannel:
    u = np.asarray(u, dtype=complex)
    return KrausChannel((u,), u.shape[1], u.shape[0])


def weyl_operators(d: int) -> list[np.ndarray]:
    """The d^2 clock-and-shift unitaries X^a Z^b, identity first."""
    w = np.exp(2j * np.pi / d)
    X = np.roll(np.eye(d), 1, axis=0)
    Z = np.diag(w ** np.arange(d))
    return [np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)
            for a in range(d) for b in range(d)]


def depolarizing_channel(d: int, noise: float) -> KrausChannel:
    """rho -> (1 - noise) rho + noise Tr(rho) I/d."""
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise={noise} outside [0, 1]")
    ws = weyl_operators(d)
    weights = [1.0 - noise + noise / d**2] + [noise / d**2] * (d**2 - 1)
    ops = tuple(np.sqrt(c) * u for c, u in zip(weights, ws) if c > 0)
    return KrausChannel(ops, d, d)


def random_channel(d_in: int, n_kraus: int, seed: int, d_out: int | None = None) -> KrausChannel:
    """Kraus operators cut from a Haar-like random isometry (Stinespring)."""
    d_out = d_in if d_out is None else d_out
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((d_out * n_kraus, d_in))
         + 1j * rng.standard_normal((d_out * n_kraus, d_in)))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return KrausChannel(tuple(q[k * d_out:(k + 1) * d_out] for k in range(n_kraus)), d_in, d_out)


def channel_from_dual(s: DensityMatrix) -> KrausChannel:
    """Inverse of the channel-state map: recover Kraus operators from rho_Lambda.

    Requires ``Tr_B rho = I/d_A``, which is exactly trace preservation.
    """
    da, db = s.dim_a, s.dim_b
    marg = partial_trace(s, "A")
    dev = float(np.max(np.abs(marg - np.eye(da) / da)))
    if dev > TP_TOL:
        raise NotTracePreserving(
            f"A marginal deviates from I/{da} by {dev:.3e}; not the dual of a TP map"
        )
    evals, vecs = np.linalg.eigh(s.mat)
    ops = [np.sqrt(da * lam) * vecs[:, k].reshape(da, db).T
           for k, lam in enumerate(evals) if lam > RANK_TOL]
    return KrausChannel(tuple(ops), da, db)


def balance_marginal(s: DensityMatrix) -> DensityMatrix:
    """Filter Alice with (d_A rho_A)^(-1/2) so her marginal becomes I/d_A.

    The filter is invertible, so two-way filtering questions about the
    output have the same answer as for ``s``.
    """
    marg = partial_trace(s, "A")
    evals, vecs = np.linalg.eigh(marg)
    if evals[0] <= RANK_TOL:
        raise VanishingOutcome("Alice marginal is singular; cannot balance it")
    x = vecs @ np.diag((s.dim_a * evals) ** -0.5) @ vecs.conj().T
    k = np.kron(x, np.eye(s.dim_b))
    return density_from_unnormalized(k @ s.mat @ k.conj().T, s.dim_a, s.dim_b)
