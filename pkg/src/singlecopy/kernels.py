"""Inner loops of the filter search.

Two backends share one Nelder-Mead driver source:

* ``numba``: the singlet-fraction objective is written as explicit loops
  and the driver, objective and restart loop are compiled with ``njit``.
* ``numpy``: the objective is vectorized with ``einsum`` and the driver runs
  as ordinary Python.

The numba path is used when numba imports and ``SINGLECOPY_DISABLE_NUMBA``
is unset or ``0``. Any call can override this with ``backend=``.

Filter parameter layout (a flat real vector ``x``)::

    mode 0 (two-way)     [Re A, Im A, Re B, Im B]
    mode 1 (Alice only)  [Re A, Im A]             B = I
    mode 2 (Bob only)    [Re B, Im B]             A = I
    mode 3 (unitary)     as mode 0, each block mapped to its polar unitary

Blocks are row-major and are kept on the unit Hilbert-Schmidt sphere.
"""
from __future__ import annotations

import os
import types
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

ENV_FLAG = "SINGLECOPY_DISABLE_NUMBA"

MODE_TWO_WAY = 0
MODE_ALICE = 1
MODE_BOB = 2
MODE_UNITARY = 3

PROB_FLOOR = 1e-14


def default_backend() -> str:
    if numba is None:
        return "numpy"
    if os.environ.get(ENV_FLAG, "").strip() not in ("", "0"):
        return "numpy"
    return "numba"


def n_params(da: int, db: int, mode: int) -> int:
    if mode == MODE_ALICE:
        return 2 * da * da
    if mode == MODE_BOB:
        return 2 * db * db
    return 2 * (da * da + db * db)


# -- objective: two implementations --------------------------------------


def _fraction_loops(A, B, rho, da, db, m):
    """(numerator, denominator) of the m-singlet fraction after A (x) B."""
    n = da * db
    inv = 1.0 / np.sqrt(m)
    w = np.empty(n, dtype=np.complex128)
    for i in range(da):
        for j in range(db):
            acc = 0j
            for k in range(m):
                acc += A[k, i] * B[k, j]
            w[i * db + j] = np.conj(acc) * inv
    num = 0.0
    for r in range(n):
        acc = 0j
        for c in range(n):
            acc += rho[r, c] * w[c]
        num += (np.conj(w[r]) * acc).real
    AA = np.empty((da, da), dtype=np.complex128)
    for i in range(da):
        for k in range(da):
            acc = 0j
            for q in range(da):
                acc += np.conj(A[q, i]) * A[q, k]
            AA[i, k] = acc
    BB = np.empty((db, db), dtype=np.complex128)
    for j in range(db):
        for l in range(db):
            acc = 0j
            for q in range(db):
                acc += np.conj(B[q, j]) * B[q, l]
            BB[j, l] = acc
    den = 0.0
    for i in range(da):
        for k in range(da):
            a = AA[i, k]
            for j in range(db):
                for l in range(db):
                    den += (a * BB[j, l] * rho[k * db + l, i * db + j]).real
    return num, den


def _fraction_numpy(A, B, rho, da, db, m):
    w = np.einsum("ki,kj->ij", A[:m].conj(), B[:m].conj()).ravel() / np.sqrt(m)
    num = np.real(w.conj() @ rho @ w)
    rho4 = rho.reshape(da, db, da, db)
    den = np.real(np.einsum("ik,jl,klij->", A.conj().T @ A, B.conj().T @ B, rho4))
    return num, den


# -- shared driver source --------------------------------------------------
#
# The functions below are compiled with numba as written. The numpy backend
# re-binds the same code objects to a namespace in which ``_fraction`` is the
# vectorized objective and nothing is compiled.

_jit = numba.njit(cache=True) if numba is not None else (lambda f: f)
_fraction = _jit(_fraction_loops)


@_jit
def _decode_block(x, start, d, unitary):
    M = np.empty((d, d), dtype=np.complex128)
    dd = d * d
    for r in range(d):
        for c in range(d):
            M[r, c] = x[start + r * d + c] + 1j * x[start + dd + r * d + c]
    if unitary:
        u, s, vh = np.linalg.svd(M)
        return u @ vh
    nrm = 0.0
    for r in range(d):
        for c in range(d):
            nrm += M[r, c].real ** 2 + M[r, c].imag ** 2
    if nrm > 0.0:
        M = M / np.sqrt(nrm)
    return M


@_jit
def _identity(d):
    return np.eye(d, dtype=np.complex128)


@_jit
def _decode(x, da, db, mode):
    if mode == 1:
        return _decode_block(x, 0, da, False), _identity(db)
    if mode == 2:
        return _identity(da), _decode_block(x, 0, db, False)
    unitary = mode == 3
    return _decode_block(x, 0, da, unitary), _decode_block(x, 2 * da * da, db, unitary)


@_jit
def _normalize_span(x, lo, hi):
    nrm = 0.0
    for i in range(lo, hi):
        nrm += x[i] * x[i]
    if nrm > 0.0:
        s = 1.0 / np.sqrt(nrm)
        for i in range(lo, hi):
            x[i] *= s


@_jit
def _project(x, da, db, mode):
    """Put each filter block back on the unit HS sphere (in place)."""
    if mode == 1:
        _normalize_span(x, 0, 2 * da * da)
    elif mode == 2:
        _normalize_span(x, 0, 2 * db * db)
    else:
        _normalize_span(x, 0, 2 * da * da)
        _normalize_span(x, 2 * da * da, 2 * da * da + 2 * db * db)
    return x


@_jit
def _neg_fraction(x, rho, da, db, m, mode):
    A, B = _decode(x, da, db, mode)
    num, den = _fraction(A, B, rho, da, db, m)
    if den <= PROB_FLOOR:
        return 0.0
    return -num / den


@_jit
def _nelder_mead(x0, rho, da, db, m, mode, step, max_iters, xtol, ftol):
    # adaptive coefficients (Gao & Han) behave better above ~10 parameters
    n = x0.size
    alpha = 1.0
    gamma = 1.0 + 2.0 / n
    rho_c = 0.75 - 0.5 / n
    sigma = 1.0 - 1.0 / n
    sim = np.empty((n + 1, n))
    fsim = np.empty(n + 1)
    sim[0] = _project(x0.copy(), da, db, mode)
    for i in range(n):
        y = sim[0].copy()
        y[i] += step
        sim[i + 1] = _project(y, da, db, mode)
    for i in range(n + 1):
        fsim[i] = _neg_fraction(sim[i], rho, da, db, m, mode)
    nev = n + 1
    it = 0
    converged = False
    xbar = np.empty(n)
    while it < max_iters:
        order = np.argsort(fsim, kind="mergesort")
        sim = sim[order]
        fsim = fsim[order]
        xspread = 0.0
        fspread = 0.0
        for i in range(1, n + 1):
            fspread = max(fspread, abs(fsim[i] - fsim[0]))
            for j in range(n):
                xspread = max(xspread, abs(sim[i, j] - sim[0, j]))
        if xspread <= xtol and fspread <= ftol:
            converged = True
            break
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += sim[i, j]
            xbar[j] = acc / n
        worst = sim[n]
        xr = _project((1.0 + alpha) * xbar - alpha * worst, da, db, mode)
        fr = _neg_fraction(xr, rho, da, db, m, mode)
        nev += 1
        if fr < fsim[0]:
            xe = _project((1.0 + alpha * gamma) * xbar - alpha * gamma * worst, da, db, mode)
            fe = _neg_fraction(xe, rho, da, db, m, mode)
            nev += 1
            if fe < fr:
                sim[n] = xe
                fsim[n] = fe
            else:
                sim[n] = xr
                fsim[n] = fr
        elif fr < fsim[n - 1]:
            sim[n] = xr
            fsim[n] = fr
        else:
            shrink = False
            if fr < fsim[n]:
                xc = _project((1.0 + rho_c * alpha) * xbar - rho_c * alpha * worst, da, db, mode)
                fc = _neg_fraction(xc, rho, da, db, m, mode)
                nev += 1
                if fc <= fr:
                    sim[n] = xc
                    fsim[n] = fc
                else:
                    shrink = True
            else:
                xcc = _project((1.0 - rho_c) * xbar + rho_c * worst, da, db, mode)
                fcc = _neg_fraction(xcc, rho, da, db, m, mode)
                nev += 1
                if fcc < fsim[n]:
                    sim[n] = xcc
                    fsim[n] = fcc
                else:
                    shrink = True
            if shrink:
                for i in range(1, n + 1):
                    sim[i] = _project(sim[0] + sigma * (sim[i] - sim[0]), da, db, mode)
                    fsim[i] = _neg_fraction(sim[i], rho, da, db, m, mode)
                nev += n
        it += 1
    best = 0
    for i in range(1, n + 1):
        if fsim[i] < fsim[best]:
            best = i
    return sim[best].copy(), fsim[best], nev, it, converged


@_jit
def _run_restarts(starts, rho, da, db, m, mode, step, max_iters, xtol, ftol):
    # each restart re-seeds the simplex around its own optimum until the
    # objective stops moving or the iteration budget is spent
    R, n = starts.shape
    xs = np.empty((R, n))
    fs = np.empty(R)
    nevs = np.zeros(R, dtype=np.int64)
    convs = np.zeros(R, dtype=np.bool_)
    for r in range(R):
        x = starts[r].copy()
        f = 0.0
        f_prev = 1.0
        left = max_iters
        conv = False
        while left > 0:
            x, f, nev, it, conv = _nelder_mead(x, rho, da, db, m, mode, step, left, xtol, ftol)
            nevs[r] += nev
            left -= max(it, 1)
            if f_prev - f <= ftol:
                break
            f_prev = f
        xs[r] = x
        fs[r] = -f
        convs[r] = conv
    return xs, fs, nevs, convs


@_jit
def _batch_fraction(As, Bs, rho, da, db, m):
    out = np.empty(As.shape[0])
    for r in range(As.shape[0]):
        num, den = _fraction(As[r], Bs[r], rho, da, db, m)
        out[r] = num / den if den > PROB_FLOOR else 0.0
    return out


def _batch_fraction_numpy(As, Bs, rho, da, db, m):
    w = np.einsum("rki,rkj->rij", As[:, :m].conj(), Bs[:, :m].conj())
    w = w.reshape(As.shape[0], -1) / np.sqrt(m)
    num = np.real(np.einsum("ri,ij,rj->r", w.conj(), rho, w))
    AA = np.einsum("rqi,rqk->rik", As.conj(), As)
    BB = np.einsum("rqj,rql->rjl", Bs.conj(), Bs)
    den = np.real(np.einsum("rik,rjl,klij->r", AA, BB, rho.reshape(da, db, da, db)))
    safe = np.where(den > PROB_FLOOR, den, 1.0)
    return np.where(den > PROB_FLOOR, num / safe, 0.0)


_SHARED = ("_decode_block", "_identity", "_decode", "_normalize_span", "_project",
           "_neg_fraction", "_nelder_mead", "_run_restarts")


def _numpy_namespace() -> SimpleNamespace:
    glb = dict(globals())
    glb["_fraction"] = _fraction_numpy
    for name in _SHARED:
        f = globals()[name]
        f = getattr(f, "py_func", f)
        glb[name] = types.FunctionType(f.__code__, glb, name, f.__defaults__)
    return SimpleNamespace(
        fraction=_fraction_numpy,
        decode=glb["_decode"],
        neg_fraction=glb["_neg_fraction"],
        nelder_mead=glb["_nelder_mead"],
        run_restarts=glb["_run_restarts"],
        batch_fraction=_batch_fraction_numpy,
    )


def _numba_namespace() -> SimpleNamespace:
    if numba is None:
        raise RuntimeError("numba backend requested but numba is not installed")
    return SimpleNamespace(
        fraction=_fraction,
        decode=_decode,
        neg_fraction=_neg_fraction,
        nelder_mead=_nelder_mead,
        run_restarts=_run_restarts,
        batch_fraction=_batch_fraction,
    )


_BACKENDS: dict[str, SimpleNamespace] = {}


def get_backend(name: str | None = None) -> SimpleNamespace:
    name = default_backend() if name is None else name
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name not in _BACKENDS:
        _BACKENDS[name] = _numba_namespace() if name == "numba" else _numpy_namespace()
    return _BACKENDS[name]


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.complex128)


def filtered_fraction(A, B, rho, da: int, db: int, m: int, backend: str | None = None) -> float:
    """m-singlet fraction of the normalized ``(A (x) B) rho (A (x) B)^dagger``.

    Returns 0 when the filtered trace is below the probability floor.
    """
    num, den = get_backend(backend).fraction(_c(A), _c(B), _c(rho), da, db, m)
    return float(num / den) if den > PROB_FLOOR else 0.0


def batch_filtered_fraction(As, Bs, rho, da: int, db: int, m: int, backend: str | None = None):
    return get_backend(backend).batch_fraction(_c(As), _c(Bs), _c(rho), da, db, m)


def decode_filters(x, da: int, db: int, mode: int) -> tuple[np.ndarray, np.ndarray]:
    return get_backend("numpy").decode(np.asarray(x, dtype=float), da, db, mode)


def maximize_filters(starts, rho, da: int, db: int, m: int, mode: int, *,
                     step: float = 0.1, max_iters: int = 20000, xtol: float = 1e-10,
                     ftol: float = 1e-13, backend: str | None = None):
    """Run one restarted Nelder-Mead search per row of ``starts``.

    Returns ``(x_best, F_best, n_evals, converged)`` arrays indexed by
    restart. Results depend only on the inputs, never on the backend's
    scheduling.
    """
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    if starts.ndim != 2 or starts.shape[1] != n_params(da, db, mode):
        raise ValueError(f"starts must have shape (R, {n_params(da, db, mode)})")
    return get_backend(backend).run_restarts(
        starts, _c(rho), int(da), int(db), int(m), int(mode),
        float(step), int(max_iters), float(xtol), float(ftol),
    )
