"""Hot numerical kernels with a numba path and a pure-numpy twin.

The backend is picked once at import from ``FITSIM_BACKEND`` (``numba`` or
``numpy``; default ``numba`` when it is importable) and can be switched at run
time with :func:`set_backend`. Both paths implement the same arithmetic so the
test-suite can compare them directly.

Conventions used by the Lindblad kernels: density matrices are dense
``complex128`` arrays; jump operators are single-element operators
``|b><a|`` embedded in the composite space, so their action is a scatter of
matrix elements. ``src``/``dst`` hold, concatenated for every jump, the basis
indices with the jumping site in level ``a`` and the same indices with that
site moved to level ``b``; ``offsets`` delimits the jumps. Everything that is
elementwise (anticommutators and dephasing) is folded into ``elem``.
"""

from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

try:
    import numba
    from numba import njit, prange

    NUMBA_AVAILABLE = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # The system TBB is often too old for numba; OpenMP is thread-safe.
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    NUMBA_AVAILABLE = False

_VALID = ("numba", "numpy")


def _initial_backend():
    name = os.environ.get("FITSIM_BACKEND", "numba").strip().lower()
    if name not in _VALID:
        log.warning("unknown FITSIM_BACKEND=%r, using numpy", name)
        return "numpy"
    if name == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return name


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for all subsequent kernel calls."""
    global _backend
    name = name.lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not importable")
    _backend = name


def available_backends():
    return _VALID if NUMBA_AVAILABLE else ("numpy",)


def set_num_threads(n):
    if NUMBA_AVAILABLE and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# --------------------------------------------------------------------------
# Cyclic Jacobi diagonalisation of a complex hermitian matrix
# --------------------------------------------------------------------------


def _rotation(app, aqq, apq):
    # U = diag(1, e^{-i phi}) @ [[c, s], [-s, c]] zeroes the (p, q) element.
    r = abs(apq)
    phase = apq / r
    theta = (aqq - app) / (2.0 * r)
    if theta >= 0.0:
        t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
    else:
        t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    ph = np.conj(phase)
    return c, s, ph, t, r


def _jacobi_eigh_numpy(a, tol, max_sweeps):
    A = np.array(a, dtype=np.complex128, copy=True)
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        upper = np.triu(A, 1)
        off = float(np.sum(np.abs(upper) ** 2))
        scale = float(np.sum(np.abs(np.diag(A)) ** 2)) + 2.0 * off
        if off <= tol * tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                c, s, ph, t, r = _rotation(app, aqq, apq)
                u00, u01, u10, u11 = c, s, -s * ph, c * ph
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = cp * u00 + cq * u10
                A[:, q] = cp * u01 + cq * u11
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = np.conj(u00) * rp + np.conj(u10) * rq
                A[q, :] = np.conj(u01) * rp + np.conj(u11) * rq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = app - t * r
                A[q, q] = aqq + t * r
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = vp * u00 + vq * u10
                V[:, q] = vp * u01 + vq * u11
    return np.diag(A).real.copy(), V, sweeps


def _jacobi_eigh_loops(a, tol, max_sweeps):
    n = a.shape[0]
    A = a.copy()
    V = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        V[i, i] = 1.0
    sweeps = 0
    for sw in range(1, max_sweeps + 1):
        sweeps = sw
        off = 0.0
        diag = 0.0
        for i in range(n):
            diag += abs(A[i, i]) ** 2
            for j in range(i + 1, n):
                off += abs(A[i, j]) ** 2
        if off <= tol * tol * (diag + 2.0 * off) or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                r = abs(apq)
                if r < 1e-300:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                phase = apq / r
                theta = (aqq - app) / (2.0 * r)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ph = np.conj(phase)
                u10 = -s * ph
                u11 = c * ph
                for k in range(n):
                    xp = A[k, p]
                    xq = A[k, q]
                    A[k, p] = xp * c + xq * u10
                    A[k, q] = xp * s + xq * u11
                for k in range(n):
                    xp = A[p, k]
                    xq = A[q, k]
                    A[p, k] = c * xp + np.conj(u10) * xq
                    A[q, k] = s * xp + np.conj(u11) * xq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = app - t * r
                A[q, q] = aqq + t * r
                for k in range(n):
                    xp = V[k, p]
                    xq = V[k, q]
                    V[k, p] = xp * c + xq * u10
                    V[k, q] = xp * s + xq * u11
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i].real
    return w, V, sweeps


# --------------------------------------------------------------------------
# Matrix-free Lindblad right-hand side and RK4 stepping
# --------------------------------------------------------------------------


def _lindblad_rhs_numpy(h, rho, src, dst, offsets, rates, elem):
    out = -1j * (h @ rho - rho @ h)
    out += elem * rho
    for k in range(rates.shape[0]):
        s = src[offsets[k]:offsets[k + 1]]
        d = dst[offsets[k]:offsets[k + 1]]
        out[np.ix_(d, d)] += rates[k] * rho[np.ix_(s, s)]
    return out


def _lindblad_rhs_loops(h, rho, src, dst, offsets, rates, elem):
    out = -1j * (h @ rho - rho @ h)
    n = rho.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] += elem[i, j] * rho[i, j]
    for k in range(rates.shape[0]):
        g = rates[k]
        lo = offsets[k]
        hi = offsets[k + 1]
        for x in range(lo, hi):
            sx = src[x]
            dx = dst[x]
            for y in range(lo, hi):
                out[dx, dst[y]] += g * rho[sx, src[y]]
    return out


def _rk4_numpy(h, rho, src, dst, offsets, rates, elem, dt, n_steps):
    r = np.array(rho, dtype=np.complex128, copy=True)
    for _ in range(n_steps):
        k1 = _lindblad_rhs_numpy(h, r, src, dst, offsets, rates, elem)
        k2 = _lindblad_rhs_numpy(h, r + 0.5 * dt * k1, src, dst, offsets, rates, elem)
        k3 = _lindblad_rhs_numpy(h, r + 0.5 * dt * k2, src, dst, offsets, rates, elem)
        k4 = _lindblad_rhs_numpy(h, r + dt * k3, src, dst, offsets, rates, elem)
        r = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return r


# --------------------------------------------------------------------------
# Batched dense linear solves (partial-pivot LU, complex)
# --------------------------------------------------------------------------


def _solve_batch_numpy(a, b):
    return np.linalg.solve(a, b)


def _solve_batch_loops(a, b):
    K, n, _ = a.shape
    m = b.shape[2]
    x = np.empty((K, n, m), dtype=np.complex128)
    for k in prange(K):
        M = a[k].copy()
        y = b[k].copy()
        for c in range(n):
            p = c
            mx = abs(M[c, c])
            for r in range(c + 1, n):
                v = abs(M[r, c])
                if v > mx:
                    mx = v
                    p = r
            if p != c:
                for j in range(n):
                    tmp = M[c, j]
                    M[c, j] = M[p, j]
                    M[p, j] = tmp
                for j in range(m):
                    tmp = y[c, j]
                    y[c, j] = y[p, j]
                    y[p, j] = tmp
            inv = 1.0 / M[c, c]
            for r in range(c + 1, n):
                f = M[r, c] * inv
                if f != 0.0:
                    for j in range(c + 1, n):
                        M[r, j] -= f * M[c, j]
                    for j in range(m):
                        y[r, j] -= f * y[c, j]
        for c in range(n - 1, -1, -1):
            inv = 1.0 / M[c, c]
            for j in range(m):
                s = y[c, j]
                for q in range(c + 1, n):
                    s -= M[c, q] * x[k, q, j]
                x[k, c, j] = s * inv
    return x


# --------------------------------------------------------------------------
# Batched vectorised-Liouvillian action with a field-dependent probe term
# --------------------------------------------------------------------------


def _superop_rhs_numpy(base, plus, minus, x, field):
    out = np.einsum("kij,kj->ki", base, x)
    out += field[:, None] * (x @ plus.T)
    out += np.conj(field)[:, None] * (x @ minus.T)
    return out


def _superop_rhs_loops(base, plus, minus, x, field):
    K, n = x.shape
    out = np.empty((K, n), dtype=np.complex128)
    for k in prange(K):
        e = field[k]
        ec = np.conj(e)
        for i in range(n):
            acc = 0.0j
            for j in range(n):
                acc += (base[k, i, j] + e * plus[i, j] + ec * minus[i, j]) * x[k, j]
            out[k, i] = acc
    return out


# --------------------------------------------------------------------------
# Co-moving-frame Maxwell-Bloch march (RK4 in time, upwind field in space)
#
# Every cell shares one off-diagonal generator; cells differ only on the
# diagonal. The shared part is passed in coordinate form (rows, cols) with
# three value arrays: field-independent, coefficient of e and of conj(e).
# --------------------------------------------------------------------------


def _td_field_numpy(x, e_in, i21, coupling):
    rho21 = x[:, i21].sum(axis=1)
    e = np.empty(x.shape[0], dtype=np.complex128)
    e[0] = e_in
    e[1:] = e_in + coupling * np.cumsum(rho21[:-1])
    return e


def _td_rhs_numpy(diag, shared_t, pt, mt, x, e):
    return diag * x + x @ shared_t + e[:, None] * (x @ pt) + np.conj(e)[:, None] * (x @ mt)


def _td_march_numpy(diag, rows, cols, v0, prow, pcol, vp, vm, x, inp, i21, coupling, h, slice_steps, peak_step):
    n_steps = inp.shape[0] - 1
    ncell = x.shape[0]
    energy = np.zeros(ncell)
    slices = np.zeros((slice_steps.shape[0], ncell), dtype=np.complex128)
    peak = x.copy()
    x = x.copy()
    n = x.shape[1]
    mats = []
    for r, c, v in ((rows, cols, v0), (prow, pcol, vp), (prow, pcol, vm)):
        m = np.zeros((n, n), dtype=np.complex128)
        np.add.at(m, (r, c), v)
        mats.append(np.ascontiguousarray(m.T))
    shared_t, pt, mt = mats

    def f(xs, ein):
        return _td_rhs_numpy(diag, shared_t, pt, mt, xs, _td_field_numpy(xs, ein, i21, coupling))

    e = _td_field_numpy(x, inp[0], i21, coupling)
    s = 0
    for step in range(n_steps + 1):
        while s < slice_steps.shape[0] and slice_steps[s] == step:
            slices[s] = e
            s += 1
        if step == peak_step:
            peak = x.copy()
        w = 0.5 if (step == 0 or step == n_steps) else 1.0
        energy += w * np.abs(e) ** 2
        if step == n_steps:
            break
        e0, e1 = inp[step], inp[step + 1]
        em = 0.5 * (e0 + e1)
        k1 = f(x, e0)
        k2 = f(x + 0.5 * h * k1, em)
        k3 = f(x + 0.5 * h * k2, em)
        k4 = f(x + h * k3, e1)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return energy, slices, peak, x, step + 1
        e = _td_field_numpy(x, e1, i21, coupling)
    return energy, slices, peak, x, -1


def _td_field_loops(xt, e_in, i21, coupling, e):
    # xt is (n, ncell): cells contiguous.
    acc = e_in
    for c in range(xt.shape[1]):
        e[c] = acc
        r = 0.0j
        for m in range(i21.shape[0]):
            r += xt[i21[m], c]
        acc = acc + coupling * r


def _td_rhs_loops(diagt, rows, cols, v0, prow, pcol, vp, vm, xt, e, out):
    n, ncell = xt.shape
    for i in range(n):
        for c in range(ncell):
            out[i, c] = diagt[i, c] * xt[i, c]
    for k in range(rows.shape[0]):
        r = rows[k]
        q = cols[k]
        v = v0[k]
        for c in range(ncell):
            out[r, c] += v * xt[q, c]
    for k in range(prow.shape[0]):
        r = prow[k]
        q = pcol[k]
        a = vp[k]
        b = vm[k]
        for c in range(ncell):
            out[r, c] += (a * e[c] + b * np.conj(e[c])) * xt[q, c]


def _td_march_loops(diag, rows, cols, v0, prow, pcol, vp, vm, x, inp, i21, coupling, h, slice_steps, peak_step):
    n_steps = inp.shape[0] - 1
    ncell, n = x.shape
    diagt = np.ascontiguousarray(diag.T)
    xt = np.ascontiguousarray(x.T)
    energy = np.zeros(ncell)
    slices = np.zeros((slice_steps.shape[0], ncell), dtype=np.complex128)
    peak = xt.copy()
    e = np.empty(ncell, dtype=np.complex128)
    k1 = np.empty_like(xt)
    k2 = np.empty_like(xt)
    k3 = np.empty_like(xt)
    k4 = np.empty_like(xt)
    y = np.empty_like(xt)
    _td_field_nb(xt, inp[0], i21, coupling, e)
    s = 0
    failed = -1
    for step in range(n_steps + 1):
        while s < slice_steps.shape[0] and slice_steps[s] == step:
            slices[s, :] = e
            s += 1
        if step == peak_step:
            peak[:, :] = xt
        w = 0.5 if (step == 0 or step == n_steps) else 1.0
        for c in range(ncell):
            energy[c] += w * (e[c].real ** 2 + e[c].imag ** 2)
        if step == n_steps:
            break
        e0 = inp[step]
        e1 = inp[step + 1]
        em = 0.5 * (e0 + e1)
        _td_rhs_nb(diagt, rows, cols, v0, prow, pcol, vp, vm, xt, e, k1)
        y[:, :] = xt + 0.5 * h * k1
        _td_field_nb(y, em, i21, coupling, e)
        _td_rhs_nb(diagt, rows, cols, v0, prow, pcol, vp, vm, y, e, k2)
        y[:, :] = xt + 0.5 * h * k2
        _td_field_nb(y, em, i21, coupling, e)
        _td_rhs_nb(diagt, rows, cols, v0, prow, pcol, vp, vm, y, e, k3)
        y[:, :] = xt + h * k3
        _td_field_nb(y, e1, i21, coupling, e)
        _td_rhs_nb(diagt, rows, cols, v0, prow, pcol, vp, vm, y, e, k4)
        xt[:, :] = xt + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(xt)):
            failed = step + 1
            break
        _td_field_nb(xt, e1, i21, coupling, e)
    return energy, slices, np.ascontiguousarray(peak.T), np.ascontiguousarray(xt.T), failed


if NUMBA_AVAILABLE:
    _jacobi_eigh_numba = njit(cache=True)(_jacobi_eigh_loops)
    _lindblad_rhs_numba = njit(cache=True)(_lindblad_rhs_loops)
    _solve_batch_numba = njit(cache=True, parallel=True)(_solve_batch_loops)
    _superop_rhs_numba = njit(cache=True, parallel=True)(_superop_rhs_loops)
    # _td_march_loops calls these two by global name.
    _td_field_nb = njit(cache=True)(_td_field_loops)
    _td_rhs_nb = njit(cache=True)(_td_rhs_loops)
    _td_march_numba = njit(cache=True)(_td_march_loops)

    @njit(cache=True)
    def _rk4_numba(h, rho, src, dst, offsets, rates, elem, dt, n_steps):
        r = rho.copy()
        for _ in range(n_steps):
            k1 = _lindblad_rhs_numba(h, r, src, dst, offsets, rates, elem)
            k2 = _lindblad_rhs_numba(h, r + 0.5 * dt * k1, src, dst, offsets, rates, elem)
            k3 = _lindblad_rhs_numba(h, r + 0.5 * dt * k2, src, dst, offsets, rates, elem)
            k4 = _lindblad_rhs_numba(h, r + dt * k3, src, dst, offsets, rates, elem)
            r = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return r


# --------------------------------------------------------------------------
# Public dispatchers
# --------------------------------------------------------------------------


def jacobi_eigh(a, tol=1e-15, max_sweeps=60):
    """Eigen-decompose a hermitian matrix by cyclic Jacobi rotations.

    Returns unsorted eigenvalues, the eigenvector matrix (columns) and the
    number of sweeps used.
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    if _backend == "numba":
        return _jacobi_eigh_numba(a, tol, max_sweeps)
    return _jacobi_eigh_numpy(a, tol, max_sweeps)


def lindblad_rhs(h, rho, src, dst, offsets, rates, elem):
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if _backend == "numba":
        return _lindblad_rhs_numba(h, rho, src, dst, offsets, rates, elem)
    return _lindblad_rhs_numpy(h, rho, src, dst, offsets, rates, elem)


def rk4_advance(h, rho, src, dst, offsets, rates, elem, dt, n_steps):
    """Advance ``rho`` by ``n_steps`` classical RK4 steps of size ``dt``."""
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if _backend == "numba":
        return _rk4_numba(h, rho, src, dst, offsets, rates, elem, float(dt), int(n_steps))
    return _rk4_numpy(h, rho, src, dst, offsets, rates, elem, float(dt), int(n_steps))


def solve_batch(a, b):
    """Solve ``a[k] @ x[k] = b[k]`` for a stack of square systems.

    ``b`` may be ``(K, n)`` or ``(K, n, m)``; the result has the same shape.
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    vector = b.ndim == 2
    if vector:
        b = b[:, :, None]
    b = np.ascontiguousarray(b)
    if _backend == "numba":
        x = _solve_batch_numba(a, b)
    else:
        x = _solve_batch_numpy(a, b)
    return x[:, :, 0] if vector else x


def td_march(diag, shared, plus, minus, x, inp, i21, coupling, h, slice_steps, peak_step):
    """March per-cell states through a probe pulse in the co-moving frame.

    Cell ``c`` has generator ``diag(diag[c]) + shared + e_c plus +
    conj(e_c) minus`` (``shared``, ``plus`` and ``minus`` with zero diagonal
    for ``shared``), where ``e_0`` is the input sample and
    ``e_{c+1} = e_c + coupling * rho21_c``.
    Returns the trapezoidal energy ``sum |e_c|^2`` per cell, field slices at
    ``slice_steps``, the state at ``peak_step``, the final state and the
    first failing step (``-1`` if none).
    """
    shared, plus, minus = (np.asarray(m, dtype=np.complex128) for m in (shared, plus, minus))
    rows, cols = np.nonzero(shared)
    prow, pcol = np.nonzero((plus != 0) | (minus != 0))
    args = (
        np.ascontiguousarray(diag, dtype=np.complex128),
        rows.astype(np.int64), cols.astype(np.int64),
        np.ascontiguousarray(shared[rows, cols]),
        prow.astype(np.int64), pcol.astype(np.int64),
        np.ascontiguousarray(plus[prow, pcol]),
        np.ascontiguousarray(minus[prow, pcol]),
        np.ascontiguousarray(x, dtype=np.complex128),
        np.ascontiguousarray(inp, dtype=np.complex128),
        np.ascontiguousarray(i21, dtype=np.int64),
        complex(coupling), float(h),
        np.ascontiguousarray(slice_steps, dtype=np.int64), int(peak_step),
    )
    if _backend == "numba":
        return _td_march_numba(*args)
    return _td_march_numpy(*args)


def superop_rhs(base, plus, minus, x, field):
    """``base[k] @ x[k] + field[k] * plus @ x[k] + conj(field[k]) * minus @ x[k]``."""
    x = np.ascontiguousarray(x, dtype=np.complex128)
    field = np.ascontiguousarray(field, dtype=np.complex128)
    if _backend == "numba":
        return _superop_rhs_numba(base, plus, minus, x, field)
    return _superop_rhs_numpy(base, plus, minus, x, field)
