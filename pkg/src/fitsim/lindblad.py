"""Lindblad generator, time evolution and stationary states.

The generator is

    L(rho) = -i[H, rho] + sum_decays G (c rho c^+ - {c^+ c, rho}/2)
             + sum_dephasings g (2 P rho P - P rho - rho P)

with ``c = |b><a|`` on one site and ``P = |a><a|``. The dephasing term is used
exactly as written, so a rate ``g`` damps a coherence between the dephased
level and any other level at ``g`` per unit time from each side (twice the
usual Lindblad convention for the same symbol).

Superoperators act on column-major vectorisations,
``vec(A X B) = (B^T kron A) vec(X)``, so element ``(i, j)`` sits at
``i + j*dim``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import kernels
from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    HermiticityError,
    NonUniqueSteadyStateError,
    NormalizationError,
    NumericalInstabilityError,
)
from .hilbert import CONTROL, ONE_PHOTON, TARGET, level_mask, site_sigma

log = logging.getLogger(__name__)

DEFAULT_CAP = 2048
STEADY_TOL = 1e-10
TRACE_TOL = 1e-9
HERM_TOL = 1e-9
POS_TOL = 1e-8


@dataclass(frozen=True)
class Decay:
    site: int
    from_level: int
    to_level: int
    rate: float


@dataclass(frozen=True)
class Dephasing:
    site: int
    level: int
    rate: float


@dataclass(frozen=True)
class DissipatorSpec:
    decays: tuple = ()
    dephasings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "decays", tuple(self.decays))
        object.__setattr__(self, "dephasings", tuple(self.dephasings))
        for item in self.decays + self.dephasings:
            if not item.rate >= 0:
                raise ConfigError(f"negative or undefined rate in {item}", field="rate")

    @classmethod
    def standard(cls, space, gamma_21=1.0, gamma_32=1e-3, gamma_control=1.0,
                 gamma_control_21=1.0, dephasing=None):
        """Radiative decays for every site of ``space``.

        Targets decay 2->1 at ``gamma_21`` and 3->2 at ``gamma_32``. One-photon
        controls decay 3->1 at ``gamma_control``; two-photon controls decay
        2->1 at ``gamma_control_21`` and 3->2 at ``gamma_control``.
        ``dephasing`` maps ``(role, level)`` to a rate, e.g. ``{("target", 3): 0.01}``.
        """
        decays = []
        deph = []
        for i, site in enumerate(space.sites):
            if site.role == TARGET:
                decays += [Decay(i, 2, 1, gamma_21), Decay(i, 3, 2, gamma_32)]
            elif site.drive_scheme == ONE_PHOTON:
                decays.append(Decay(i, 3, 1, gamma_control))
            else:
                decays += [Decay(i, 2, 1, gamma_control_21), Decay(i, 3, 2, gamma_control)]
            for (role, level), rate in (dephasing or {}).items():
                if role == site.role and site.has_level(level) and rate:
                    deph.append(Dephasing(i, level, rate))
        return cls(tuple(d for d in decays if d.rate > 0), tuple(deph))


def _stride(space, site):
    return math.prod(space.dims[site + 1:])


def jump_tables(space, spec):
    """Kernel tables ``(src, dst, offsets, rates, elem)`` for ``spec``."""
    dim = space.total_dim
    src, dst, offsets, rates = [], [], [0], []
    outflow = np.zeros(dim)
    w = np.zeros((dim, dim))
    for dec in spec.decays:
        _check_site(space, dec.site)
        site = space.sites[dec.site]
        mask = level_mask(space, dec.site, dec.from_level)
        shift = (site.level_index(dec.to_level) - site.level_index(dec.from_level)) * _stride(space, dec.site)
        idx = np.flatnonzero(mask)
        src.append(idx)
        dst.append(idx + shift)
        offsets.append(offsets[-1] + idx.size)
        rates.append(dec.rate)
        outflow += dec.rate * mask
    for dph in spec.dephasings:
        _check_site(space, dph.site)
        m = level_mask(space, dph.site, dph.level).astype(float)
        w += 2.0 * dph.rate * np.outer(m, m)
        outflow += 2.0 * dph.rate * m
    elem = (w - 0.5 * (outflow[:, None] + outflow[None, :])).astype(np.complex128)
    cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)
    return cat(src), cat(dst), np.asarray(offsets, np.int64), np.asarray(rates, float), elem


def _check_site(space, i):
    if not 0 <= i < space.n_sites:
        raise ConfigError(f"dissipator refers to missing site {i}", field="site")


def jump_operators(space, spec):
    """Dense collapse operators ``sqrt(rate) c`` (dephasing as ``sqrt(2 g) P``)."""
    ops = [math.sqrt(d.rate) * site_sigma(space, d.site, d.to_level, d.from_level) for d in spec.decays]
    ops += [math.sqrt(2.0 * d.rate) * site_sigma(space, d.site, d.level, d.level) for d in spec.dephasings]
    return ops


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Immutable generator for one Hamiltonian and dissipator set."""

    space: object
    hamiltonian: np.ndarray
    dissipators: DissipatorSpec
    _tables: tuple = field(init=False, repr=False)

    def __post_init__(self):
        h = np.ascontiguousarray(self.hamiltonian, dtype=np.complex128)
        dim = self.space.total_dim
        if h.shape != (dim, dim):
            raise DimensionError(f"Hamiltonian shape {h.shape} does not match dim {dim}")
        if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-12:
            raise HermiticityError("Hamiltonian is not hermitian")
        h.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "_tables", jump_tables(self.space, self.dissipators))

    @property
    def dim(self):
        return self.space.total_dim

    def with_hamiltonian(self, h):
        return Liouvillian(self.space, h, self.dissipators)


# ---------------------------------------------------------------------------
# Generator action and assembly
# ---------------------------------------------------------------------------


def apply_liouvillian(L, rho):
    """Matrix-free ``d rho / dt``."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (L.dim, L.dim):
        raise DimensionError(f"state shape {rho.shape} does not match dim {L.dim}")
    return kernels.lindblad_rhs(L.hamiltonian, rho, *L._tables)


def assemble_superoperator(L, cap=DEFAULT_CAP):
    """Dense ``dim^2 x dim^2`` generator acting on column-major ``vec(rho)``."""
    n = L.dim
    if n * n > cap:
        raise CapacityError(f"superoperator side {n * n} exceeds cap {cap}; use the matrix-free path")
    h = L.hamiltonian
    eye = np.eye(n)
    s = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    src, dst, offsets, rates, elem = L._tables
    s[np.diag_indices(n * n)] += elem.ravel(order="F")
    for k, rate in enumerate(rates):
        a = src[offsets[k]:offsets[k + 1]]
        b = dst[offsets[k]:offsets[k + 1]]
        rows = (b[:, None] + n * b[None, :]).ravel()
        cols = (a[:, None] + n * a[None, :]).ravel()
        np.add.at(s, (rows, cols), rate)
    return s


def vec(rho):
    return np.asarray(rho).ravel(order="F")


def unvec(x, n):
    return np.asarray(x).reshape((n, n), order="F")


# ---------------------------------------------------------------------------
# Density-matrix checks and evolution
# ---------------------------------------------------------------------------


def ground_state(space):
    dim = space.total_dim
    rho = np.zeros((dim, dim), dtype=np.complex128)
    g = space.ground_index()
    rho[g, g] = 1.0
    return rho


def density_violation(rho, trace_tol=TRACE_TOL, herm_tol=HERM_TOL, pos_tol=POS_TOL):
    """Return a description of the first violated invariant, or ``None``."""
    if not np.all(np.isfinite(rho)):
        return "non-finite entries"
    tr = np.trace(rho)
    if abs(tr - 1.0) >= trace_tol:
        return f"trace {tr.real:.3e}{tr.imag:+.3e}j"
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm >= herm_tol:
        return f"hermiticity defect {herm:.3e}"
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo <= -pos_tol:
        return f"negative eigenvalue {lo:.3e}"
    return None


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self):
        return self.states[-1]


def evolve(L, rho0, t_final, dt, store_every=1, check=True):
    """Classical RK4 integration from ``rho0`` to ``t_final``.

    States are stored every ``store_every`` steps (and at the end). When
    ``dt`` does not divide ``t_final`` the step is shrunk to the next divisor.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive", field="dt")
    if t_final < 0:
        raise ConfigError("t_final must be non-negative", field="t_final")
    rho = np.array(rho0, dtype=np.complex128)
    if rho.shape != (L.dim, L.dim):
        raise DimensionError(f"state shape {rho.shape} does not match dim {L.dim}")
    bad = density_violation(rho)
    if bad:
        raise NormalizationError(f"initial state is not a density matrix: {bad}")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-12 * max(1.0, t_final):
        n_steps = int(math.ceil(t_final / dt))
    h = t_final / n_steps if n_steps else 0.0
    store_every = max(1, int(store_every))
    times, states = [0.0], [rho.copy()]
    done = 0
    while done < n_steps:
        chunk = min(store_every, n_steps - done)
        rho = kernels.rk4_advance(L.hamiltonian, rho, *L._tables, h, chunk)
        done += chunk
        if check:
            bad = density_violation(rho)
            if bad:
                raise NumericalInstabilityError(f"state invariant violated: {bad}", step=done)
        times.append(done * h)
        states.append(rho.copy())
    return Trajectory(np.asarray(times), np.asarray(states))


# ---------------------------------------------------------------------------
# Stationary states
# ---------------------------------------------------------------------------


def _trace_constrained(s, n):
    m = s.copy()
    m[0, :] = 0.0
    m[0, np.arange(n) * (n + 1)] = 1.0
    return m


def _finish(rho):
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def _require_unique(s):
    sv = np.linalg.svd(s, compute_uv=False)
    null = int(np.sum(sv <= 1e-11 * max(sv[0], 1.0)))
    if null > 1:
        raise NonUniqueSteadyStateError(f"stationary subspace has dimension {null}")


def _steady_dense(L, cap, tol):
    n = L.dim
    s = assemble_superoperator(L, cap=cap)
    _require_unique(s)
    m = _trace_constrained(s, n)
    b = np.zeros(n * n, dtype=np.complex128)
    b[0] = 1.0
    lu = sla.lu_factor(m)
    x = sla.lu_solve(lu, b)
    for _ in range(2):
        r = b - m @ x
        if np.max(np.abs(r)) < 1e-3 * tol:
            break
        x += sla.lu_solve(lu, r)
    return _finish(unvec(x, n))


def _no_jump_inverse(L):
    n = L.dim
    cdc = np.zeros(n)
    src, dst, offsets, rates, elem = L._tables
    # Total outflow of each basis state, i.e. the diagonal of sum c^+ c.
    for k, rate in enumerate(rates):
        cdc[src[offsets[k]:offsets[k + 1]]] += rate
    for dph in L.dissipators.dephasings:
        cdc += 2.0 * dph.rate * level_mask(L.space, dph.site, dph.level)
    heff = L.hamiltonian - 0.5j * np.diag(cdc)
    lam, r = np.linalg.eig(heff)
    ri = np.linalg.inv(r)
    den = -1j * (lam[:, None] - lam.conj()[None, :])
    tiny = np.abs(den) < 1e-12 * max(1.0, np.max(np.abs(den)))
    den[tiny] = 1.0

    def apply(y):
        yy = unvec(y, n)
        return vec(r @ ((ri @ yy @ ri.conj().T) / den) @ r.conj().T)

    return apply


def _steady_krylov(L, tol, maxiter=50, restart=200):
    n = L.dim
    eye = np.eye(n, dtype=np.complex128) / n
    h = L.hamiltonian
    tables = L._tables

    def op(x):
        rho = unvec(x, n)
        return vec(kernels.lindblad_rhs(h, np.ascontiguousarray(rho), *tables) + np.trace(rho) * eye)

    a = spla.LinearOperator((n * n, n * n), matvec=op, dtype=np.complex128)
    m = spla.LinearOperator((n * n, n * n), matvec=_no_jump_inverse(L), dtype=np.complex128)
    x, info = spla.gmres(a, vec(eye), M=m, rtol=1e-3 * tol, atol=0.0, restart=restart, maxiter=maxiter)
    if info != 0:
        raise ConvergenceError(f"preconditioned GMRES did not converge (info={info})")
    return _finish(unvec(x, n))


def _steady_evolve(L, tol, max_time, dt=None):
    n = L.dim
    src, dst, offsets, rates, elem = L._tables
    scale = np.max(np.abs(np.linalg.eigvalsh(L.hamiltonian)), initial=0.0) * 2.0
    scale += np.max(np.abs(elem), initial=0.0) + np.sum(rates)
    h = dt if dt is not None else 1.0 / max(scale, 1e-3)
    rho = ground_state(L.space)
    t = 0.0
    chunk = max(1, int(1.0 / h))
    while t < max_time:
        rho = kernels.rk4_advance(L.hamiltonian, rho, *L._tables, h, chunk)
        t += chunk * h
        if np.max(np.abs(apply_liouvillian(L, rho))) < tol:
            return _finish(rho)
        if not np.all(np.isfinite(rho)):
            raise NumericalInstabilityError("relaxation diverged", step=int(t / h))
    raise ConvergenceError(f"no stationary state reached within t={max_time}")


def steady_state(L, method="auto", tol=STEADY_TOL, cap=DEFAULT_CAP, max_time=1e5, check=True):
    """Stationary density matrix of ``L``.

    ``method`` is ``"dense"`` (LU on the trace-constrained superoperator),
    ``"krylov"`` (matrix-free preconditioned GMRES), ``"evolve"`` (RK4
    relaxation from the ground state) or ``"auto"``: dense while the
    superoperator fits under ``cap``, Krylov otherwise.
    """
    if method == "auto":
        method = "dense" if L.dim**2 <= cap else "krylov"
    if method == "dense":
        rho = _steady_dense(L, cap, tol)
    elif method == "krylov":
        rho = _steady_krylov(L, tol)
    elif method == "evolve":
        rho = _steady_evolve(L, tol, max_time)
    else:
        raise ConfigError(f"unknown steady-state method {method!r}", field="method")
    if check:
        res = np.max(np.abs(apply_liouvillian(L, rho)))
        if not res < tol * max(1.0, _norm_scale(L)):
            raise ConvergenceError(f"steady-state residual {res:.3e} above tolerance")
    return rho


def _norm_scale(L):
    # Residuals of a unit-trace state scale with the largest generator entry.
    return max(np.max(np.abs(L.hamiltonian)), np.max(np.abs(L._tables[4])))


# ---------------------------------------------------------------------------
# Batched stationary states for parameter families
# ---------------------------------------------------------------------------


def superoperator_parts(space, static, diagonals, spec, cap=DEFAULT_CAP):
    """Trace-constrained superoperator split into a base and diagonal directions.

    ``H = static + sum_k p_k diag(diagonals[k])``. Returns the constrained base
    matrix ``M0`` (for all ``p_k = 0``) and, per direction, the superoperator
    diagonal ``-i (h_i - h_j)`` in column-major order. Row 0 of every
    direction is zeroed because it carries the trace condition.
    """
    n = space.total_dim
    L0 = Liouvillian(space, static, spec)
    m0 = _trace_constrained(assemble_superoperator(L0, cap=cap), n)
    dirs = []
    for d in diagonals:
        d = np.asarray(d, dtype=float)
        sd = (-1j * (d[:, None] - d[None, :])).ravel(order="F")
        sd[0] = 0.0
        dirs.append(sd)
    return m0, dirs


def steady_state_batch(space, static, diagonals, params, spec, cap=DEFAULT_CAP):
    """Stationary states for many parameter points sharing one static part.

    ``params`` has shape ``(K, len(diagonals))``. Returns ``(K, dim, dim)``.
    """
    n = space.total_dim
    m0, dirs = superoperator_parts(space, static, diagonals, spec, cap)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    k = params.shape[0]
    # Uniqueness is checked at the first point only; it is generic in the parameters.
    h0 = static + sum(p * np.diag(np.asarray(d, float)) for p, d in zip(params[0], diagonals))
    _require_unique(assemble_superoperator(Liouvillian(space, h0, spec), cap=cap))
    mats = np.broadcast_to(m0, (k,) + m0.shape).copy()
    diag_idx = np.arange(n * n)
    for j, sd in enumerate(dirs):
        mats[:, diag_idx, diag_idx] += params[:, j:j + 1] * sd[None, :]
    b = np.zeros((k, n * n), dtype=np.complex128)
    b[:, 0] = 1.0
    x = kernels.solve_batch(mats, b)
    rho = x.reshape(k, n, n).transpose(0, 2, 1)
    rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
    return rho / np.trace(rho, axis1=1, axis2=2).real[:, None, None]


class ScalarResponse:
    """Exact stationary response to one scalar entering the Hamiltonian diagonally.

    For ``H(s) = H_base + s diag(d)`` the constrained superoperator is
    ``M(s) = M0 + s E D E^T`` where ``E`` selects the ``k`` vectorised entries
    touched by ``d``. With ``x0 = M0^{-1} e0``, ``W = M0^{-1} E`` and the
    eigendecomposition ``D E^T W = Q diag(lam) Q^{-1}`` the Woodbury identity
    gives, for any selected entries,

        x(s) = x0 - sum_k a_k s / (1 + s lam_k),

    so each further ``s`` costs ``O(k)`` instead of a dense solve.
    """

    def __init__(self, space, h_base, direction, spec, entries, cap=DEFAULT_CAP):
        n = space.total_dim
        m0, (sd,) = superoperator_parts(space, h_base, [direction], spec, cap)
        sel = np.flatnonzero(sd != 0)
        e0 = np.zeros(n * n, dtype=np.complex128)
        e0[0] = 1.0
        rhs = np.zeros((n * n, sel.size + 1), dtype=np.complex128)
        rhs[:, 0] = e0
        rhs[sel, np.arange(1, sel.size + 1)] = 1.0
        sol = sla.lu_solve(sla.lu_factor(m0), rhs)
        x0, w = sol[:, 0], sol[:, 1:]
        dvals = sd[sel]
        cap_mat = dvals[:, None] * w[sel, :]
        lam, q = np.linalg.eig(cap_mat)
        cond = np.linalg.cond(q)
        if not cond < 1e10:
            raise ConvergenceError(f"ill-conditioned pole expansion (cond {cond:.2e})")
        proj = np.linalg.solve(q, dvals * x0[sel])
        idx = np.array([i + j * n for i, j in entries], dtype=np.int64)
        self.entries = tuple(entries)
        self.x0 = x0[idx]
        self.residues = (w[idx, :] @ q) * proj[None, :]
        self.poles = lam

    def __call__(self, s):
        """Selected stationary matrix elements; output shape ``s.shape + (n_entries,)``."""
        s = np.asarray(s, dtype=float)
        frac = s[..., None] / (1.0 + s[..., None] * self.poles)
        return self.x0 - frac @ self.residues.T
