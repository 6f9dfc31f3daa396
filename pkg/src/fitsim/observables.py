"""Observables of stationary states and detuning sweeps.

Coherences follow ``rho_ab = Tr(rho s_ba) = <a|rho|b>``, so ``Im rho_21 > 0``
is absorption of the probe on the target's 1-2 transition.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import lindblad as lb
from .dressed import bell_states, blockade_state, embed_state
from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    DivisionByZeroError,
    FitSimError,
    NormalizationError,
    UndefinedStatisticError,
)
from .hilbert import (
    CONTROL,
    TARGET,
    DriveParams,
    InteractionSpec,
    hamiltonian_parts,
    level_mask,
    site_sigma,
)
from .units import EPSILON_0, GAMMA_SI, HBAR

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Single-state observables
# ---------------------------------------------------------------------------


def expectation(rho, op):
    """``Tr(rho op)``."""
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape or rho.ndim != 2:
        raise DimensionError(f"shape mismatch {rho.shape} vs {op.shape}")
    return complex(np.sum(rho * op.T))


def coherence(rho, space, site, a, b):
    """``rho_ab = Tr(rho s_ba)`` of one site."""
    return expectation(rho, site_sigma(space, site, b, a))


def population(rho, space, site, level):
    return float(np.real(np.sum(np.diagonal(rho)[level_mask(space, site, level)])))


def _two_site(space, rho, target, control):
    if space is None:
        raise ConfigError("a composite space is required for correlators")
    if np.shape(rho) != (space.total_dim, space.total_dim):
        raise DimensionError("state does not match the space")
    roles_ok = (
        0 <= target < space.n_sites and 0 <= control < space.n_sites
        and space.sites[target].role == TARGET and space.sites[control].role == CONTROL
    )
    if not roles_ok:
        raise ConfigError("correlators need one target and one control site")


def two_body_correlator(rho, space, target=0, control=1):
    """``<s13(target) s33(control)>``."""
    _two_site(space, rho, target, control)
    op = site_sigma(space, target, 1, 3) @ site_sigma(space, control, 3, 3)
    return expectation(rho, op)


def connected_correlation(rho, space, target=0, control=1):
    """``<s13 s33> - <s13><s33>`` between target and control."""
    c = two_body_correlator(rho, space, target, control)
    s13 = expectation(rho, site_sigma(space, target, 1, 3))
    n3 = expectation(rho, site_sigma(space, control, 3, 3))
    return c - s13 * n3


@dataclass(frozen=True)
class CoherenceTerms:
    """Inputs of the full stationary relation for the probe coherence."""

    omega_p: float
    rho32: complex
    rho11: float
    rho22: float
    gamma_21: float
    gamma_31: float


def approx_coherence(correlator, v_ab, omega, terms=None):
    """Probe coherence reconstructed from the two-body correlator.

    Without ``terms`` this is ``2 V C / omega``. With ``terms`` the exact
    stationary relation is used:

        rho21 = [2 omega V C + omega omega_p rho32
                 + 2i omega_p g31 (rho11 - rho22)] / (omega^2 + 4 g21 g31)
    """
    if omega == 0:
        raise DivisionByZeroError("omega must be non-zero")
    if terms is None:
        return 2.0 * v_ab * correlator / omega
    t = terms
    num = (2.0 * omega * v_ab * correlator + omega * t.omega_p * t.rho32
           + 2j * t.omega_p * t.gamma_31 * (t.rho11 - t.rho22))
    return num / (omega * omega + 4.0 * t.gamma_21 * t.gamma_31)


def coherence_damping(space, spec, site, a, b):
    """Decay rate of the coherence ``rho_ab`` of ``site`` under ``spec``."""
    out = {1: 0.0, 2: 0.0, 3: 0.0}
    for d in spec.decays:
        if d.site == site:
            out[d.from_level] += d.rate
    g = 0.5 * (out[a] + out[b])
    for d in spec.dephasings:
        if d.site == site and d.level in (a, b) and a != b:
            g += d.rate
    return g


def mandel_q(rho, space, eps=1e-12):
    """Mandel Q of the total Rydberg number summed over all sites."""
    n = np.zeros(space.total_dim)
    for i in range(space.n_sites):
        n += level_mask(space, i, 3)
    p = np.real(np.diagonal(rho))
    mean = float(p @ n)
    if not mean > eps:
        raise UndefinedStatisticError(f"mean Rydberg number {mean:.3e} too small for Q")
    var = float(p @ n**2) - mean * mean
    return var / mean - 1.0


def fidelity_pure(rho, psi, tol=1e-10):
    """Fidelity with a pure state, ``<psi|rho|psi>``."""
    psi = np.asarray(psi, dtype=np.complex128)
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise NormalizationError("reference state is not normalised")
    return float(np.real(psi.conj() @ np.asarray(rho) @ psi))


@dataclass(frozen=True)
class SusceptibilityConstants:
    dipole_moment: float  # C m
    density: float  # m^-3
    hbar: float = HBAR
    epsilon_0: float = EPSILON_0

    def __post_init__(self):
        if not (self.dipole_moment > 0 and self.density > 0 and self.hbar > 0 and self.epsilon_0 > 0):
            raise ConfigError("susceptibility constants must be positive")


#: Note attached to outputs computed in SI mode.
SI_MODE_NOTE = ("prefactor hbar*eps0/(N mu^2 Omega_p) applied as written; it falls with "
                "density, unlike the usual N mu^2/(hbar eps0) linear response")


def susceptibility(rho21, omega_p, constants=None):
    """Probe susceptibility.

    The default is the dimensionless ratio ``rho21/omega_p``. With
    ``constants`` the prefactor ``hbar eps0 / (N mu^2 Omega_p)`` is applied
    literally, ``Omega_p`` converted to s^-1 (see ``SI_MODE_NOTE``).
    """
    if omega_p == 0:
        raise DivisionByZeroError("omega_p must be non-zero")
    if constants is None:
        return rho21 / omega_p
    c = constants
    return c.hbar * c.epsilon_0 / (c.density * c.dipole_moment**2 * omega_p * GAMMA_SI) * rho21


# ---------------------------------------------------------------------------
# Detuning sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    delta_c: np.ndarray
    im_rho21: np.ndarray
    re_rho21: np.ndarray
    rho33_A: np.ndarray
    rho33_B: np.ndarray
    o_ab: np.ndarray
    mandel_q: np.ndarray
    fidelity_B: np.ndarray
    fidelity_F: np.ndarray
    correlator: np.ndarray = None
    approx_rho21: np.ndarray = None
    peaks: tuple = ()
    params: dict = field(default_factory=dict)

    COLUMNS = ("delta_c", "im_rho21", "re_rho21", "rho33_A", "rho33_B", "re_o_ab", "im_o_ab",
               "mandel_q", "fidelity_B", "fidelity_F", "im_approx_rho21")

    def __post_init__(self):
        n = len(self.delta_c)
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray) and len(val) != n:
                raise DimensionError(f"{f.name} has length {len(val)}, expected {n}")

    def table(self):
        """Rows in ``COLUMNS`` order."""
        nan = np.full(len(self.delta_c), np.nan)
        o = self.o_ab if self.o_ab is not None else nan
        a = self.approx_rho21 if self.approx_rho21 is not None else nan
        return np.column_stack([
            self.delta_c, self.im_rho21, self.re_rho21, self.rho33_A, self.rho33_B,
            np.real(o), np.imag(o), self.mandel_q, self.fidelity_B, self.fidelity_F, np.imag(a),
        ])


def find_spectrum_peaks(x, y, prominence=0.05):
    """Local maxima of ``y`` with prominence above ``prominence * max(y)``.

    Positions are refined by a parabola through the three neighbouring samples.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    top = np.max(y) if y.size else 0.0
    if y.size < 3 or not top > 0:
        return ()
    idx, _ = find_peaks(y, prominence=prominence * top)
    out = []
    for i in idx:
        x0, (y0, y1, y2) = x[i], y[i - 1:i + 2]
        denom = y0 - 2.0 * y1 + y2
        h = 0.5 * (x[i + 1] - x[i - 1])
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        out.append(float(x0 + np.clip(shift, -1.0, 1.0) * h))
    return tuple(out)


def _solve_states(space, static, det, spec, grid, threads=None, method="auto"):
    n = space.total_dim
    if method == "auto" and n * n <= lb.DEFAULT_CAP:
        rhos = lb.steady_state_batch(space, static, [det], grid[:, None], spec)
        bad = ~np.all(np.isfinite(rhos), axis=(1, 2))
        if not np.any(bad):
            return rhos
    hams = [static + dc * np.diag(det) for dc in grid]

    def one(item):
        dc, h = item
        try:
            return lb.steady_state(lb.Liouvillian(space, h, spec), method=method)
        except FitSimError as exc:
            raise type(exc)(f"{exc} at delta_c={dc:.6g}") from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.asarray(list(pool.map(one, zip(grid, hams))))
    return np.asarray([one(item) for item in zip(grid, hams)])


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("detuning grid must be a non-empty 1-D array", field="delta_c")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("detuning grid must be strictly increasing", field="delta_c")
    return grid


def spectrum_from_states(space, rhos, grid, spec, *, v_ab=None, omega=None, omega_p=None,
                         prominence=0.05, params=None):
    """Fill a :class:`Spectrum` from stationary states on ``grid``."""
    targets = space.indices(TARGET)
    controls = space.indices(CONTROL)
    diag = np.real(np.diagonal(rhos, axis1=1, axis2=2))
    s21 = sum(site_sigma(space, t, 1, 2) for t in targets) / len(targets)
    rho21 = np.einsum("kij,ji->k", rhos, s21)
    p3a = sum(diag[:, level_mask(space, t, 3)].sum(axis=1) for t in targets) / len(targets)
    p3b = sum(diag[:, level_mask(space, c, 3)].sum(axis=1) for c in controls) / max(len(controls), 1)
    nop = np.zeros(space.total_dim)
    for i in range(space.n_sites):
        nop += level_mask(space, i, 3)
    mean = diag @ nop
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(mean > 1e-12, (diag @ nop**2 - mean**2) / mean - 1.0, np.nan)
    k = len(grid)
    o_ab = corr = approx = None
    f_b = f_f = np.full(k, np.nan)
    if space.n_sites == 2 and len(targets) == 1 and len(controls) == 1:
        t, c = targets[0], controls[0]
        op_c = site_sigma(space, t, 1, 3) @ site_sigma(space, c, 3, 3)
        corr = np.einsum("kij,ji->k", rhos, op_c)
        s13 = np.einsum("kij,ji->k", rhos, site_sigma(space, t, 1, 3))
        n3 = np.einsum("kij,ji->k", rhos, site_sigma(space, c, 3, 3))
        o_ab = corr - s13 * n3
        if v_ab is not None and omega:
            approx = approx_coherence(corr, v_ab, omega)
        psi_e, psi_f = bell_states()
        fb = blockade_state(space, t, c)
        ff = embed_state(space, psi_f, t, c)
        f_b = np.real(np.einsum("i,kij,j->k", fb.conj(), rhos, fb))
        f_f = np.real(np.einsum("i,kij,j->k", ff.conj(), rhos, ff))
    im = rho21.imag
    return Spectrum(
        delta_c=np.asarray(grid, float), im_rho21=im, re_rho21=rho21.real,
        rho33_A=p3a, rho33_B=p3b, o_ab=o_ab, mandel_q=q, fidelity_B=f_b, fidelity_F=f_f,
        correlator=corr, approx_rho21=approx,
        peaks=find_spectrum_peaks(grid, im, prominence), params=dict(params or {}),
    )


def coherence_spectrum(config, delta_c_grid=None, prominence=0.05, threads=None):
    """Stationary spectrum of a two-site :class:`~fitsim.config.SystemConfig`."""
    from .config import default_grid

    grid = _check_grid(default_grid(config.v_ab) if delta_c_grid is None else delta_c_grid)
    space, static, det, vdw, spec = config.parts()
    rhos = _solve_states(space, static + config.v_ab * np.diag(vdw), det, spec, grid, threads)
    params = dataclasses.asdict(config)
    return spectrum_from_states(space, rhos, grid, spec, v_ab=config.v_ab, omega=config.omega,
                                omega_p=config.omega_p, prominence=prominence, params=params)


@dataclass(frozen=True)
class RingGeometry:
    """Targets on a ring of radius ``r_fac`` around one control site."""

    n_targets: int
    r_fac: float = 1.0
    angles: tuple = None

    def __post_init__(self):
        if self.n_targets < 1:
            raise ConfigError("n_targets must be >= 1", field="n_targets")
        if not self.r_fac > 0:
            raise ConfigError("r_fac must be positive", field="r_fac")
        if self.angles is None:
            object.__setattr__(self, "angles",
                               tuple(2 * math.pi * k / self.n_targets for k in range(self.n_targets)))
        elif len(self.angles) != self.n_targets:
            raise ConfigError("one angle per target is required", field="angles")

    def positions(self):
        return np.array([[self.r_fac * math.cos(a), self.r_fac * math.sin(a), 0.0] for a in self.angles])

    def space(self, control_scheme="one_photon"):
        from .hilbert import AtomSite, CompositeSpace

        sites = [AtomSite(3, TARGET, tuple(p)) for p in self.positions()]
        sites.append(AtomSite(2 if control_scheme == "one_photon" else 3, CONTROL, (0, 0, 0), control_scheme))
        return CompositeSpace(tuple(sites))

    def pair_overrides(self, v_ct, v_tt):
        """Control-target pairs get ``v_ct``; the closest target pair gets
        ``v_tt`` and the others scale as ``(r_min / r)^6``."""
        pos = self.positions()
        n = self.n_targets
        out = {(i, n): v_ct for i in range(n)}
        if n > 1:
            dist = {(i, j): float(np.linalg.norm(pos[i] - pos[j])) for i in range(n) for j in range(i + 1, n)}
            r_min = min(dist.values())
            if r_min <= 0:
                from .errors import SingularGeometryError

                raise SingularGeometryError("two targets share a position")
            for key, r in dist.items():
                out[key] = v_tt * (r_min / r) ** 6
        return out


MAX_RING_TARGETS = 4


def multi_target_spectrum(ring, v_ct, v_tt_grid, delta_c_grid, config=None, threads=None,
                          prominence=0.05):
    """Target-averaged spectra for every ``V_TT`` in ``v_tt_grid``.

    Returns ``{v_tt: Spectrum}``. Up to four targets are supported; the
    larger spaces use the matrix-free stationary solver.
    """
    from .config import SystemConfig

    if ring.n_targets > MAX_RING_TARGETS:
        raise CapacityError(f"{ring.n_targets} targets exceed the supported maximum of {MAX_RING_TARGETS}")
    config = config or SystemConfig()
    grid = _check_grid(delta_c_grid)
    space = ring.space(config.control_scheme)
    spec = config.dissipators(space)
    drive = DriveParams(config.omega_p, config.omega, config.omega_c, 0.0, config.two_photon)
    out = {}
    for v_tt in v_tt_grid:
        inter = InteractionSpec(pair_overrides=ring.pair_overrides(v_ct, v_tt))
        static, det, vdw = hamiltonian_parts(space, drive, inter)
        rhos = _solve_states(space, static + np.diag(vdw), det, spec, grid, threads)
        params = {"n_targets": ring.n_targets, "v_ct": v_ct, "v_tt": float(v_tt)}
        out[float(v_tt)] = spectrum_from_states(space, rhos, grid, spec, v_ab=v_ct, omega=config.omega,
                                                prominence=prominence, params=params)
    return out
