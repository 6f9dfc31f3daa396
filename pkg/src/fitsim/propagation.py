"""One-dimensional probe propagation through the target channel.

The probe amplitude ``e(z)`` is normalised to its input value and obeys

    de/dz = i kappa chi(z) e,     chi = rho21 / omega_p,

with the local two-site stationary state evaluated at every ``z`` (``cw``
mode), or the Maxwell-Bloch system in the co-moving frame ``tau = t - z/c``
(``td`` mode), where the retarded time removes the advection term:

    de/dz = i kappa rho21(z, tau) / omega_p0,   d rho/d tau = L[omega_p0 e] rho.

Two scenarios are supported: a control excitation at ``z_j`` whose
interaction ``V(z) = -c6 / ((z - z_j)^2 + d^2)^3`` varies along the channel
(localized), and a constant ``V_AB`` with a detuning ramp ``delta_c(z)``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import lindblad as lb
from .config import SystemConfig
from .errors import CalibrationError, ConfigError, FitSimError, NumericalInstabilityError
from .hilbert import InteractionSpec, hamiltonian_parts, site_sigma

log = logging.getLogger(__name__)

CW = "cw_adiabatic"
TD = "time_dependent"
_MODE_ALIASES = {"cw": CW, CW: CW, "td": TD, TD: TD}


@dataclass(frozen=True)
class Grid1D:
    z_min: float
    z_max: float
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 16:
            raise ConfigError("n_cells must be an integer >= 16", field="n_cells")
        if not self.z_max > self.z_min:
            raise ConfigError("z_max must exceed z_min", field="z_max")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dz(self):
        return (self.z_max - self.z_min) / self.n_cells

    @property
    def z(self):
        """Cell edges, ``n_cells + 1`` points."""
        return np.linspace(self.z_min, self.z_max, self.n_cells + 1)

    @classmethod
    def with_spacing(cls, z_min, z_max, dz):
        return cls(z_min, z_max, max(16, int(round((z_max - z_min) / dz))))


@dataclass(frozen=True)
class RampSpec:
    delta_c0: float
    delta_cF: float
    z_q: float
    z_s: float

    def __post_init__(self):
        if not self.z_s > 0:
            raise ConfigError("z_s must be positive", field="z_s")


def detuning_ramp(z, ramp):
    """``delta_c0 + (delta_c0 - delta_cF) [tanh(1 - (z - z_q)/z_s) - 1] / 2``."""
    z = np.asarray(z, dtype=float)
    return ramp.delta_c0 + (ramp.delta_c0 - ramp.delta_cF) * (np.tanh(1.0 - (z - ramp.z_q) / ramp.z_s) - 1.0) / 2.0


@dataclass(frozen=True)
class PropagationConfig:
    """One propagation scenario.

    Set ``control_position`` (with ``d`` and either ``c6`` or
    ``system.v_ab``) for a localized control excitation, or ``ramp`` for a
    constant ``system.v_ab`` under a detuning ramp. When ``c6`` is omitted in
    the localized case it is chosen so that ``V(z_j) = system.v_ab``.
    """

    grid: Grid1D
    system: SystemConfig = field(default_factory=lambda: SystemConfig(omega_p=0.01, omega=3.0, omega_c=3.0))
    kappa: float = 0.1
    control_position: float | None = None
    d: float | None = None
    c6: float | None = None
    ramp: RampSpec | None = None
    mode: str = CW

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ConfigError("kappa must be non-negative", field="kappa")
        if (self.control_position is None) == (self.ramp is None):
            raise ConfigError("give exactly one of control_position and ramp", field="control_position")
        if self.control_position is not None and not (self.d is not None and self.d > 0):
            raise ConfigError("localized mode needs a positive channel separation d", field="d")
        if self.mode not in _MODE_ALIASES:
            raise ConfigError(f"unknown propagation mode {self.mode!r}", field="mode")
        object.__setattr__(self, "mode", _MODE_ALIASES[self.mode])
        if self.system.omega_p == 0:
            raise ConfigError("omega_p must be non-zero", field="omega_p")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def localized(self):
        return self.control_position is not None

    @property
    def effective_c6(self):
        if self.c6 is not None:
            return self.c6
        return -self.system.v_ab * self.d**6

    def profile(self, z):
        """Local ``(delta_c, V)`` along ``z``."""
        z = np.asarray(z, dtype=float)
        if self.localized:
            c6 = self.effective_c6
            v = -c6 / ((z - self.control_position) ** 2 + self.d**2) ** 3
            return np.full_like(z, self.system.delta_c), v
        return detuning_ramp(z, self.ramp), np.full_like(z, self.system.v_ab)


@dataclass(frozen=True)
class PropagationResult:
    z: np.ndarray
    intensity: np.ndarray
    rho33_A: np.ndarray
    rho33_B: np.ndarray
    re_rho31_B: np.ndarray
    delta_c: np.ndarray
    v: np.ndarray
    transmission: float
    kappa: float
    im_chi: np.ndarray = None
    times: np.ndarray = None
    field_slices: np.ndarray = None
    meta: dict = field(default_factory=dict)

    COLUMNS = ("z", "intensity", "rho33_A", "rho33_B", "re_rho31_B", "delta_c", "v_ab", "im_chi")

    def table(self):
        chi = self.im_chi if self.im_chi is not None else np.full(len(self.z), np.nan)
        return np.column_stack([self.z, self.intensity, self.rho33_A, self.rho33_B,
                                self.re_rho31_B, self.delta_c, self.v, chi])


# ---------------------------------------------------------------------------
# Local stationary response
# ---------------------------------------------------------------------------


class LocalObservables:
    """Matrix elements needed along the channel and how to combine them.

    Output columns: ``rho21`` (target), ``rho33_A``, ``rho33_B``, ``rho31_B``.
    """

    def __init__(self, space, target=0, control=1):
        entries, weights = [], []
        n = space.total_dim
        tgt = space.sites[target]
        ctl = space.sites[control]
        t_stride = math.prod(space.dims[target + 1:])
        c_stride = math.prod(space.dims[control + 1:])
        for i in range(n):
            lt = (i // t_stride) % tgt.level_count
            lc = (i // c_stride) % ctl.level_count
            if lt == tgt.level_index(2):
                j = i + (tgt.level_index(1) - lt) * t_stride
                entries.append((i, j))
                weights.append((0, 1.0))
            if lt == tgt.level_index(3):
                entries.append((i, i))
                weights.append((1, 1.0))
            if lc == ctl.level_index(3):
                entries.append((i, i))
                weights.append((2, 1.0))
                j = i + (ctl.level_index(1) - lc) * c_stride
                entries.append((i, j))
                weights.append((3, 1.0))
        self.entries = entries
        self.reduce = np.zeros((len(entries), 4), dtype=np.complex128)
        for k, (col, w) in enumerate(weights):
            self.reduce[k, col] = w
        self.rows = np.array([e[0] for e in entries])
        self.cols = np.array([e[1] for e in entries])

    def from_entries(self, x):
        return x @ self.reduce

    def from_states(self, rhos):
        return rhos[:, self.rows, self.cols] @ self.reduce


def interaction_response(system, delta_c, space=None):
    """Exact stationary observables as a function of ``V`` at fixed ``delta_c``."""
    space = space or system.space()
    static, det, vdw = hamiltonian_parts(space, system.drive(), InteractionSpec(pair_overrides={(0, 1): 1.0}))
    obs = LocalObservables(space)
    resp = lb.ScalarResponse(space, static + delta_c * np.diag(det), vdw, system.dissipators(space), obs.entries)
    return lambda v: obs.from_entries(resp(v))


def detuning_response(system, v_ab, space=None):
    """Exact stationary observables as a function of ``delta_c`` at fixed ``V``."""
    space = space or system.space()
    static, det, vdw = hamiltonian_parts(space, system.drive(), InteractionSpec(pair_overrides={(0, 1): v_ab}))
    obs = LocalObservables(space)
    resp = lb.ScalarResponse(space, static + np.diag(vdw), det, system.dissipators(space), obs.entries)
    return lambda dc: obs.from_entries(resp(dc))


def local_observables(system, delta_c, v):
    """Stationary observables for arbitrary ``(delta_c, V)`` pairs (batched dense)."""
    space = system.space()
    static, det, vdw = hamiltonian_parts(space, system.drive(), InteractionSpec(pair_overrides={(0, 1): 1.0}))
    params = np.column_stack([np.asarray(delta_c, float), np.asarray(v, float)])
    rhos = lb.steady_state_batch(space, static, [det, vdw], params, system.dissipators(space))
    return LocalObservables(space).from_states(rhos)


def _half_grid(grid):
    return np.linspace(grid.z_min, grid.z_max, 2 * grid.n_cells + 1)


def _profiles(config, zz):
    dc, v = config.profile(zz)
    if config.localized:
        return interaction_response(config.system, config.system.delta_c)(v), dc, v
    return detuning_response(config.system, config.system.v_ab)(dc), dc, v


def integrate_field(chi_half, kappa, dz):
    """RK4 for ``de/dz = i kappa chi e`` with ``chi`` on the half-step grid.

    ``chi_half`` has ``2n+1`` samples (edges and midpoints); the return holds
    the complex amplitude at the ``n+1`` edges (the last axis is ``z``).
    """
    chi_half = np.asarray(chi_half)
    c0 = chi_half[..., 0:-1:2]
    cm = chi_half[..., 1::2]
    c1 = chi_half[..., 2::2]
    a0, am, a1 = 1j * kappa * c0, 1j * kappa * cm, 1j * kappa * c1
    h = dz
    # One RK4 step of a linear scalar ODE is multiplication by this factor.
    k1 = a0
    k2 = am * (1.0 + 0.5 * h * k1)
    k3 = am * (1.0 + 0.5 * h * k2)
    k4 = a1 * (1.0 + h * k3)
    gain = 1.0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    e = np.cumprod(gain, axis=-1)
    ones = np.ones(e.shape[:-1] + (1,), dtype=e.dtype)
    return np.concatenate([ones, e], axis=-1)


RK4_Z_LIMIT = 2.5


def _cw_from_observables(config, obs_half, dc_half, v_half, meta=None):
    grid = config.grid
    chi = obs_half[..., 0] / config.system.omega_p
    if grid.dz * config.kappa * np.max(np.abs(chi)) > RK4_Z_LIMIT:
        raise ConfigError("grid too coarse for this coupling: dz * kappa * |chi| exceeds the RK4 "
                          "stability limit", field="n_cells")
    e = integrate_field(chi, config.kappa, grid.dz)
    intensity = np.abs(e) ** 2
    edges = slice(0, None, 2)
    return PropagationResult(
        z=grid.z, intensity=intensity, rho33_A=obs_half[edges, 1].real, rho33_B=obs_half[edges, 2].real,
        re_rho31_B=obs_half[edges, 3].real, delta_c=dc_half[edges], v=v_half[edges],
        transmission=float(intensity[-1]), kappa=config.kappa, im_chi=chi[edges].imag,
        meta=dict(meta or {}),
    )


def propagate_cw(config, check_linear=True):
    """Steady-envelope propagation with the local stationary state at every ``z``."""
    zz = _half_grid(config.grid)
    try:
        obs, dc, v = _profiles(config, zz)
    except FitSimError as exc:
        raise type(exc)(f"{exc} (local stationary state along the channel)") from exc
    if not np.all(np.isfinite(obs)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(obs), axis=1))[0]) // 2
        raise NumericalInstabilityError("non-finite local state", step=bad)
    meta = {"mode": CW, "kappa": config.kappa}
    if check_linear:
        half = config.replace(system=config.system.replace(omega_p=config.system.omega_p / 2))
        t_half = _cw_from_observables(half, _profiles(half, zz)[0], dc, v).transmission
        t_full = _cw_from_observables(config, obs, dc, v).transmission
        defect = abs(t_half - t_full) / max(t_full, 1e-300)
        meta["linearity_defect"] = defect
        if defect > 0.01:
            log.warning("probe not in the linear regime: halving omega_p changes T by %.2f%%", 100 * defect)
    return _cw_from_observables(config, obs, dc, v, meta)


# ---------------------------------------------------------------------------
# Time-dependent propagation
# ---------------------------------------------------------------------------


def _td_operators(config, dc_cells, v_cells):
    """Per-cell superoperator diagonals, the shared off-diagonal part and the
    probe parts multiplying ``e`` and ``e*``, plus the probe-free initial states."""
    sysc = config.system
    space = sysc.space()
    spec = sysc.dissipators(space)
    no_probe = sysc.replace(omega_p=0.0)
    static, det, vdw = hamiltonian_parts(space, no_probe.drive(), InteractionSpec(pair_overrides={(0, 1): 1.0}))
    n = space.total_dim
    L0 = lb.Liouvillian(space, static, spec)
    shared = lb.assemble_superoperator(L0)
    k = len(dc_cells)
    diag = np.broadcast_to(np.diag(shared), (k, n * n)).copy()
    np.fill_diagonal(shared, 0.0)
    for coef, d in ((dc_cells, det), (v_cells, vdw)):
        sd = (-1j * (d[:, None] - d[None, :])).ravel(order="F")
        diag += np.asarray(coef)[:, None] * sd[None, :]
    eye = np.eye(n)
    hp = -0.5 * sysc.omega_p * site_sigma(space, 0, 2, 1)
    hm = hp.conj().T
    plus = -1j * (np.kron(eye, hp) - np.kron(hp.T, eye))
    minus = -1j * (np.kron(eye, hm) - np.kron(hm.T, eye))
    # Initial state of each cell: stationary without probe.
    rho0 = lb.steady_state_batch(space, static, [det, vdw], np.column_stack([dc_cells, v_cells]), spec)
    x0 = rho0.transpose(0, 2, 1).reshape(k, n * n)
    return space, diag, shared, plus, minus, x0


def propagate_td(config, pulse, t_final, dt, n_slices=11, stability=2.5):
    """Maxwell-Bloch propagation in the co-moving frame.

    ``pulse(tau)`` (or an array on the time grid) is the input envelope at
    ``z_min`` normalised so that 1 corresponds to ``system.omega_p``. Cells
    sit at the grid edges; the field is advanced by first-order upwind
    differences in ``z`` and the atoms by RK4 in ``tau``. Intensity profiles
    are time-integrated energies relative to the input.
    """
    if not dt > 0 or not t_final > 0:
        raise ConfigError("dt and t_final must be positive", field="dt")
    grid = config.grid
    z = grid.z
    dc, v = config.profile(z)
    space, diag, shared, plus, minus, x = _td_operators(config, dc, v)
    n = space.total_dim
    n_steps = int(math.ceil(t_final / dt - 1e-9))
    h = t_final / n_steps
    tau = np.arange(n_steps + 1) * h
    inp = np.asarray(pulse(tau) if callable(pulse) else pulse, dtype=np.complex128)
    if inp.shape != tau.shape:
        raise ConfigError(f"pulse must have {tau.size} samples", field="pulse")
    # Spectral radius with the strongest probe, sampled over the cells.
    amp = np.max(np.abs(inp), initial=0.0)
    radius = max(np.max(np.abs(np.linalg.eigvals(np.diag(diag[i]) + shared + amp * (plus + minus))))
                 for i in range(0, len(z), max(1, len(z) // 8)))
    if h * radius > stability:
        raise ConfigError(f"time step {h:.3g} too large for stable RK4 (needs <= {stability / radius:.3g})",
                          field="dt")
    obs = LocalObservables(space)
    sel = np.flatnonzero(obs.reduce[:, 0])
    i21 = obs.rows[sel] + n * obs.cols[sel]
    coupling = 1j * config.kappa * grid.dz / config.system.omega_p
    slice_steps = np.unique(np.linspace(0, n_steps, n_slices).round().astype(np.int64)) if n_slices else np.zeros(0, np.int64)
    peak_step = int(np.argmax(np.abs(inp)))
    energy, slices, peak_state, _, failed = kernels.td_march(
        diag, shared, plus, minus, x, inp, i21, coupling, h, slice_steps, peak_step)
    if failed >= 0:
        raise NumericalInstabilityError("time-dependent propagation diverged", step=int(failed))
    times = tau[slice_steps]
    ref = energy[0]
    intensity = energy / ref if ref > 0 else np.zeros_like(energy)
    rhos = peak_state.reshape(len(z), n, n).transpose(0, 2, 1)
    prof = obs.from_states(rhos)
    return PropagationResult(
        z=z, intensity=intensity, rho33_A=prof[:, 1].real, rho33_B=prof[:, 2].real,
        re_rho31_B=prof[:, 3].real, delta_c=dc, v=v, transmission=float(intensity[-1]),
        kappa=config.kappa, times=np.asarray(times), field_slices=np.asarray(slices),
        meta={"mode": TD, "dt": h, "t_final": t_final, "kappa": config.kappa},
    )


# ---------------------------------------------------------------------------
# Coupling calibration
# ---------------------------------------------------------------------------


def calibrate_kappa(target_extinction_length, reference_config, target_T=0.01, tol=1e-3,
                    bracket=(1e-4, None), max_iter=200):
    """Coupling ``kappa`` such that ``T = target_T`` at ``target_extinction_length``.

    The reference is normally the blockade ramp (``delta_cF = 0``). The local
    response does not depend on ``kappa``, so it is computed once and the
    bisection (in ``log kappa``) only re-integrates the field. An open upper
    bracket defaults to the largest coupling the grid integrates stably.
    """
    ref = reference_config
    length = float(target_extinction_length)
    if not length > ref.grid.z_min:
        raise ConfigError("extinction length must lie beyond z_min", field="target_extinction_length")
    grid = Grid1D.with_spacing(ref.grid.z_min, length, ref.grid.dz)
    cfg = ref.replace(grid=grid)
    zz = _half_grid(grid)
    obs, dc, v = _profiles(cfg, zz)
    chi = obs[:, 0] / cfg.system.omega_p

    def t_of(kappa):
        return float(np.abs(integrate_field(chi, kappa, grid.dz)[-1]) ** 2)

    lo, hi = bracket
    if hi is None:
        hi = RK4_Z_LIMIT / (grid.dz * max(np.max(np.abs(chi)), 1e-300))
    t_lo, t_hi = t_of(lo), t_of(hi)
    if not (t_lo > target_T > t_hi):
        raise CalibrationError(f"kappa bracket {bracket} gives T in [{t_hi:.3g}, {t_lo:.3g}], "
                               f"not around {target_T}")
    for _ in range(max_iter):
        if hi / lo < 1 + 1e-12:
            break
        mid = math.sqrt(lo * hi)
        if t_of(mid) > target_T:
            lo = mid
        else:
            hi = mid
    kappa = math.sqrt(lo * hi)
    if abs(t_of(kappa) - target_T) > tol:
        raise CalibrationError("bisection did not reach the requested transmission")
    return kappa
