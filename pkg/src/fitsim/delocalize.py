"""Monte-Carlo averaging over a delocalized control excitation.

Geometry: the target channel runs along ``z`` through the origin, the control
channel is displaced by ``d_vec = (d, 0, 0)``. A control excitation nominally
at ``z_j`` is shifted by a random ``r_B``; its interaction with a target atom
at ``z`` is

    V(z) = -c6 / [(z - z_j - r_z)^2 + (d + r_x)^2 + r_y^2]^3.

Each trajectory draws from its own counter-based generator keyed by
``(seed, trajectory index)``, so results do not depend on execution order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FitSimError, SingularGeometryError
from .propagation import (
    _cw_from_observables,
    _half_grid,
    detuning_ramp,
    interaction_response,
    local_observables,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DelocalizationSpec:
    """Gaussian spread of the control excitation.

    Each sampled component has density ``exp(-(r/sigma)^2)``, i.e. standard
    deviation ``sigma/sqrt(2)``. ``dims = 3`` samples isotropically,
    ``dims = 1`` only along the channel axis.
    """

    sigma: float
    d: float
    c6: float
    n_trajectories: int = 300
    rng_seed: int = 0
    dims: int = 3

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError("sigma must be non-negative", field="sigma")
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be a positive integer", field="n_trajectories")
        if self.dims not in (1, 3):
            raise ConfigError("dims must be 1 or 3", field="dims")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits", field="rng_seed")
        if not self.d > 0:
            raise ConfigError("d must be positive", field="d")

    @property
    def d_vec(self):
        return np.array([self.d, 0.0, 0.0])

    @property
    def v0(self):
        """Interaction for ``r_B = 0``."""
        return -self.c6 / self.d**6


def trajectory_rng(seed, index):
    """Independent generator for trajectory ``index``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, int(index) % 2**64]))


def sample_offset(spec, rng, size=None):
    """Draw ``r_B`` (shape ``(3,)``, or ``size + (3,)``).

    ``rng`` is a generator or a trajectory index.
    """
    if not isinstance(rng, np.random.Generator):
        rng = trajectory_rng(spec.rng_seed, rng)
    shape = (3,) if size is None else tuple(np.atleast_1d(size)) + (3,)
    scale = spec.sigma / math.sqrt(2.0)
    r = rng.normal(0.0, 1.0, size=shape) * scale
    if spec.dims == 1:
        r[..., 0] = 0.0
        r[..., 1] = 0.0
    return r


def effective_interaction(d_vec, r_b, c6):
    """``-c6 / |d_vec + r_b|^6``."""
    sep = np.asarray(d_vec, float) + np.asarray(r_b, float)
    r2 = float(sep @ sep)
    if r2 == 0.0:
        raise SingularGeometryError("control excitation coincides with the target")
    return -c6 / r2**3


def interaction_profile(z, z_j, d, r_b, c6):
    """Interaction along the target channel for one offset ``r_b``."""
    rx, ry, rz = r_b
    den = (np.asarray(z, float) - z_j - rz) ** 2 + (d + rx) ** 2 + ry**2
    if np.any(den == 0):
        raise SingularGeometryError("control excitation lies on the target channel")
    return -c6 / den**3


@dataclass(frozen=True)
class McResult:
    x: np.ndarray
    curves: dict
    mean: dict
    stderr: dict
    seed: int
    n_trajectories: int
    n_failed: int = 0
    failed: tuple = ()
    converged: bool = False
    meta: dict = field(default_factory=dict)


def _stats(stack):
    """Mean (shifted so identical rows reproduce exactly) and standard error."""
    n = stack.shape[0]
    ref = stack[0]
    mean = ref + np.sum(stack - ref, axis=0) / n
    if n > 1:
        err = np.std(stack, axis=0, ddof=1) / math.sqrt(n)
    else:
        err = np.full(stack.shape[1:], np.nan)
    return mean, err


def _converged(stack, frac=0.1, rel=0.01):
    n = stack.shape[0]
    k = n - max(1, int(round(frac * n)))
    if k < 1:
        return False
    full, _ = _stats(stack)
    part, _ = _stats(stack[:k])
    scale = np.max(np.abs(full))
    if scale == 0:
        return True
    return bool(np.max(np.abs(full - part)) < rel * scale)


def _collect(names, results, x, spec, meta):
    ok = [i for i, r in enumerate(results) if not isinstance(r, Exception)]
    failed = tuple(i for i, r in enumerate(results) if isinstance(r, Exception))
    if failed:
        log.warning("%d of %d trajectories failed and were excluded", len(failed), len(results))
    if not ok:
        raise results[0]
    curves, mean, err = {}, {}, {}
    conv = True
    for j, name in enumerate(names):
        stack = np.asarray([results[i][j] for i in ok])
        curves[name] = stack
        mean[name], err[name] = _stats(stack)
        conv = conv and _converged(stack)
    return McResult(x=np.asarray(x), curves=curves, mean=mean, stderr=err, seed=spec.rng_seed,
                    n_trajectories=len(results), n_failed=len(failed), failed=failed,
                    converged=conv, meta=dict(meta))


def _run(fn, n, threads):
    def guarded(i):
        try:
            return fn(i)
        except FitSimError as exc:
            return exc

    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(guarded, range(n)))
    return [guarded(i) for i in range(n)]


def mc_spectrum(spec, base_config, delta_c_grid, threads=None):
    """Mean transmission versus control detuning for a delocalized control excitation.

    ``base_config`` must be a localized :class:`~fitsim.propagation.PropagationConfig`;
    its ``control_position`` is the nominal ``z_j``. ``spec.d`` and
    ``spec.c6`` replace the config's geometry.
    """
    if not base_config.localized:
        raise ConfigError("mc_spectrum needs a localized propagation config", field="control_position")
    grid = np.asarray(delta_c_grid, float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("detuning grid must be non-empty", field="delta_c")
    zz = _half_grid(base_config.grid)
    offsets = [sample_offset(spec, i) for i in range(spec.n_trajectories)]
    z_j = base_config.control_position
    cfg = base_config.replace(d=spec.d, c6=spec.c6)
    profiles = []
    for r in offsets:
        try:
            profiles.append(interaction_profile(zz, z_j, spec.d, r, spec.c6))
        except SingularGeometryError as exc:
            profiles.append(exc)
    trans = np.full((spec.n_trajectories, grid.size), np.nan)
    errors = {}
    for k, dc in enumerate(grid):
        system = cfg.system.replace(delta_c=float(dc))
        response = interaction_response(system, float(dc))
        run_cfg = cfg.replace(system=system)
        dcs = np.full_like(zz, dc)

        def one(i):
            v = profiles[i]
            if isinstance(v, Exception):
                raise v
            return _cw_from_observables(run_cfg, response(v), dcs, v).transmission

        for i, res in enumerate(_run(one, spec.n_trajectories, threads)):
            if isinstance(res, Exception):
                errors.setdefault(i, res)
            else:
                trans[i, k] = res
    results = [errors[i] if i in errors else (trans[i],) for i in range(spec.n_trajectories)]
    meta = {"kind": "spectrum", "sigma": spec.sigma, "d": spec.d, "c6": spec.c6, "dims": spec.dims,
            "kappa": cfg.kappa, "sigma_over_d": spec.sigma / spec.d}
    out = _collect(("transmission",), results, grid, spec, meta)
    return out


def mc_switch(spec, ramp_config, threads=None):
    """Single-trajectory and mean profiles for the ramp switch.

    Along one trajectory the control excitation's offset is redrawn at every
    ``z`` sample (it co-propagates and its position is not sharp), giving
    ``V(z) = -c6/|d_vec + r_B(z)|^6`` with the detuning ramp of ``ramp_config``.
    """
    if ramp_config.ramp is None:
        raise ConfigError("mc_switch needs a ramp propagation config", field="ramp")
    ramp = ramp_config.ramp
    v_ideal = spec.v0
    if not (math.isclose(ramp.delta_cF, 0.0, abs_tol=1e-9)
            or math.isclose(ramp.delta_cF, -v_ideal, rel_tol=0.05, abs_tol=1e-9)):
        log.warning("delta_cF=%g is neither 0 nor -V(r_B=0)=%g", ramp.delta_cF, -v_ideal)
    zz = _half_grid(ramp_config.grid)
    dcs = detuning_ramp(zz, ramp)
    cfg = ramp_config

    def one(i):
        rng = trajectory_rng(spec.rng_seed, i)
        r = sample_offset(spec, rng, size=zz.size)
        sep = spec.d_vec[None, :] + r
        r2 = np.einsum("ij,ij->i", sep, sep)
        if np.any(r2 == 0):
            raise SingularGeometryError("control excitation coincides with the target")
        v = -spec.c6 / r2**3
        obs = local_observables(cfg.system, dcs, v)
        res = _cw_from_observables(cfg, obs, dcs, v)
        return res.intensity, res.rho33_A, res.rho33_B, res.re_rho31_B

    results = _run(one, spec.n_trajectories, threads)
    meta = {"kind": "switch", "sigma": spec.sigma, "d": spec.d, "c6": spec.c6, "dims": spec.dims,
            "kappa": cfg.kappa, "delta_cF": ramp.delta_cF, "sigma_over_d": spec.sigma / spec.d}
    return _collect(("intensity", "rho33_A", "rho33_B", "re_rho31_B"), results,
                    ramp_config.grid.z, spec, meta)
