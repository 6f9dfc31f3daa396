"""Solver invariant suite behind ``fitsim validate``.

Each check compares a computed quantity with an analytic oracle or an
independent method and returns a :class:`Check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lindblad as lb
from .config import SystemConfig
from .dressed import dressed_hamiltonian, energy_gap, resonance_detunings
from .hilbert import CONTROL, AtomSite, CompositeSpace, site_sigma


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    comparison: str = "<"


def _below(name, value, tol):
    return Check(name, float(value), tol, bool(value < tol))


def _above(name, value, tol):
    return Check(name, float(value), tol, bool(value >= tol), ">=")


def _two_level(omega_c=0.0, gamma=0.0):
    space = CompositeSpace((AtomSite(2, CONTROL),))
    op = site_sigma(space, 0, 3, 1)
    h = -0.5 * omega_c * (op + op.conj().T)
    spec = lb.DissipatorSpec((lb.Decay(0, 3, 1, gamma),) if gamma else ())
    return lb.Liouvillian(space, h, spec)


def _excited(n=2):
    rho = np.zeros((n, n), dtype=np.complex128)
    rho[-1, -1] = 1.0
    return rho


def rabi_error(dt, t_final=2.0, omega_c=2.0):
    """Max deviation of the excited population from ``sin^2(omega_c t / 2)``."""
    L = _two_level(omega_c)
    traj = lb.evolve(L, lb.ground_state(L.space), t_final, dt, check=False)
    exact = np.sin(omega_c * traj.times / 2.0) ** 2
    return float(np.max(np.abs(traj.states[:, 1, 1].real - exact)))


def decay_error(dt=0.01, t_final=3.0, gamma=1.0):
    """Max deviation from ``exp(-gamma t)`` for spontaneous decay."""
    L = _two_level(gamma=gamma)
    traj = lb.evolve(L, _excited(), t_final, dt, check=False)
    return float(np.max(np.abs(traj.states[:, 1, 1].real - np.exp(-gamma * traj.times))))


def rk4_order(dt=0.05):
    """Observed convergence order from errors at ``dt`` and ``dt / 2``."""
    return math.log2(rabi_error(dt) / rabi_error(dt / 2))


def run_checks(config=None):
    config = config or SystemConfig()
    checks = []
    L = config.liouvillian()
    traj = lb.evolve(L, lb.ground_state(L.space), 20.0, 0.01, store_every=100, check=False)
    trace = max(abs(np.trace(r) - 1.0) for r in traj.states)
    checks.append(_below("trace_preservation", trace, 1e-9))
    min_eig = min(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in traj.states)
    checks.append(_below("positivity_violation", max(0.0, -min_eig), 1e-8))
    checks.append(_above("rk4_observed_order", rk4_order(), 3.8))
    dense = lb.steady_state(L, method="dense")
    krylov = lb.steady_state(L, method="krylov")
    evolved = lb.steady_state(L, method="evolve")
    checks.append(_below("steady_dense_vs_krylov", np.max(np.abs(dense - krylov)), 1e-6))
    checks.append(_below("steady_dense_vs_evolve", np.max(np.abs(dense - evolved)), 1e-6))
    checks.append(_below("rabi_oracle", rabi_error(0.01), 1e-6))
    checks.append(_below("decay_oracle", decay_error(), 1e-6))
    om, oc, v = config.omega, config.omega_c, config.v_ab
    dets = [abs(np.linalg.det(dressed_hamiltonian(om, oc, dc, v))) for dc in resonance_detunings(om, oc, v)]
    checks.append(_below("dressed_resonance_det", max(dets), 1e-8))
    plus, minus = resonance_detunings(om, oc, v)
    checks.append(_below("dressed_gap_identity", abs((plus - minus) - energy_gap(om, oc, v)), 1e-12))
    return checks
