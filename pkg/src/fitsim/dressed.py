"""Dressed-state analysis of the interaction subspace of one target and one control.

The subspace is spanned, in this order, by ``|2A 1B>, |2A 3B>, |3A 1B>, |3A 3B>``
(first label: target, second: control). Damping is left out on purpose; the
master equation covers it elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import DivisionByZeroError, HermiticityError

BASIS = ("2A1B", "2A3B", "3A1B", "3A3B")
_BASIS_LEVELS = ((2, 1), (2, 3), (3, 1), (3, 3))


@dataclass(frozen=True)
class DressedResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns


def dressed_hamiltonian(omega, omega_c, delta_c, v_ab):
    """4x4 Hamiltonian of the interaction-dressed subspace."""
    a, c = -omega / 2.0, -omega_c / 2.0
    return np.array([
        [0.0, c, a, 0.0],
        [c, delta_c, 0.0, a],
        [a, 0.0, 0.0, c],
        [0.0, a, c, delta_c + v_ab],
    ], dtype=np.complex128)


def eigendecompose_hermitian(m, herm_tol=1e-10, tol=1e-15, max_sweeps=60):
    """Eigenvalues (ascending) and orthonormal eigenvectors by cyclic Jacobi.

    Ties within ``1e-10 * ||M||`` are ordered by the index of each vector's
    largest component. Each vector's largest component is made real positive.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise HermiticityError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.conj().T)) >= herm_tol:
        raise HermiticityError("matrix is not hermitian")
    w, v, _ = kernels.jacobi_eigh(0.5 * (m + m.conj().T), tol, max_sweeps)
    lead = np.argmax(np.abs(v), axis=0)
    scale = max(np.max(np.abs(w), initial=0.0), 1.0)
    # Bucket eigenvalues so near-degenerate ones compare equal, then break ties.
    order = sorted(range(len(w)), key=lambda i: (w[i], lead[i]))
    order = _tie_break(order, w, lead, 1e-10 * scale)
    w, v, lead = w[order], v[:, order], lead[order]
    phase = v[lead, np.arange(v.shape[1])]
    v = v * (np.abs(phase) / phase)[None, :]
    return w, v


def _tie_break(order, w, lead, tol):
    out, i = [], 0
    while i < len(order):
        j = i + 1
        while j < len(order) and w[order[j]] - w[order[j - 1]] <= tol:
            j += 1
        out.extend(sorted(order[i:j], key=lambda k: lead[k]))
        i = j
    return out


def dressed_states(omega, omega_c, delta_c, v_ab):
    w, v = eigendecompose_hermitian(dressed_hamiltonian(omega, omega_c, delta_c, v_ab))
    return DressedResult(w, v)


def _mixing(omega, omega_c):
    if omega == 0:
        raise DivisionByZeroError("the coupling Rabi frequency must be non-zero")
    return (omega * omega - omega_c * omega_c) / omega


def resonance_detunings(omega, omega_c, v_ab):
    """Control detunings ``(plus, minus)`` where a dressed level crosses zero."""
    root = math.sqrt(v_ab * v_ab + _mixing(omega, omega_c) ** 2)
    return -v_ab / 2.0 + root / 2.0, -v_ab / 2.0 - root / 2.0


def energy_gap(omega, omega_c, v_ab):
    """Separation of the two resonances, ``sqrt(V^2 + (omega - omega_c^2/omega)^2)``."""
    return math.sqrt(v_ab * v_ab + _mixing(omega, omega_c) ** 2)


def numeric_resonance_detunings(omega, omega_c, v_ab):
    """Same roots found from the Jacobi spectrum, independent of the closed form."""

    def det(dc):
        w, _ = eigendecompose_hermitian(dressed_hamiltonian(omega, omega_c, dc, v_ab))
        return float(np.prod(w))

    mid = -v_ab / 2.0
    span = abs(v_ab) + abs(omega) + abs(omega_c) ** 2 / max(abs(omega), 1e-12) + 10.0
    if abs(det(mid)) < 1e-14:
        return mid, mid
    plus = brentq(det, mid, mid + span, xtol=1e-14, rtol=1e-15)
    minus = brentq(det, mid - span, mid, xtol=1e-14, rtol=1e-15)
    return plus, minus


def bell_states():
    """``psi_E = (|3A1B> - |2A3B>)/sqrt2`` and ``psi_F = (|3A3B> - |2A1B>)/sqrt2``."""
    s = 1.0 / math.sqrt(2.0)
    psi_e = np.array([0.0, -s, s, 0.0], dtype=np.complex128)
    psi_f = np.array([-s, 0.0, 0.0, s], dtype=np.complex128)
    return psi_e, psi_f


def subspace_indices(space, target=0, control=1):
    """Indices of the dressed basis inside a two-site composite space."""
    out = []
    for la, lb in _BASIS_LEVELS:
        levels = [1] * space.n_sites
        levels[target], levels[control] = la, lb
        out.append(space.basis_index(tuple(levels)))
    return np.array(out)


def embed_state(space, psi4, target=0, control=1):
    """Lift a dressed-basis 4-vector into the full space."""
    full = np.zeros(space.total_dim, dtype=np.complex128)
    full[subspace_indices(space, target, control)] = psi4
    return full


def blockade_state(space, target=0, control=1):
    """Product state ``|1A 3B>``: control excited, target in the ground state."""
    levels = [1] * space.n_sites
    levels[control] = 3
    full = np.zeros(space.total_dim, dtype=np.complex128)
    full[space.basis_index(tuple(levels))] = 1.0
    return full
