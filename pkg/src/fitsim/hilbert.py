"""Composite Hilbert spaces, operator embedding and system Hamiltonians.

Levels are labelled physically: |1> ground, |2> intermediate, |3> Rydberg.
A three-level site stores them at local indices 0, 1, 2. A two-level site
(one-photon control) keeps only {|1>, |3>} at local indices 0, 1, so the
label-3 operators of such a site act on its second basis vector. Site 0 is the
slowest-varying tensor factor.

Hamiltonian conventions (rotating frame, hbar = 1, rates in Gamma):

* target site: ``-(omega_p/2) s21 - (omega/2) s32 + h.c.``
* one-photon control site: ``-(omega_c/2) s31 + h.c. + delta_c s33``
* two-photon control site: ``-(omega_c1/2) s21 - (omega_c2/2) s32 + h.c.
  + delta s22 + delta_c s33``
* every pair: ``V_jl s33(j) s33(l)``

where ``s_ab = |a><b|``. Detunings enter the diagonal once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError, DimensionError, SingularGeometryError

TARGET = "target"
CONTROL = "control"
ONE_PHOTON = "one_photon"
TWO_PHOTON = "two_photon"


@dataclass(frozen=True)
class AtomSite:
    level_count: int
    role: str
    position: tuple = (0.0, 0.0, 0.0)
    drive_scheme: str = ONE_PHOTON

    def __post_init__(self):
        if self.level_count not in (2, 3):
            raise ConfigError(f"level_count must be 2 or 3, got {self.level_count}", field="level_count")
        if self.role not in (TARGET, CONTROL):
            raise ConfigError(f"unknown role {self.role!r}", field="role")
        if self.drive_scheme not in (ONE_PHOTON, TWO_PHOTON):
            raise ConfigError(f"unknown drive scheme {self.drive_scheme!r}", field="drive_scheme")
        if self.drive_scheme == TWO_PHOTON and self.level_count != 3:
            raise ConfigError("a two-photon site needs three levels", field="drive_scheme")
        if self.role == TARGET and self.level_count != 3:
            raise ConfigError("target sites are three-level ladders", field="level_count")
        pos = tuple(float(x) for x in self.position)
        if len(pos) != 3:
            raise ConfigError("position must be a 3-vector", field="position")
        object.__setattr__(self, "position", pos)

    def level_index(self, level):
        """Local basis index of physical level ``level`` (1, 2 or 3)."""
        if self.level_count == 3:
            if level in (1, 2, 3):
                return level - 1
        elif level == 1:
            return 0
        elif level == 3:
            return 1
        raise DimensionError(f"level {level} does not exist on a {self.level_count}-level site")

    def has_level(self, level):
        try:
            self.level_index(level)
        except DimensionError:
            return False
        return True


@dataclass(frozen=True)
class CompositeSpace:
    sites: tuple

    def __post_init__(self):
        sites = tuple(self.sites)
        if not sites:
            raise ConfigError("a space needs at least one site", field="sites")
        object.__setattr__(self, "sites", sites)

    @property
    def dims(self):
        return tuple(s.level_count for s in self.sites)

    @property
    def total_dim(self):
        return math.prod(self.dims)

    @property
    def n_sites(self):
        return len(self.sites)

    def indices(self, role):
        return tuple(i for i, s in enumerate(self.sites) if s.role == role)

    def basis_index(self, levels):
        """Flat index of the product state with physical ``levels`` per site."""
        if len(levels) != self.n_sites:
            raise DimensionError("one level label per site is required")
        idx = 0
        for site, lev in zip(self.sites, levels):
            idx = idx * site.level_count + site.level_index(lev)
        return idx

    def ground_index(self):
        return self.basis_index((1,) * self.n_sites)


@dataclass(frozen=True)
class TwoPhotonDrive:
    omega_c1: float
    omega_c2: float
    delta: float

    def __post_init__(self):
        if self.delta == 0:
            raise ConfigError("two-photon intermediate detuning must be non-zero", field="delta")

    @property
    def omega_eff(self):
        """Effective two-photon Rabi frequency in the large-detuning limit."""
        return self.omega_c1 * self.omega_c2 / (2.0 * self.delta)


@dataclass(frozen=True)
class DriveParams:
    omega_p: float
    omega: float
    omega_c: float
    delta_c: float = 0.0
    two_photon: TwoPhotonDrive | None = None

    def __post_init__(self):
        for name in ("omega_p", "omega", "omega_c", "delta_c"):
            val = getattr(self, name)
            if isinstance(val, complex) or not np.isfinite(val):
                raise ConfigError(f"{name} must be a finite real number", field=name)


@dataclass(frozen=True)
class InteractionSpec:
    """Pair interactions: ``-c6/r^6`` from site positions unless overridden.

    ``pair_overrides`` maps an unordered site pair ``(i, j)`` to ``V_ij``.
    """

    c6: float = 0.0
    pair_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, val in dict(self.pair_overrides).items():
            i, j = key
            if i == j:
                raise ConfigError(f"self-interaction for site {i}", field="pair_overrides")
            k = (min(i, j), max(i, j))
            if k in clean and clean[k] != val:
                raise ConfigError(f"conflicting overrides for pair {k}", field="pair_overrides")
            clean[k] = float(val)
        object.__setattr__(self, "pair_overrides", clean)

    def __hash__(self):
        return hash((self.c6, tuple(sorted(self.pair_overrides.items()))))

    def pair_value(self, space, i, j):
        k = (min(i, j), max(i, j))
        if k in self.pair_overrides:
            return self.pair_overrides[k]
        if self.c6 == 0:
            return 0.0
        ri = np.asarray(space.sites[i].position)
        rj = np.asarray(space.sites[j].position)
        perp = float(np.hypot(ri[0] - rj[0], ri[1] - rj[1]))
        return pair_potential(ri[2] - rj[2], perp, self.c6)


def sigma(level_count, a, b):
    """Local operator |a><b| on a site with ``level_count`` levels."""
    site = AtomSite(level_count, CONTROL if level_count == 2 else TARGET)
    op = np.zeros((level_count, level_count), dtype=np.complex128)
    op[site.level_index(a), site.level_index(b)] = 1.0
    return op


def embed_operator(space, site_index, local):
    """Identity-padded tensor embedding of a single-site operator."""
    if not 0 <= site_index < space.n_sites:
        raise DimensionError(f"site index {site_index} out of range for {space.n_sites} sites")
    local = np.asarray(local, dtype=np.complex128)
    n = space.dims[site_index]
    if local.shape != (n, n):
        raise DimensionError(f"site {site_index} has {n} levels, operator shape is {local.shape}")
    left = math.prod(space.dims[:site_index])
    right = math.prod(space.dims[site_index + 1:])
    return np.kron(np.kron(np.eye(left), local), np.eye(right))


def site_sigma(space, site_index, a, b):
    """Embedded |a><b| acting on site ``site_index``."""
    site = space.sites[site_index]
    return embed_operator(space, site_index, sigma(site.level_count, a, b))


def level_mask(space, site_index, level):
    """Boolean vector marking basis states with site ``site_index`` in ``level``."""
    site = space.sites[site_index]
    local = np.zeros(site.level_count, dtype=bool)
    local[site.level_index(level)] = True
    left = math.prod(space.dims[:site_index])
    right = math.prod(space.dims[site_index + 1:])
    return np.repeat(np.tile(local, left), right)


def pair_potential(delta_z, d, c6):
    """Van der Waals shift ``-c6/(delta_z^2 + d^2)^3``."""
    r2 = float(delta_z) ** 2 + float(d) ** 2
    if r2 == 0.0:
        raise SingularGeometryError("coincident sites give a divergent pair potential")
    return -c6 / r2**3


def hamiltonian_parts(space, drive, interaction):
    """Split the Hamiltonian into ``static + delta_c * diag(det) + diag(vdw)``.

    Returns the static hermitian matrix (drives and two-photon intermediate
    detunings), the real diagonal multiplying ``delta_c`` and the real
    interaction diagonal.
    """
    dim = space.total_dim
    static = np.zeros((dim, dim), dtype=np.complex128)
    det = np.zeros(dim)
    vdw = np.zeros(dim)
    for i, site in enumerate(space.sites):
        if site.role == TARGET:
            terms = ((2, 1, -drive.omega_p / 2), (3, 2, -drive.omega / 2))
        elif site.drive_scheme == ONE_PHOTON:
            terms = ((3, 1, -drive.omega_c / 2),)
        else:
            tp = drive.two_photon
            if tp is None:
                raise ConfigError(f"site {i} is two-photon driven but no two-photon drive is set",
                                  field="two_photon")
            terms = ((2, 1, -tp.omega_c1 / 2), (3, 2, -tp.omega_c2 / 2))
            static += tp.delta * np.diag(level_mask(space, i, 2).astype(float))
        for a, b, amp in terms:
            if amp != 0:
                op = site_sigma(space, i, a, b)
                static += amp * (op + op.conj().T)
        if site.role == CONTROL:
            det += level_mask(space, i, 3)
    for i, j in itertools.combinations(range(space.n_sites), 2):
        v = interaction.pair_value(space, i, j)
        if v != 0:
            vdw += v * (level_mask(space, i, 3) & level_mask(space, j, 3))
    return static, det, vdw


def build_hamiltonian(space, drive, interaction):
    """Assemble the full hermitian Hamiltonian of ``space``."""
    static, det, vdw = hamiltonian_parts(space, drive, interaction)
    return static + np.diag(drive.delta_c * det + vdw)


def kron_all(ops):
    return reduce(np.kron, ops)


# ---------------------------------------------------------------------------
# Convenience spaces
# ---------------------------------------------------------------------------


def two_atom_space(control_scheme=ONE_PHOTON, d=None):
    """Target at the origin plus one control site; ``d`` sets their separation."""
    levels = 2 if control_scheme == ONE_PHOTON else 3
    pos_b = (float(d) if d is not None else 0.0, 0.0, 0.0)
    return CompositeSpace((
        AtomSite(3, TARGET),
        AtomSite(levels, CONTROL, pos_b, control_scheme),
    ))

