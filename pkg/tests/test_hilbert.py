import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fitsim.errors import ConfigError, DimensionError, SingularGeometryError
from fitsim.hilbert import (
    CONTROL,
    TARGET,
    TWO_PHOTON,
    AtomSite,
    CompositeSpace,
    DriveParams,
    InteractionSpec,
    TwoPhotonDrive,
    build_hamiltonian,
    embed_operator,
    pair_potential,
    sigma,
    two_atom_space,
)

from .conftest import random_hermitian


def ket(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def brute_two_atom(wp, w, wc, dc, v):
    """Two-site Hamiltonian written out with explicit Kronecker products."""
    s = {(a, b): np.outer(ket(3, a - 1), ket(3, b - 1)) for a in (1, 2, 3) for b in (1, 2, 3)}
    c31 = np.outer(ket(2, 1), ket(2, 0))
    c33 = np.outer(ket(2, 1), ket(2, 1))
    i2, i3 = np.eye(2), np.eye(3)
    ha = -wp / 2 * s[2, 1] - w / 2 * s[3, 2]
    ha = ha + ha.T
    hb = -wc / 2 * c31
    hb = hb + hb.T + dc * c33
    return np.kron(ha, i2) + np.kron(i3, hb) + v * np.kron(s[3, 3], c33)


class TestSites:
    def test_level_count_checked(self):
        with pytest.raises(ConfigError):
            AtomSite(4, TARGET)

    def test_two_photon_needs_three_levels(self):
        with pytest.raises(ConfigError):
            AtomSite(2, CONTROL, drive_scheme=TWO_PHOTON)

    def test_two_level_site_maps_levels_1_and_3(self):
        site = AtomSite(2, CONTROL)
        assert site.level_index(1) == 0 and site.level_index(3) == 1
        with pytest.raises(DimensionError):
            site.level_index(2)

    def test_total_dim_is_product(self):
        space = CompositeSpace((AtomSite(3, TARGET), AtomSite(3, TARGET), AtomSite(2, CONTROL)))
        assert space.total_dim == 18
        assert space.basis_index((3, 1, 3)) == 2 * 6 + 0 * 2 + 1


class TestEmbedding:
    def test_identity(self):
        space = two_atom_space()
        for i, n in enumerate(space.dims):
            np.testing.assert_array_equal(embed_operator(space, i, np.eye(n)), np.eye(6))

    def test_diag_on_control_site(self):
        out = embed_operator(two_atom_space(), 1, np.diag([0.0, 1.0]))
        np.testing.assert_array_equal(out, np.diag([0, 1, 0, 1, 0, 1]))

    def test_different_sites_commute(self, rng):
        space = two_atom_space()
        x = embed_operator(space, 0, random_hermitian(3, rng))
        y = embed_operator(space, 1, random_hermitian(2, rng))
        np.testing.assert_allclose(x @ y - y @ x, 0, atol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            embed_operator(two_atom_space(), 1, np.eye(3))
        with pytest.raises(DimensionError):
            embed_operator(two_atom_space(), 2, np.eye(2))

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2))
    def test_homomorphism(self, seed, site):
        rng = np.random.default_rng(seed)
        space = CompositeSpace((AtomSite(3, TARGET), AtomSite(2, CONTROL), AtomSite(3, TARGET)))
        n = space.dims[site]
        a, b = random_hermitian(n, rng), random_hermitian(n, rng)
        lhs = embed_operator(space, site, a @ b)
        rhs = embed_operator(space, site, a) @ embed_operator(space, site, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestPairPotential:
    def test_on_axis(self):
        assert pair_potential(0.0, 6.0, 2.0) == pytest.approx(-2.0 / 6.0**6)

    def test_at_dz_equal_d(self):
        assert pair_potential(5.0, 5.0, 3.0) == pytest.approx(pair_potential(0.0, 5.0, 3.0) / 8)

    def test_decays(self):
        assert abs(pair_potential(1e4, 5.0, 1e6)) < 1e-15

    def test_singular(self):
        with pytest.raises(SingularGeometryError):
            pair_potential(0.0, 0.0, 1.0)

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0.5, 20))
    def test_even_and_monotone(self, z1, z2, d):
        c6 = 1e4
        assert pair_potential(z1, d, c6) == pair_potential(-z1, d, c6)
        lo, hi = sorted((z1, z2))
        assert pair_potential(lo, d, c6) <= pair_potential(hi, d, c6) < 0


class TestHamiltonian:
    def test_matches_kronecker_oracle(self):
        space = two_atom_space()
        drive = DriveParams(0.5, 5.0, 5.0, -3.0)
        h = build_hamiltonian(space, drive, InteractionSpec(pair_overrides={(0, 1): 15.0}))
        assert h.shape == (6, 6)
        np.testing.assert_allclose(h, brute_two_atom(0.5, 5.0, 5.0, -3.0, 15.0), atol=1e-15)
        assert np.max(np.abs(h - h.conj().T)) < 1e-12

    @pytest.mark.parametrize("dc", [0.0, -15.0, 4.0])
    def test_facilitated_diagonal(self, dc):
        space = two_atom_space()
        h = build_hamiltonian(space, DriveParams(0.5, 5.0, 5.0, dc), InteractionSpec(pair_overrides={(0, 1): 15.0}))
        assert h[space.basis_index((3, 3)), space.basis_index((3, 3))] == dc + 15.0

    def test_no_drive_is_diagonal(self):
        space = two_atom_space()
        h = build_hamiltonian(space, DriveParams(0.0, 0.0, 0.0, 2.0), InteractionSpec())
        np.testing.assert_array_equal(h, np.diag(np.diag(h)))
        np.testing.assert_array_equal(np.diag(h), [0, 2, 0, 2, 0, 2])

    def test_pair_value_from_geometry(self):
        space = two_atom_space(d=6.0)
        h = build_hamiltonian(space, DriveParams(0, 0, 0), InteractionSpec(c6=-15 * 6.0**6))
        assert h[-1, -1] == pytest.approx(15.0)

    def test_two_photon_terms(self):
        space = two_atom_space(TWO_PHOTON)
        drive = DriveParams(0.8, 4.0, 0.0, -2.0, TwoPhotonDrive(0.8, 4.0, 10.0))
        h = build_hamiltonian(space, drive, InteractionSpec(pair_overrides={(0, 1): 15.0}))
        i1, i2, i3 = (space.basis_index((1, lev)) for lev in (1, 2, 3))
        assert h[i2, i1] == -0.4 and h[i3, i2] == -2.0
        assert h[i2, i2] == 10.0 and h[i3, i3] == -2.0
        assert h[space.basis_index((3, 3)), space.basis_index((3, 3))] == 13.0

    def test_two_photon_requires_parameters(self):
        with pytest.raises(ConfigError):
            build_hamiltonian(two_atom_space(TWO_PHOTON), DriveParams(0.5, 5, 5), InteractionSpec())
        with pytest.raises(ConfigError):
            TwoPhotonDrive(1.0, 1.0, 0.0)

    def test_two_photon_effective_rabi(self):
        assert TwoPhotonDrive(0.8, 4.0, 10.0).omega_eff == pytest.approx(0.16)

    def test_non_real_drive_rejected(self):
        with pytest.raises(ConfigError):
            DriveParams(1j, 1.0, 1.0)

    @given(st.floats(-20, 20), st.floats(0, 30), st.floats(0.1, 6))
    def test_site_order_leaves_spectrum_unchanged(self, dc, v, w):
        a = CompositeSpace((AtomSite(3, TARGET), AtomSite(2, CONTROL)))
        b = CompositeSpace((AtomSite(2, CONTROL), AtomSite(3, TARGET)))
        drive = DriveParams(0.5, w, 3.0, dc)
        inter = InteractionSpec(pair_overrides={(0, 1): v})
        ea = np.linalg.eigvalsh(build_hamiltonian(a, drive, inter))
        eb = np.linalg.eigvalsh(build_hamiltonian(b, drive, inter))
        np.testing.assert_allclose(ea, eb, atol=1e-10)

    def test_sigma_on_two_level_site(self):
        np.testing.assert_array_equal(sigma(2, 3, 1), [[0, 0], [1, 0]])
