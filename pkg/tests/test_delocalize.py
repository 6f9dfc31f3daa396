import math

import numpy as np
import pytest

from fitsim import delocalize as dl
from fitsim import propagation as pr
from fitsim.config import SystemConfig
from fitsim.errors import ConfigError, SingularGeometryError
from fitsim.units import c6_from_ghz

SYSTEM = SystemConfig(omega_p=0.01, omega=3.0, omega_c=3.0, v_ab=15.0)
C6_D6 = -c6_from_ghz(2.68e4)


def base_config(dz=0.2):
    return pr.PropagationConfig(pr.Grid1D.with_spacing(-10.0, 10.0, dz), SYSTEM, kappa=0.0897,
                                control_position=0.0, d=6.0, c6=C6_D6)


class TestSampling:
    def test_zero_width(self):
        spec = dl.DelocalizationSpec(0.0, 6.0, C6_D6)
        np.testing.assert_array_equal(dl.sample_offset(spec, 3), 0.0)

    def test_component_variance(self):
        spec = dl.DelocalizationSpec(1.5, 6.0, C6_D6)
        r = dl.sample_offset(spec, dl.trajectory_rng(11, 0), size=100_000)
        np.testing.assert_allclose(r.var(axis=0), 1.5**2 / 2, rtol=0.02)

    def test_deterministic_per_index(self):
        spec = dl.DelocalizationSpec(1.0, 6.0, C6_D6, rng_seed=42)
        np.testing.assert_array_equal(dl.sample_offset(spec, 7), dl.sample_offset(spec, 7))
        assert not np.array_equal(dl.sample_offset(spec, 7), dl.sample_offset(spec, 8))
        other = dl.DelocalizationSpec(1.0, 6.0, C6_D6, rng_seed=43)
        assert not np.array_equal(dl.sample_offset(spec, 7), dl.sample_offset(other, 7))

    def test_one_dimensional(self):
        spec = dl.DelocalizationSpec(1.0, 6.0, C6_D6, dims=1)
        r = dl.sample_offset(spec, 0, size=50)
        assert np.all(r[:, :2] == 0) and np.any(r[:, 2] != 0)

    @pytest.mark.parametrize("kwargs", [dict(sigma=-1.0), dict(n_trajectories=0), dict(dims=2),
                                        dict(rng_seed=2**64), dict(d=0.0)])
    def test_validation(self, kwargs):
        args = dict(sigma=1.0, d=6.0, c6=C6_D6) | kwargs
        with pytest.raises(ConfigError):
            dl.DelocalizationSpec(**args)


class TestInteraction:
    @pytest.mark.parametrize("d,c6_ghz", [(6.0, 2.68e4), (10.0, 5.77e5)])
    def test_quoted_coefficients_give_fifteen(self, d, c6_ghz):
        v = dl.effective_interaction([d, 0, 0], [0, 0, 0], -c6_from_ghz(c6_ghz))
        assert v == pytest.approx(15.0, rel=0.02)

    def test_offset_along_separation(self):
        assert dl.effective_interaction([6, 0, 0], [1, 0, 0], -7.0**6) == pytest.approx(1.0)

    def test_singular(self):
        with pytest.raises(SingularGeometryError):
            dl.effective_interaction([6, 0, 0], [-6, 0, 0], 1.0)
        with pytest.raises(SingularGeometryError):
            dl.interaction_profile(np.array([1.0]), 0.0, 6.0, (-6.0, 0.0, 1.0), 1.0)

    def test_profile_peak(self):
        z = np.linspace(-5, 5, 11)
        v = dl.interaction_profile(z, 0.0, 6.0, (0, 0, 1.0), -6.0**6)
        assert z[np.argmax(v)] == 1.0 and v.max() == pytest.approx(1.0)


class TestMcSpectrum:
    grid = np.linspace(-25, 5, 13)

    def test_zero_width_matches_localized_bitwise(self):
        spec = dl.DelocalizationSpec(0.0, 6.0, C6_D6, n_trajectories=4)
        mc = dl.mc_spectrum(spec, base_config(), self.grid)
        for k, dc in enumerate(self.grid):
            cfg = base_config().replace(system=SYSTEM.replace(delta_c=float(dc)))
            t = pr.propagate_cw(cfg, check_linear=False).transmission
            assert mc.mean["transmission"][k] == t
            assert np.all(mc.curves["transmission"][:, k] == t)

    def test_seed_determinism_and_threads(self):
        spec = dl.DelocalizationSpec(1.0, 6.0, C6_D6, n_trajectories=12, rng_seed=5)
        a = dl.mc_spectrum(spec, base_config(), self.grid)
        b = dl.mc_spectrum(spec, base_config(), self.grid, threads=3)
        np.testing.assert_array_equal(a.curves["transmission"], b.curves["transmission"])

    def test_bounds_and_metadata(self):
        spec = dl.DelocalizationSpec(1.0, 6.0, C6_D6, n_trajectories=20, rng_seed=1)
        mc = dl.mc_spectrum(spec, base_config(), self.grid)
        t = mc.curves["transmission"]
        assert np.all((t >= 0) & (t <= 1))
        assert mc.n_failed == 0 and mc.n_trajectories == 20
        assert mc.meta["sigma_over_d"] == pytest.approx(1 / 6)

    def test_stderr_scaling(self):
        grid = np.array([-15.0])
        n = 50
        small = dl.mc_spectrum(dl.DelocalizationSpec(1.0, 6.0, C6_D6, n, rng_seed=2), base_config(), grid)
        big = dl.mc_spectrum(dl.DelocalizationSpec(1.0, 6.0, C6_D6, 4 * n, rng_seed=2), base_config(), grid)
        ratio = big.stderr["transmission"][0] / small.stderr["transmission"][0]
        assert ratio == pytest.approx(0.5, rel=0.2)

    def test_failures_are_counted(self, caplog):
        # Offsets that bring the excitation close to the channel make the
        # local response too steep for the grid; those trajectories are dropped.
        spec = dl.DelocalizationSpec(3.0, 1.0, -1e3, n_trajectories=30, rng_seed=3)
        cfg = base_config(dz=0.5).replace(kappa=50.0)
        mc = dl.mc_spectrum(spec, cfg, np.array([-1.0]))
        assert 0 < mc.n_failed == len(mc.failed) < 30
        assert mc.curves["transmission"].shape[0] == 30 - mc.n_failed
        assert "trajectories failed" in caplog.text

    def test_requires_localized(self):
        ramp = pr.PropagationConfig(pr.Grid1D(0, 10, 16), SYSTEM, ramp=pr.RampSpec(5, 0, 2, 1))
        with pytest.raises(ConfigError):
            dl.mc_spectrum(dl.DelocalizationSpec(1.0, 6.0, C6_D6), ramp, self.grid)


class TestMcSwitch:
    def test_shapes_and_zero_width(self):
        cfg = pr.PropagationConfig(pr.Grid1D.with_spacing(0, 40, 0.5), SYSTEM, kappa=0.0897,
                                   ramp=pr.RampSpec(50, 0, 10, 3))
        spec = dl.DelocalizationSpec(0.0, 6.0, -15.0 * 6.0**6, n_trajectories=3)
        mc = dl.mc_switch(spec, cfg)
        ref = pr.propagate_cw(cfg, check_linear=False)
        for name in ("intensity", "rho33_A", "rho33_B", "re_rho31_B"):
            assert mc.curves[name].shape == (3, len(cfg.grid.z))
            np.testing.assert_allclose(mc.mean[name], getattr(ref, name), atol=1e-10)

    def test_requires_ramp(self):
        with pytest.raises(ConfigError):
            dl.mc_switch(dl.DelocalizationSpec(1.0, 6.0, C6_D6), base_config())


def test_stats_shifted_mean_is_exact_for_identical_rows():
    row = np.array([0.1, 0.2, 0.3]) / 3
    mean, err = dl._stats(np.tile(row, (7, 1)))
    np.testing.assert_array_equal(mean, row)
    np.testing.assert_array_equal(err, 0.0)
    assert math.isnan(dl._stats(row[None, :])[1][0])
