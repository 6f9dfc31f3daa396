import json
import subprocess
import sys

import numpy as np
import pytest

from fitsim import cli

SPECTRUM = """
[system]
omega_p = 0.5
omega = 5.0
omega_c = 5.0
v_ab = 15.0

[spectrum]
v_ab = [15.0]
delta_c_min = -20.0
delta_c_max = 5.0
points = 26
"""

DRESSED = """
[system]
omega_c = 5.0
gamma_control = 0.1

[dressed]
omega = 3.0
eigencurve_v_ab = 15.0
delta_c = [-20.0, -10.0, 0.0]
v_ab = [15.0]
omega_c = [3.0]
points = 41
"""

SWITCH = """
[system]
omega_p = 0.01
omega = 3.0
omega_c = 3.0
v_ab = 15.0

[switch.calibration]
length = 40.0

[switch.localized]
z_min = -10.0
z_max = 10.0
dz = 0.5
d = 6.0
delta_c = [-15.0]

[switch.ramp]
z_min = 0.0
z_max = 40.0
dz = 0.5
delta_c0 = 50.0
z_q = 10.0
z_s = 3.0
"""

MONTECARLO = """
[units]
c6 = "GHz_um6"

[system]
omega_p = 0.01
omega = 3.0
omega_c = 3.0

[montecarlo]
d = [6.0]
c6 = [-2.68e4]
sigma = 1.0
n_trajectories = 6
seed = 7
kappa = 0.0897
z_min = -10.0
z_max = 10.0
dz = 0.5
delta_c = [-20.0, -15.0, -10.0, 0.0]
determinism_check = true

[montecarlo.switch]
d = 6.0
c6 = -2.68e4
z_min = 0.0
z_max = 20.0
dz = 0.5
delta_c0 = 50.0
z_q = 5.0
z_s = 3.0
delta_cF = [-15.0]
"""

MULTI = """
[system]
omega_p = 0.5

[multichannel]
n_targets = [2]
v_ct = 15.0
v_tt = [10.0]
delta_c = [-15.0, 0.0]
"""


def run(tmp_path, command, text, *extra, name="cfg.toml"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def header(path):
    with open(path) as fh:
        return [next(fh).rstrip("\n") for _ in range(3)]


class TestOutputs:
    def test_spectrum(self, tmp_path):
        code, out = run(tmp_path, "spectrum", SPECTRUM)
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["fitsim_manifest"] == 1
        assert sorted(manifest["files"]) == ["spectrum_peaks.csv", "spectrum_v15_wp0p5.csv"]
        lines = header(out / "spectrum_v15_wp0p5.csv")
        assert lines[0] == f"# manifest_sha256={manifest['digest']}"
        assert lines[1] == "# schema=spectrum_v15_wp0p5 v1"
        cols, data = cli.read_csv(out / "spectrum_v15_wp0p5.csv")
        assert cols == ["delta_c", "im_rho21", "re_rho21", "rho33_A", "rho33_B", "re_o_ab", "im_o_ab",
                        "mandel_q", "fidelity_B", "fidelity_F", "im_approx_rho21", "re_chi", "im_chi"]
        assert data.shape == (26, 13)
        np.testing.assert_allclose(data[:, -1], data[:, 1] / 0.5)

    def test_dressed(self, tmp_path):
        code, out = run(tmp_path, "dressed", DRESSED)
        assert code == 0
        cols, data = cli.read_csv(out / "dressed_gap.csv")
        assert cols == ["omega_c", "v_ab", "delta_e", "delta_e_reference", "dc_plus", "dc_minus",
                        "dc_plus_numeric", "dc_minus_numeric", "peak_separation"]
        np.testing.assert_allclose(data[0, 4:6], data[0, 6:8], atol=1e-10)
        assert cli.read_csv(out / "dressed_eigencurve.csv")[1].shape == (3, 5)

    def test_switch(self, tmp_path):
        code, out = run(tmp_path, "switch", SWITCH)
        assert code == 0
        cols, data = cli.read_csv(out / "switch_ramp_dcF0.csv")
        assert cols == ["z", "intensity", "rho33_A", "rho33_B", "re_rho31_B", "delta_c", "v_ab", "im_chi"]
        assert data[-1, 1] == pytest.approx(0.01, abs=1e-3)
        names = json.loads((out / "manifest.json").read_text())["files"]
        assert "switch_localized_dcm15.csv" in names and "switch_ramp_dcFm15.csv" in names

    def test_montecarlo(self, tmp_path):
        code, out = run(tmp_path, "montecarlo", MONTECARLO)
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["extra"]["determinism_check"] is True
        assert manifest["seed"] == 7
        cols, data = cli.read_csv(out / "mc_spectrum_d6.csv")
        assert cols == ["delta_c", "localized_T", "mean_T", "stderr_T"]
        cols, _ = cli.read_csv(out / "mc_switch_dcFm15.csv")
        assert cols[:5] == ["z", "intensity_localized", "intensity_mean", "intensity_stderr",
                            "intensity_trajectory0"]
        assert len(cols) == 17

    def test_multichannel(self, tmp_path):
        code, out = run(tmp_path, "multichannel", MULTI)
        assert code == 0
        cols, data = cli.read_csv(out / "multichannel_n2_contrast.csv")
        assert cols == ["delta_c", "vtt_0", "vtt_10"]
        np.testing.assert_array_equal(data[:, 1], 0.0)

    def test_validate(self, tmp_path, capsys):
        assert cli.main(["validate", "--out", str(tmp_path)]) == 0
        text = capsys.readouterr().out
        assert "FAIL" not in text and text.count("PASS") >= 9


class TestReproducibility:
    def test_manifest_replay(self, tmp_path):
        code, out = run(tmp_path, "montecarlo", MONTECARLO, "--seed", "99")
        assert code == 0
        replay = tmp_path / "replay"
        assert cli.main(["montecarlo", "--config", str(out / "manifest.json"), "--out", str(replay)]) == 0
        first = json.loads((out / "manifest.json").read_text())
        second = json.loads((replay / "manifest.json").read_text())
        assert first["digest"] == second["digest"] and second["seed"] == 99
        for name in first["files"]:
            assert (out / name).read_bytes() == (replay / name).read_bytes()

    def test_seed_changes_digest(self, tmp_path):
        digests = []
        for seed in ("1", "2"):
            (tmp_path / seed).mkdir()
            _, out = run(tmp_path / seed, "spectrum", SPECTRUM, "--seed", seed)
            digests.append(json.loads((out / "manifest.json").read_text())["digest"])
        assert digests[0] != digests[1]


class TestExitCodes:
    def test_unknown_field(self, tmp_path, capsys):
        code, _ = run(tmp_path, "spectrum", "[system]\nomega = 3\nbogus = 1\n")
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_empty_grid(self, tmp_path, capsys):
        code, _ = run(tmp_path, "spectrum", "[spectrum]\ndelta_c = []\n")
        assert code == 2
        assert "empty" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["spectrum", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2

    def test_bad_threads(self, tmp_path):
        assert run(tmp_path, "spectrum", SPECTRUM, "--threads", "0")[0] == 2

    def test_numerical_failure(self, tmp_path, capsys):
        text = "[system]\ngamma_21 = 0.0\ngamma_32 = 0.0\ngamma_control = 0.0\n[spectrum]\nv_ab = [15.0]\npoints = 5\n"
        code, _ = run(tmp_path, "spectrum", text)
        assert code == 3
        assert "NonUniqueSteadyStateError" in capsys.readouterr().err

    def test_bad_seed(self, tmp_path):
        with pytest.raises(SystemExit):
            cli.main(["spectrum", "--seed", "-1", "--out", str(tmp_path)])


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "fitsim.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("spectrum", "dressed", "switch", "montecarlo", "multichannel", "validate"):
        assert name in out.stdout
