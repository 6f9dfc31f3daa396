"""Command-line front end: ``fitsim <subcommand> --config file.toml --out dir``.

Every run writes CSV tables (17 significant digits) plus ``manifest.json``.
The manifest holds the resolved config in Gamma units, the seed and the
tolerances; passing it back as ``--config`` repeats the run, and its digest
heads every CSV file.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import logging
import sys
import time
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import kernels
from . import lindblad as lb
from .config import ConfigDocument, default_grid
from .delocalize import DelocalizationSpec, mc_spectrum, mc_switch
from .dressed import dressed_states, energy_gap, numeric_resonance_detunings, resonance_detunings
from .errors import ConfigError, FitSimError
from .observables import RingGeometry, Spectrum, coherence_spectrum, multi_target_spectrum
from .propagation import (
    CW,
    TD,
    Grid1D,
    PropagationConfig,
    PropagationResult,
    RampSpec,
    calibrate_kappa,
    propagate_cw,
    propagate_td,
)

log = logging.getLogger("fitsim")

SCHEMA_VERSION = 1
MANIFEST_KEY = "fitsim_manifest"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULT_CONFIGS = {
    "spectrum": "spectrum.toml",
    "dressed": "dressed.toml",
    "switch": "switch.toml",
    "montecarlo": "montecarlo.toml",
    "multichannel": "multichannel.toml",
    "validate": None,
}

TOLERANCES = {
    "lindblad": {"steady_residual": lb.STEADY_TOL, "trace": lb.TRACE_TOL, "positivity": lb.POS_TOL},
    "observables": {"peak_prominence": 0.05},
    "propagation": {"calibration_T": 1e-3, "rk4_stability": 2.5},
    "delocalize": {"convergence_rel": 0.01},
}


def tool_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def bundled_config(name):
    """Path-like handle to a config shipped with the package."""
    return resources.files("fitsim").joinpath("configs", name)


# ---------------------------------------------------------------------------
# Manifest and CSV output
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    seed: int | None
    mode: str
    tolerances: dict = dataclasses.field(default_factory=lambda: copy.deepcopy(TOLERANCES))
    wall_clock_s: float = 0.0
    files: list = dataclasses.field(default_factory=list)
    extra: dict = dataclasses.field(default_factory=dict)

    def reproducible_part(self):
        return {"command": self.command, "config": self.config, "version": self.version,
                "seed": self.seed, "mode": self.mode, "tolerances": self.tolerances,
                "schema": SCHEMA_VERSION}

    @property
    def digest(self):
        blob = json.dumps(_jsonable(self.reproducible_part()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self):
        data = {MANIFEST_KEY: SCHEMA_VERSION, "digest": self.digest}
        data.update(self.reproducible_part())
        data.update({"wall_clock_s": self.wall_clock_s, "files": self.files, "extra": self.extra})
        return json.dumps(_jsonable(data), indent=2, sort_keys=True)


class Output:
    def __init__(self, out_dir, manifest):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def csv(self, name, columns, data):
        """Write ``data`` (rows x columns) with a digest header."""
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.shape[1] != len(columns):
            raise ValueError(f"{name}: {data.shape[1]} columns for {len(columns)} names")
        path = self.dir / name
        header = (f"manifest_sha256={self.manifest.digest}\nschema={name.split('.')[0]} "
                  f"v{SCHEMA_VERSION}\n" + ",".join(columns))
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="# ")
        self.manifest.files.append(name)
        return path

    def finish(self):
        path = self.dir / "manifest.json"
        path.write_text(self.manifest.to_json() + "\n")
        return path


def read_csv(path):
    """Column names and data of a file written by :meth:`Output.csv`."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.startswith("#")]
    columns = lines[-1][1:].strip().split(",")
    return columns, np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def _tag(value):
    return f"{value:g}".replace("-", "m").replace(".", "p")


# ---------------------------------------------------------------------------
# Config access helpers
# ---------------------------------------------------------------------------


def load_document(path):
    """Config document plus the seed stored in it, if it is a manifest."""
    doc = ConfigDocument.load(path)
    if MANIFEST_KEY in doc.data:
        inner = doc.data.get("config")
        if not isinstance(inner, dict):
            raise ConfigError("manifest has no config table", field="config")
        return ConfigDocument(copy.deepcopy(inner), None, path), doc.data.get("seed"), doc.data.get("mode")
    return doc, None, None


def _resolved(doc):
    data = copy.deepcopy(doc.data)
    data.pop("units", None)
    return data


def _grid1d(doc, sec, prefix):
    z_min = doc.number(sec, "z_min", prefix=prefix)
    z_max = doc.number(sec, "z_max", prefix=prefix)
    try:
        if "n_cells" in sec:
            return Grid1D(z_min, z_max, int(doc.number(sec, "n_cells", prefix=prefix)))
        return Grid1D.with_spacing(z_min, z_max, doc.number(sec, "dz", 0.1, prefix=prefix))
    except ConfigError as exc:
        raise doc.error(str(exc), prefix + (exc.field or "z_max")) from exc


def _spectrum_rows(spec, omega_p):
    chi = (spec.re_rho21 + 1j * spec.im_rho21) / omega_p
    return np.column_stack([spec.table(), chi.real, chi.imag])


SPECTRUM_COLUMNS = Spectrum.COLUMNS + ("re_chi", "im_chi")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_spectrum(doc, args, out):
    system = doc.system()
    sec = doc.section("spectrum")
    v_list = doc.numbers(sec, "v_ab", [system.v_ab], prefix="spectrum.")
    wp_list = doc.numbers(sec, "omega_p", [system.omega_p], prefix="spectrum.")
    points = int(doc.number(sec, "points", 401, prefix="spectrum."))
    peak_rows = []
    for v in v_list:
        grid = doc.grid(sec, "spectrum.", default_grid(v, points))
        for wp in wp_list:
            cfg = system.replace(v_ab=v, omega_p=wp)
            spec = coherence_spectrum(cfg, grid, threads=args.threads)
            out.csv(f"spectrum_v{_tag(v)}_wp{_tag(wp)}.csv", SPECTRUM_COLUMNS, _spectrum_rows(spec, wp))
            for k, p in enumerate(spec.peaks):
                i = int(np.argmin(np.abs(grid - p)))
                peak_rows.append((v, wp, k, p, spec.im_rho21[i]))
            if not spec.peaks:
                peak_rows.append((v, wp, -1, np.nan, np.nan))
    out.csv("spectrum_peaks.csv", ("v_ab", "omega_p", "peak", "delta_c", "im_rho21"), peak_rows)


def run_dressed(doc, args, out):
    system = doc.system()
    sec = doc.section("dressed")
    omega = doc.number(sec, "omega", system.omega, prefix="dressed.")
    v_curve = doc.number(sec, "eigencurve_v_ab", system.v_ab, prefix="dressed.")
    grid = doc.grid(sec, "dressed.", default_grid(v_curve))
    rows = []
    for dc in grid:
        res = dressed_states(omega, system.omega_c, dc, v_curve)
        rows.append((dc, *res.eigenvalues))
    out.csv("dressed_eigencurve.csv", ("delta_c", "e1", "e2", "e3", "e4"), rows)
    v_list = doc.numbers(sec, "v_ab", [2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0], prefix="dressed.")
    oc_list = doc.numbers(sec, "omega_c", [system.omega_c], prefix="dressed.")
    points = int(doc.number(sec, "points", 401, prefix="dressed."))
    rows = []
    for oc in oc_list:
        for v in v_list:
            plus, minus = resonance_detunings(omega, oc, v)
            nplus, nminus = numeric_resonance_detunings(omega, oc, v)
            cfg = system.replace(omega=omega, omega_c=oc, v_ab=v)
            spec = coherence_spectrum(cfg, default_grid(v, points), threads=args.threads)
            sep = max(spec.peaks) - min(spec.peaks) if len(spec.peaks) >= 2 else np.nan
            rows.append((oc, v, energy_gap(omega, oc, v), v, plus, minus, nplus, nminus, sep))
    out.csv("dressed_gap.csv", ("omega_c", "v_ab", "delta_e", "delta_e_reference", "dc_plus", "dc_minus",
                                "dc_plus_numeric", "dc_minus_numeric", "peak_separation"), rows)


def _pulse(doc, sec):
    t_final = doc.number(sec, "t_final", 300.0, prefix="switch.pulse.")
    dt = doc.number(sec, "dt", 0.02, prefix="switch.pulse.")
    center = doc.number(sec, "center", t_final / 2, prefix="switch.pulse.")
    width = doc.number(sec, "width", t_final / 6, prefix="switch.pulse.")
    return (lambda tau: np.exp(-((tau - center) / width) ** 2)), t_final, dt


def _propagate(cfg, mode, pulse):
    if mode == TD:
        fn, t_final, dt = pulse
        return propagate_td(cfg, fn, t_final, dt)
    return propagate_cw(cfg)


def run_switch(doc, args, out):
    system = doc.system()
    sec = doc.section("switch", required=True)
    mode = TD if args.mode == "td" else CW
    pulse = _pulse(doc, sec.get("pulse", {}))
    ramp_sec = sec.get("ramp", {})
    loc_sec = sec.get("localized", {})
    cal = sec.get("calibration")
    ramp_grid = _grid1d(doc, ramp_sec, "switch.ramp.") if ramp_sec else None

    def ramp_spec(dcf):
        return RampSpec(doc.number(ramp_sec, "delta_c0", prefix="switch.ramp."), dcf,
                        doc.number(ramp_sec, "z_q", prefix="switch.ramp."),
                        doc.number(ramp_sec, "z_s", prefix="switch.ramp."))

    if cal is not None:
        if ramp_grid is None:
            raise doc.error("calibration needs a [switch.ramp] table", "switch.calibration")
        length = doc.number(cal, "length", prefix="switch.calibration.")
        target = doc.number(cal, "target_T", 0.01, prefix="switch.calibration.")
        ref = PropagationConfig(ramp_grid, system, ramp=ramp_spec(0.0))
        kappa = calibrate_kappa(length, ref, target_T=target, tol=TOLERANCES["propagation"]["calibration_T"])
        out.csv("switch_calibration.csv", ("kappa", "length", "target_T"), [(kappa, length, target)])
        out.manifest.extra["kappa"] = kappa
    else:
        kappa = doc.number(sec, "kappa", prefix="switch.")
    summary = []
    if loc_sec:
        grid = _grid1d(doc, loc_sec, "switch.localized.")
        d = doc.number(loc_sec, "d", prefix="switch.localized.")
        zj = doc.number(loc_sec, "control_position", 0.0, prefix="switch.localized.")
        c6 = loc_sec.get("c6")
        v = system.v_ab
        for dc in doc.numbers(loc_sec, "delta_c", [0.0, -v / 2, -v], prefix="switch.localized."):
            cfg = PropagationConfig(grid, system.replace(delta_c=dc), kappa, control_position=zj, d=d,
                                    c6=None if c6 is None else float(c6), mode=mode)
            res = _propagate(cfg, mode, pulse)
            out.csv(f"switch_localized_dc{_tag(dc)}.csv", PropagationResult.COLUMNS, res.table())
            summary.append((0, dc, res.transmission))
    if ramp_sec:
        for dcf in doc.numbers(ramp_sec, "delta_cF", [0.0, -system.v_ab], prefix="switch.ramp."):
            cfg = PropagationConfig(ramp_grid, system, kappa, ramp=ramp_spec(dcf), mode=mode)
            res = _propagate(cfg, mode, pulse)
            out.csv(f"switch_ramp_dcF{_tag(dcf)}.csv", PropagationResult.COLUMNS, res.table())
            summary.append((1, dcf, res.transmission))
    out.csv("switch_summary.csv", ("ramp", "delta_c", "transmission"), summary)


def run_montecarlo(doc, args, out):
    system = doc.system()
    sec = doc.section("montecarlo", required=True)
    p = "montecarlo."
    seed = args.seed if args.seed is not None else int(doc.number(sec, "seed", 0, prefix=p))
    out.manifest.seed = seed
    n = int(doc.number(sec, "n_trajectories", 300, prefix=p))
    dims = int(doc.number(sec, "dims", 3, prefix=p))
    sigma = doc.number(sec, "sigma", prefix=p)
    d_list = doc.numbers(sec, "d", prefix=p)
    c6_list = doc.numbers(sec, "c6", [-system.v_ab * d**6 for d in d_list], prefix=p)
    if len(c6_list) != len(d_list):
        raise doc.error("c6 needs one entry per d", p + "c6")
    threads = args.threads

    def spec_for(d, c6, n_traj=n):
        try:
            return DelocalizationSpec(sigma, d, c6, n_traj, seed, dims)
        except ConfigError as exc:
            raise doc.error(str(exc), p + (exc.field or "sigma")) from exc

    if "d" in sec and "z_min" in sec:
        grid = _grid1d(doc, sec, p)
        kappa = doc.number(sec, "kappa", prefix=p)
        zj = doc.number(sec, "control_position", 0.0, prefix=p)
        dc_grid = doc.grid(sec, p, default_grid(system.v_ab))
        for d, c6 in zip(d_list, c6_list):
            base = PropagationConfig(grid, system, kappa, control_position=zj, d=d, c6=c6)
            loc = mc_spectrum(DelocalizationSpec(0.0, d, c6, 1, seed, dims), base, dc_grid)
            res = mc_spectrum(spec_for(d, c6), base, dc_grid, threads=threads)
            t = res.mean["transmission"]
            out.csv(f"mc_spectrum_d{_tag(d)}.csv",
                    ("delta_c", "localized_T", "mean_T", "stderr_T"),
                    np.column_stack([dc_grid, loc.mean["transmission"], t, res.stderr["transmission"]]))
            traj = res.curves["transmission"]
            out.csv(f"mc_spectrum_d{_tag(d)}_trajectories.csv",
                    ("delta_c",) + tuple(f"T_{i}" for i in range(traj.shape[0])),
                    np.column_stack([dc_grid, traj.T]))
            out.manifest.extra[f"mc_spectrum_d{_tag(d)}"] = {
                "converged": res.converged, "n_failed": res.n_failed, "sigma_over_d": sigma / d}
        if sec.get("determinism_check", False):
            d, c6 = d_list[0], c6_list[0]
            base = PropagationConfig(grid, system, kappa, control_position=zj, d=d, c6=c6)
            small = spec_for(d, c6, min(n, 8))
            a = mc_spectrum(small, base, dc_grid[::10])
            b = mc_spectrum(small, base, dc_grid[::10], threads=threads)
            same = bool(np.array_equal(a.curves["transmission"], b.curves["transmission"]))
            out.manifest.extra["determinism_check"] = same
            if not same:
                from .errors import NumericalFailure

                raise NumericalFailure("repeated Monte-Carlo run with the same seed differs")
    sw = sec.get("switch")
    if sw:
        q = p + "switch."
        grid = _grid1d(doc, sw, q)
        d = doc.number(sw, "d", prefix=q)
        c6 = doc.number(sw, "c6", -system.v_ab * d**6, prefix=q)
        kappa = doc.number(sw, "kappa", doc.number(sec, "kappa", prefix=p), prefix=q)
        spec = spec_for(d, c6)
        for dcf in doc.numbers(sw, "delta_cF", [0.0, -system.v_ab], prefix=q):
            ramp = RampSpec(doc.number(sw, "delta_c0", prefix=q), dcf, doc.number(sw, "z_q", prefix=q),
                            doc.number(sw, "z_s", prefix=q))
            cfg = PropagationConfig(grid, system.replace(v_ab=spec.v0), kappa, ramp=ramp)
            res = mc_switch(spec, cfg, threads=threads)
            ref = propagate_cw(cfg, check_linear=False)
            names = ("intensity", "rho33_A", "rho33_B", "re_rho31_B")
            cols, data = ["z"], [res.x]
            for name in names:
                cols += [f"{name}_localized", f"{name}_mean", f"{name}_stderr", f"{name}_trajectory0"]
                data += [getattr(ref, name), res.mean[name], res.stderr[name], res.curves[name][0]]
            out.csv(f"mc_switch_dcF{_tag(dcf)}.csv", cols, np.column_stack(data))


def run_multichannel(doc, args, out):
    system = doc.system()
    sec = doc.section("multichannel", required=True)
    p = "multichannel."
    v_ct = doc.number(sec, "v_ct", system.v_ab, prefix=p)
    v_tt = doc.numbers(sec, "v_tt", [0.0], prefix=p)
    r_fac = doc.number(sec, "r_fac", 1.0, prefix=p)
    grid = doc.grid(sec, p, default_grid(v_ct, int(doc.number(sec, "points", 181, prefix=p))))
    if 0.0 not in v_tt:
        v_tt = [0.0] + list(v_tt)
    for n in doc.numbers(sec, "n_targets", [1, 2, 3], prefix=p):
        if n != int(n) or n < 1:
            raise doc.error("n_targets must be positive integers", p + "n_targets")
        ring = RingGeometry(int(n), r_fac)
        spectra = multi_target_spectrum(ring, v_ct, v_tt, grid, config=system, threads=args.threads)
        for vtt, spec in spectra.items():
            out.csv(f"multichannel_n{int(n)}_vtt{_tag(vtt)}.csv", SPECTRUM_COLUMNS,
                    _spectrum_rows(spec, system.omega_p))
        base = spectra[0.0].im_rho21
        cols = ("delta_c",) + tuple(f"vtt_{_tag(v)}" for v in spectra)
        out.csv(f"multichannel_n{int(n)}_contrast.csv", cols,
                np.column_stack([grid] + [s.im_rho21 - base for s in spectra.values()]))


def run_validate(doc, args, out):
    from .validation import run_checks

    system = doc.system() if doc is not None else None
    checks = run_checks(system)
    rows = []
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} {c.comparison} {c.tolerance:g}")
        rows.append((c.value, c.tolerance, float(c.passed)))
    out.csv("validate.csv", ("value", "tolerance", "passed"), rows)
    out.manifest.extra["checks"] = [c.name for c in checks]
    failed = [c.name for c in checks if not c.passed]
    if failed:
        from .errors import NumericalFailure

        raise NumericalFailure(f"invariant checks failed: {', '.join(failed)}")


COMMANDS = {
    "spectrum": run_spectrum,
    "dressed": run_dressed,
    "switch": run_switch,
    "montecarlo": run_montecarlo,
    "multichannel": run_multichannel,
    "validate": run_validate,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _seed(text):
    val = int(text, 0)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def build_parser():
    parser = argparse.ArgumentParser(prog="fitsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML/JSON config or a previous manifest.json")
    common.add_argument("--out", default="fitsim_out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=_seed, help="RNG seed, overrides the config")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default: %(default)s)")
    common.add_argument("--mode", choices=("cw", "td"), default=None, help="propagation mode (default: cw)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "stationary spectra versus control detuning",
        "dressed": "dressed eigenvalues and resonance separation",
        "switch": "probe propagation through the photon switch",
        "montecarlo": "delocalized control excitation averages",
        "multichannel": "several target sites around one control site",
        "validate": "run the solver invariant suite",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", field="threads")
        kernels.set_num_threads(args.threads)
        doc, stored_seed, stored_mode = None, None, None
        if args.config:
            doc, stored_seed, stored_mode = load_document(args.config)
        elif DEFAULT_CONFIGS[args.command]:
            with resources.as_file(bundled_config(DEFAULT_CONFIGS[args.command])) as path:
                doc = ConfigDocument.load(path)
        if args.seed is None:
            args.seed = stored_seed
        if args.mode is None:
            args.mode = "td" if stored_mode == TD else "cw"
        manifest = RunManifest(args.command, _resolved(doc) if doc else {}, tool_version(), args.seed,
                               TD if args.mode == "td" else CW)
        out = Output(args.out, manifest)
        start = time.perf_counter()
        COMMANDS[args.command](doc, args, out)
        manifest.wall_clock_s = time.perf_counter() - start
        out.finish()
    except ConfigError as exc:
        print(f"fitsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitSimError as exc:
        print(f"fitsim: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"fitsim: wrote {len(manifest.files)} files to {out.dir} (digest {manifest.digest[:12]})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
