"""System parameters and config-file loading.

All rates, Rabi frequencies and detunings are in units of Gamma, lengths in
micrometres. Config files are TOML (or JSON with the same layout); an optional
``[units]`` table allows ``frequency = "MHz"`` (cyclic) and
``c6 = "GHz_um6"``, which are converted on load.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .hilbert import (
    ONE_PHOTON,
    TWO_PHOTON,
    DriveParams,
    InteractionSpec,
    TwoPhotonDrive,
    build_hamiltonian,
    hamiltonian_parts,
    two_atom_space,
)
from .lindblad import DissipatorSpec, Liouvillian
from .units import c6_from_ghz, mhz_to_gamma

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class SystemConfig:
    """Parameters of one target plus one control site."""

    omega_p: float = 0.5
    omega: float = 5.0
    omega_c: float = 5.0
    delta_c: float = 0.0
    v_ab: float = 15.0
    gamma_21: float = 1.0
    gamma_32: float = 1e-3
    gamma_control: float = 1.0
    gamma_control_21: float = 1.0
    dephasing_target: tuple = (0.0, 0.0)
    dephasing_control: tuple = (0.0, 0.0)
    control_scheme: str = ONE_PHOTON
    two_photon: TwoPhotonDrive | None = None

    def __post_init__(self):
        if self.control_scheme not in (ONE_PHOTON, TWO_PHOTON):
            raise ConfigError(f"unknown control scheme {self.control_scheme!r}", field="control_scheme")
        if self.control_scheme == TWO_PHOTON and self.two_photon is None:
            raise ConfigError("two-photon control needs omega_c1, omega_c2 and delta", field="two_photon")
        for name in ("dephasing_target", "dephasing_control"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 2:
                raise ConfigError(f"{name} takes two rates (levels 2 and 3)", field=name)
            object.__setattr__(self, name, val)
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if isinstance(val, float) and not np.isfinite(val):
                raise ConfigError(f"{f.name} must be finite", field=f.name)
        rates = (self.gamma_21, self.gamma_32, self.gamma_control, self.gamma_control_21)
        if min(rates + self.dephasing_target + self.dephasing_control) < 0:
            raise ConfigError("rates must be non-negative", field="gamma")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def space(self, d=None):
        return two_atom_space(self.control_scheme, d)

    def drive(self):
        return DriveParams(self.omega_p, self.omega, self.omega_c, self.delta_c, self.two_photon)

    def interaction(self):
        return InteractionSpec(pair_overrides={(0, 1): self.v_ab})

    def dephasing_map(self):
        out = {}
        for role, rates in (("target", self.dephasing_target), ("control", self.dephasing_control)):
            for level, rate in zip((2, 3), rates):
                if rate:
                    out[(role, level)] = rate
        return out

    def dissipators(self, space=None):
        space = space if space is not None else self.space()
        return DissipatorSpec.standard(
            space, self.gamma_21, self.gamma_32, self.gamma_control,
            self.gamma_control_21, self.dephasing_map())

    def hamiltonian(self):
        return build_hamiltonian(self.space(), self.drive(), self.interaction())

    def liouvillian(self):
        space = self.space()
        return Liouvillian(space, build_hamiltonian(space, self.drive(), self.interaction()),
                           self.dissipators(space))

    def parts(self):
        """``(space, static, detuning_diag, unit_interaction_diag, dissipators)``.

        The interaction diagonal is normalised to ``V = 1``.
        """
        space = self.space()
        unit = InteractionSpec(pair_overrides={(0, 1): 1.0})
        static, det, vdw = hamiltonian_parts(space, self.drive(), unit)
        return space, static, det, vdw, self.dissipators(space)


# ---------------------------------------------------------------------------
# File loading
# ---------------------------------------------------------------------------

_FREQ_KEYS = {
    "omega_p", "omega", "omega_c", "delta_c", "v_ab", "gamma_21", "gamma_32",
    "gamma_control", "gamma_control_21", "omega_c1", "omega_c2", "delta",
    "delta_c0", "delta_cF", "delta_c_min", "delta_c_max", "v_ct", "v_tt",
}


def _find_line(text, key):
    if text is None:
        return None
    pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*[=:]", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class ConfigDocument:
    """Parsed config file with line-aware error reporting."""

    def __init__(self, data, text=None, path=None):
        self.data = data
        self.text = text
        self.path = path

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.parse(text, path)

    @classmethod
    def parse(cls, text, path=None):
        suffix = Path(path).suffix.lower() if path else ".toml"
        try:
            if suffix == ".json":
                data = json.loads(text)
            else:
                data = tomllib.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"invalid TOML: {exc}", line=int(m.group(1)) if m else None) from exc
        if not isinstance(data, dict):
            raise ConfigError("top level of a config must be a table")
        doc = cls(data, text, path)
        doc._convert_units()
        return doc

    def error(self, message, key):
        return ConfigError(message, field=key, line=_find_line(self.text, key.split(".")[-1]))

    def _convert_units(self):
        units = self.data.get("units", {})
        freq = str(units.get("frequency", "gamma")).lower()
        if freq not in ("gamma", "mhz"):
            raise self.error(f"unknown frequency unit {freq!r}", "units.frequency")
        if freq == "mhz":
            self._scale_freq(self.data)
        c6u = str(units.get("c6", "gamma_um6")).lower()
        if c6u not in ("gamma_um6", "ghz_um6"):
            raise self.error(f"unknown c6 unit {c6u!r}", "units.c6")
        if c6u == "ghz_um6":
            self._scale_c6(self.data)

    def _scale_freq(self, table):
        for key, val in list(table.items()):
            if isinstance(val, dict):
                if key != "units":
                    self._scale_freq(val)
            elif key in _FREQ_KEYS:
                table[key] = _map_numbers(val, mhz_to_gamma)

    def _scale_c6(self, table):
        for key, val in list(table.items()):
            if isinstance(val, dict):
                self._scale_c6(val)
            elif key == "c6":
                table[key] = _map_numbers(val, c6_from_ghz)

    def section(self, name, required=False):
        sec = self.data.get(name)
        if sec is None:
            if required:
                raise self.error(f"missing [{name}] table", name)
            return {}
        if not isinstance(sec, dict):
            raise self.error(f"[{name}] must be a table", name)
        return sec

    def number(self, table, key, default=None, prefix=""):
        if key not in table:
            if default is None:
                raise self.error(f"missing required field {prefix}{key}", prefix + key)
            return default
        val = table[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise self.error(f"{prefix}{key} must be a number, got {val!r}", prefix + key)
        return float(val)

    def numbers(self, table, key, default=None, prefix=""):
        if key not in table:
            if default is None:
                raise self.error(f"missing required field {prefix}{key}", prefix + key)
            return list(default)
        val = table[key]
        if not isinstance(val, list):
            val = [val]
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in val):
            raise self.error(f"{prefix}{key} must be a list of numbers", prefix + key)
        return [float(v) for v in val]

    def system(self, name="system"):
        sec = dict(self.section(name))
        known = {f.name for f in dataclasses.fields(SystemConfig)}
        kwargs = {}
        for key, val in sec.items():
            if key not in known:
                raise self.error(f"unknown field {name}.{key}", f"{name}.{key}")
            if key == "two_photon":
                if not isinstance(val, dict):
                    raise self.error("two_photon must be a table", f"{name}.two_photon")
                try:
                    kwargs[key] = TwoPhotonDrive(
                        self.number(val, "omega_c1", prefix="two_photon."),
                        self.number(val, "omega_c2", prefix="two_photon."),
                        self.number(val, "delta", prefix="two_photon."))
                except ConfigError as exc:
                    if exc.line is None:
                        raise self.error(str(exc), f"{name}.two_photon.delta") from exc
                    raise
            elif key == "control_scheme":
                kwargs[key] = str(val)
            elif key in ("dephasing_target", "dephasing_control"):
                kwargs[key] = tuple(self.numbers(sec, key, prefix=name + "."))
            else:
                kwargs[key] = self.number(sec, key, prefix=name + ".")
        try:
            return SystemConfig(**kwargs)
        except ConfigError as exc:
            raise self.error(str(exc), f"{name}.{exc.field or ''}") from exc

    def grid(self, table, prefix, default=None):
        """A sorted detuning grid from ``delta_c = [...]`` or min/max/points."""
        if "delta_c" in table and isinstance(table["delta_c"], list):
            vals = self.numbers(table, "delta_c", prefix=prefix)
        elif "delta_c_min" in table or "delta_c_max" in table:
            lo = self.number(table, "delta_c_min", prefix=prefix)
            hi = self.number(table, "delta_c_max", prefix=prefix)
            pts = int(self.number(table, "points", 401, prefix=prefix))
            if pts < 1:
                raise self.error("points must be >= 1", prefix + "points")
            vals = list(np.linspace(lo, hi, pts))
        elif default is not None:
            vals = list(default)
        else:
            raise self.error("no detuning grid given", prefix + "delta_c")
        if not vals:
            raise self.error("empty detuning grid", prefix + "delta_c")
        arr = np.asarray(vals, dtype=float)
        if np.any(np.diff(arr) <= 0):
            raise self.error("detuning grid must be strictly increasing", prefix + "delta_c")
        return arr


def _map_numbers(val, fn):
    if isinstance(val, list):
        return [fn(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for v in val]
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return fn(val)
    return val


def default_grid(v_ab, points=401):
    """Detuning grid spanning ``[-2V, V]``; ``V`` is floored at 5 so weak
    interactions still get a window wider than the linewidth."""
    v = max(abs(v_ab), 5.0)
    return np.linspace(-2.0 * v, v, points)
