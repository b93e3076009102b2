"""Run configuration with unit-suffixed keys.

Every dimensional key carries its unit in the name (``I0_nA``, ``Lg_pH``);
values are converted to SI on load.  Unknown keys and malformed values raise
:class:`ConfigError` naming the dotted key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .constants import PHI0
from .errors import ConfigError
from .ftr import CpwParams, FtrParams
from .magnetics import FluxCalibration
from .squid import SquidParams

__all__ = ["RunConfig", "SCHEMA", "load_config", "parse_config"]

_NUM = "number"
_INT = "int"
_BOOL = "bool"
_STR = "str"
_LIST = "list"
_DICT = "dict"

# section -> key -> (kind, SI scale)
SCHEMA = {
    "device": {
        "I0_nA": (_NUM, 1e-9),
        "alpha": (_NUM, 1.0),
        "Lg_pH": (_NUM, 1e-12),
        "Cj1_fF": (_NUM, 1e-15),
        "Cj2_fF": (_NUM, 1e-15),
        "scaling_A": (_NUM, 1.0),
        "include_Cs": (_BOOL, None),
    },
    "cpw": {
        "L_r_pH": (_NUM, 1e-12),
        "C_r_fF": (_NUM, 1e-15),
        "length_um": (_NUM, 1e-6),
    },
    "geometry": {
        "file": (_STR, None),
        "coil_side_um": (_NUM, 1e-6),
        "squid_side_um": (_NUM, 1e-6),
        "height_um": (_NUM, 1e-6),
        "coil_width_um": (_NUM, 1e-6),
        "squid_width_um": (_NUM, 1e-6),
        "L_i_pH": (_NUM, 1e-12),
        "rtol": (_NUM, 1.0),
    },
    "calibration": {
        "I_off_uA": (_NUM, 1e-6),
        "I_Phi0_uA": (_NUM, 1e-6),
        "attenuation_db": (_NUM, 1.0),
    },
    "solver": {
        "flux_start_Phi0": (_NUM, 1.0),
        "flux_stop_Phi0": (_NUM, 1.0),
        "flux_points": (_INT, None),
        "current_start_uA": (_NUM, 1e-6),
        "current_stop_uA": (_NUM, 1e-6),
        "current_points": (_INT, None),
        "screening_mode": (_STR, None),
        "screening_sign": (_INT, None),
        "sweep": (_BOOL, None),
        "exact": (_BOOL, None),
        "tol": (_NUM, 1.0),
    },
    "io": {
        "out_dir": (_STR, None),
        "format": (_STR, None),
        "trace_format": (_STR, None),
    },
    "synth": {
        "f_r_GHz": (_NUM, 1e9),
        "Q_i": (_NUM, 1.0),
        "Q_c": (_NUM, 1.0),
        "phi_rad": (_NUM, 1.0),
        "span_MHz": (_NUM, 1e6),
        "points": (_INT, None),
        "sigma": (_NUM, 1.0),
        "tau_ns": (_NUM, 1e-9),
        "amp_slope_per_GHz": (_NUM, 1e-9),
        "phase_offset_rad": (_NUM, 1.0),
        "kappa_MHz": (_NUM, 1e6),
        "kappa_c_MHz": (_NUM, 1e6),
        "K_kHz": (_NUM, 1e3),
        "powers_dbm": (_LIST, None),
        "delta0": (_NUM, 1.0),
        "deltaTLS": (_NUM, 1.0),
        "beta_exp": (_NUM, 1.0),
        "n_star": (_NUM, 1.0),
        "n_min": (_NUM, 1.0),
        "n_max": (_NUM, 1.0),
        "freq_noise_MHz": (_NUM, 1e6),
    },
}

DEFAULT_CPW_LENGTH = 1e-3


def _convert(section, key, value):
    kind, scale = SCHEMA[section][key]
    name = f"{section}.{key}"
    if kind == _NUM:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}", name)
        return float(value) * scale
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}", name)
        return value
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}", name)
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}", name)
        return value
    if kind == _LIST:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{name} must be a list of numbers", name)
        return [float(v) for v in value]
    raise AssertionError(kind)


@dataclass
class RunConfig:
    """Validated configuration; every section maps keys to SI values."""

    sections: dict = field(default_factory=dict)
    source: str | None = None

    def get(self, dotted, default=None):
        section, key = dotted.split(".", 1)
        return self.sections.get(section, {}).get(key, default)

    def require(self, dotted):
        value = self.get(dotted)
        if value is None:
            raise ConfigError(f"missing required key {dotted}", dotted)
        return value

    def squid_params(self) -> SquidParams:
        return SquidParams(
            I0=self.require("device.I0_nA"),
            alpha=self.get("device.alpha", 0.0),
            Lg=self.get("device.Lg_pH", 0.0),
            Cj1=self.get("device.Cj1_fF", 0.0),
            Cj2=self.get("device.Cj2_fF", 0.0),
        )

    def cpw_params(self) -> CpwParams:
        return CpwParams.from_modal(
            self.require("cpw.L_r_pH"), self.require("cpw.C_r_fF"), self.get("cpw.length_um", DEFAULT_CPW_LENGTH)
        )

    def ftr_params(self) -> FtrParams:
        return FtrParams(self.cpw_params(), self.squid_params(), self.get("device.scaling_A", 1.0),
                         self.get("device.include_Cs", False))

    def calibration(self) -> FluxCalibration:
        return FluxCalibration(self.require("calibration.I_off_uA"), self.require("calibration.I_Phi0_uA"))

    def flux_grid_bounds(self):
        """``(start, stop, points)`` in Webers."""
        return (
            self.get("solver.flux_start_Phi0", -1.5) * PHI0,
            self.get("solver.flux_stop_Phi0", 1.5) * PHI0,
            self.get("solver.flux_points", 601),
        )


def parse_config(data, source=None) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping", "<root>")
    sections = {}
    for section, body in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}", str(section))
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {section} must be a mapping", section)
        out = {}
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", f"{section}.{key}")
            out[key] = _convert(section, key, value)
        sections[section] = out
    return RunConfig(sections, source)


def load_config(path) -> RunConfig:
    """Read a YAML or JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "<file>") from exc
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}", "<file>") from exc
    return parse_config(data, str(path))
