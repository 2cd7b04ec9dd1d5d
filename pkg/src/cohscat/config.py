"""JSON run configuration: parsing, validation and the effective-config echo.

Document layout::

    {"physical": {...}, "layout": {...}, "protocol": {...}, "output": {...}}

Frequencies are angular (rad/s).  A key with an ``_hz`` suffix is read as a
cyclic frequency and multiplied by 2 pi.  ``detuning`` may be a number or
``"red"`` / ``"blue"`` for -/+ the mean trap frequency.  For two particles
``mechanical_detuning`` splits the trap frequencies symmetrically;
``trap_frequency_offset`` shifts each one individually.  Both are realised
by rescaling the tweezer powers.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .fock import SpaceLayout
from .params import DomainError, PhysicalConfig, mean_trap_frequency
from .protocol import ENGINES


class ConfigError(ValueError):
    pass


PHYSICAL_REQUIRED = ("tweezer_power", "tweezer_waist", "particle_radius", "susceptibility",
                     "mass_density", "wavelength", "cavity_length", "cavity_waist",
                     "cavity_linewidth")
PHYSICAL_OPTIONAL = ("detuning", "ground_state_population", "detector_efficiency",
                     "mechanical_detuning", "trap_frequency_offset")
FREQUENCY_KEYS = ("cavity_linewidth", "detuning", "mechanical_detuning", "trap_frequency_offset")
PER_PARTICLE = ("tweezer_power", "tweezer_waist", "particle_radius")

LAYOUT_DEFAULTS = {"cavity_cutoff": 1, "mech_cutoff": 3}
PROTOCOL_DEFAULTS = {"engine": "analytic", "horizon_s": 1e-3, "t0_over_kappa": 20.0,
                     "grid_points": None, "rtol": 1e-8, "atol": 1e-10}
OUTPUT_DEFAULTS = {"directory": "out", "format": "csv"}
SECTIONS = {"physical": None, "layout": LAYOUT_DEFAULTS, "protocol": PROTOCOL_DEFAULTS,
            "output": OUTPUT_DEFAULTS}


@dataclass(frozen=True)
class RunConfig:
    physical: PhysicalConfig
    layout: SpaceLayout
    engine: str
    horizon: float
    t0_over_kappa: float
    grid_points: int | None
    rtol: float
    atol: float
    output_directory: str
    output_format: str
    raw: dict

    def effective(self) -> dict:
        """Fully resolved document; re-parsing it reproduces this run."""
        p = self.physical
        physical = {
            "tweezer_power": list(p.tweezer_power),
            "tweezer_waist": list(p.tweezer_waist),
            "particle_radius": list(p.particle_radius),
            "susceptibility": p.susceptibility,
            "mass_density": p.mass_density,
            "wavelength": p.wavelength,
            "cavity_length": p.cavity_length,
            "cavity_waist": p.cavity_waist,
            "cavity_linewidth": p.cavity_linewidth,
            "detuning": p.detuning,
            "ground_state_population": list(p.ground_state_population),
            "detector_efficiency": p.detector_efficiency,
        }
        layout = {"cavity_cutoff": self.layout.cavity_cutoff,
                  "mech_cutoff": list(self.layout.mech_cutoffs)}
        protocol = {"engine": self.engine, "horizon_s": self.horizon,
                    "t0_over_kappa": self.t0_over_kappa, "grid_points": self.grid_points,
                    "rtol": self.rtol, "atol": self.atol}
        output = {"directory": self.output_directory, "format": self.output_format}
        return {"physical": physical, "layout": layout, "protocol": protocol, "output": output}


def bundled_config(name: str = "fig2") -> dict:
    text = resources.files("cohscat").joinpath("data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_document(path: str | Path) -> dict:
    """Read a JSON document; ``fig2`` names the bundled reference configuration."""
    p = Path(path)
    if not p.exists() and p.stem == "fig2" and p.parent == Path("."):
        return bundled_config("fig2")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    return float(value)


def _numbers(value: Any, key: str) -> list[float]:
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"{key}: empty list")
        return [_number(v, f"{key}[{i}]") for i, v in enumerate(value)]
    return [_number(value, key)]


def _canonical_physical(section: dict) -> dict:
    """Resolve ``_hz`` aliases; reject unknown and duplicated keys."""
    known = set(PHYSICAL_REQUIRED) | set(PHYSICAL_OPTIONAL)
    out: dict[str, Any] = {}
    for key, value in section.items():
        base, hz = key, False
        if key.endswith("_hz") and key[:-3] in FREQUENCY_KEYS:
            base, hz = key[:-3], True
        if base not in known:
            raise ConfigError(f"physical.{key}: unknown key")
        if base in out:
            raise ConfigError(f"physical.{key}: given twice (with and without _hz)")
        if hz:
            if isinstance(value, str):
                raise ConfigError(f"physical.{key}: symbolic values need the plain key")
            value = [2 * math.pi * v for v in _numbers(value, f"physical.{key}")] \
                if isinstance(value, list) else 2 * math.pi * _number(value, f"physical.{key}")
        out[base] = value
    for key in PHYSICAL_REQUIRED:
        if key not in out:
            raise ConfigError(f"physical.{key}: required key missing")
    return out


def build_physical(section: dict) -> PhysicalConfig:
    phys = _canonical_physical(section)
    per = {k: _numbers(phys[k], f"physical.{k}") for k in PER_PARTICLE}
    n = max(len(v) for v in per.values())
    for k, v in per.items():
        if len(v) == 1:
            per[k] = v * n
        elif len(v) != n:
            raise ConfigError(f"physical.{k}: expected {n} entries, got {len(v)}")
    pop = _numbers(phys.get("ground_state_population", 1.0), "physical.ground_state_population")
    scalars = {k: _number(phys[k], f"physical.{k}") for k in
               ("susceptibility", "mass_density", "wavelength", "cavity_length", "cavity_waist",
                "cavity_linewidth")}
    eff = _number(phys.get("detector_efficiency", 1.0), "physical.detector_efficiency")
    try:
        cfg = PhysicalConfig(per["tweezer_power"], per["tweezer_waist"], per["particle_radius"],
                             ground_state_population=pop, detector_efficiency=eff, **scalars)
        if "mechanical_detuning" in phys and "trap_frequency_offset" in phys:
            raise ConfigError("physical: give mechanical_detuning or trap_frequency_offset, not both")
        if "mechanical_detuning" in phys:
            cfg = cfg.with_mechanical_detuning(
                _number(phys["mechanical_detuning"], "physical.mechanical_detuning"))
        if "trap_frequency_offset" in phys:
            cfg = cfg.with_frequency_offsets(
                _numbers(phys["trap_frequency_offset"], "physical.trap_frequency_offset"))
        detuning = phys.get("detuning", "red")
        if detuning in ("red", "blue"):
            wbar = mean_trap_frequency(cfg)
            detuning = -wbar if detuning == "red" else wbar
        else:
            detuning = _number(detuning, "physical.detuning")
        return cfg.replace(detuning=detuning)
    except DomainError as exc:
        raise ConfigError(f"physical: {exc}") from exc


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: section must be an object")
    defaults = SECTIONS[name]
    if defaults is not None:
        for key in value:
            if key not in defaults:
                raise ConfigError(f"{name}.{key}: unknown key")
        merged = dict(defaults)
        merged.update(value)
        return merged
    return value


def parse(doc: dict) -> RunConfig:
    """Validate a configuration document and build a :class:`RunConfig`."""
    for key in doc:
        if key not in SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    if "physical" not in doc:
        raise ConfigError("physical: required section missing")
    physical = build_physical(_section(doc, "physical"))

    lay = _section(doc, "layout")
    mech = lay["mech_cutoff"]
    mech = mech if isinstance(mech, list) else [mech] * physical.n_particles
    cavity = lay["cavity_cutoff"]
    for key, values in (("layout.mech_cutoff", mech), ("layout.cavity_cutoff", [cavity])):
        if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in values):
            raise ConfigError(f"{key}: cutoffs must be integers >= 1")
    if len(mech) != physical.n_particles:
        raise ConfigError("layout.mech_cutoff: one cutoff per particle is required")
    layout = SpaceLayout(tuple(mech), cavity)

    proto = _section(doc, "protocol")
    if proto["engine"] not in ENGINES:
        raise ConfigError(f"protocol.engine: must be one of {', '.join(ENGINES)}")
    horizon = _number(proto["horizon_s"], "protocol.horizon_s")
    if horizon < 0:
        raise ConfigError("protocol.horizon_s: must be nonnegative")
    t0 = _number(proto["t0_over_kappa"], "protocol.t0_over_kappa")
    if t0 <= 0:
        raise ConfigError("protocol.t0_over_kappa: must be positive")
    points = proto["grid_points"]
    if points is not None and (not isinstance(points, int) or isinstance(points, bool) or points < 2):
        raise ConfigError("protocol.grid_points: must be null or an integer >= 2")
    rtol = _number(proto["rtol"], "protocol.rtol")
    atol = _number(proto["atol"], "protocol.atol")
    if rtol <= 0 or atol <= 0:
        raise ConfigError("protocol.rtol/atol: must be positive")

    out = _section(doc, "output")
    if out["format"] not in ("csv", "json"):
        raise ConfigError("output.format: must be csv or json")
    if not isinstance(out["directory"], str):
        raise ConfigError("output.directory: must be a string")
    return RunConfig(physical, layout, proto["engine"], horizon, t0, points, rtol, atol,
                     out["directory"], out["format"], copy.deepcopy(doc))


def load(path: str | Path) -> RunConfig:
    return parse(load_document(path))


SWEEPABLE = (PER_PARTICLE + ("susceptibility", "mass_density", "wavelength", "cavity_length",
                             "cavity_waist", "cavity_linewidth", "cavity_linewidth_hz",
                             "ground_state_population", "detector_efficiency",
                             "mechanical_detuning", "mechanical_detuning_hz"))


def with_parameter(doc: dict, parameter: str, value: float) -> dict:
    """Copy of ``doc`` with one physical scalar replaced (per-particle keys broadcast)."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"{parameter}: not a sweepable parameter "
                          f"(choose from {', '.join(SWEEPABLE)})")
    new = copy.deepcopy(doc)
    phys = new.setdefault("physical", {})
    base = parameter[:-3] if parameter.endswith("_hz") else parameter
    for alias in (base, base + "_hz"):
        phys.pop(alias, None)
    if base == "mechanical_detuning":
        phys.pop("trap_frequency_offset", None)
        phys.pop("trap_frequency_offset_hz", None)
    phys[parameter] = value
    return new
