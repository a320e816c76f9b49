"""Component catalog (op-amps and photodiodes) backed by a JSON data file."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .circuit import OpAmpSpec, PhotodiodeSpec
from .errors import ComponentNotFoundError, ConfigError

_OPAMP_KEYS = {"name", "gbp_hz", "input_capacitance_f", "min_noise_gain", "max_bandwidth_hz"}
_PD_KEYS = {
    "name",
    "responsivity_a_per_w",
    "wavelength_m",
    "capacitance_f",
    "bandwidth_hz",
    "saturation_current_a",
}


@dataclass(frozen=True)
class Catalog:
    version: int
    opamps: dict
    photodiodes: dict

    def opamp(self, name) -> OpAmpSpec:
        try:
            return self.opamps[name]
        except KeyError:
            raise ComponentNotFoundError("op-amp", name, self.opamps) from None

    def photodiode(self, name) -> PhotodiodeSpec:
        try:
            return self.photodiodes[name]
        except KeyError:
            raise ComponentNotFoundError("photodiode", name, self.photodiodes) from None


def _check_keys(entry, expected, what):
    got = set(entry)
    if got != expected:
        missing = expected - got
        extra = got - expected
        raise ConfigError(f"{what} entry {entry.get('name')!r}: missing {sorted(missing)}, unknown {sorted(extra)}")


def parse_catalog(doc: dict) -> Catalog:
    opamps = {}
    for e in doc.get("opamps", []):
        _check_keys(e, _OPAMP_KEYS, "op-amp")
        opamps[e["name"]] = OpAmpSpec(
            name=e["name"],
            gbp=float(e["gbp_hz"]),
            input_capacitance=float(e["input_capacitance_f"]),
            min_noise_gain=float(e["min_noise_gain"]),
            max_bandwidth=float(e["max_bandwidth_hz"]),
        )
    pds = {}
    for e in doc.get("photodiodes", []):
        _check_keys(e, _PD_KEYS, "photodiode")
        pds[e["name"]] = PhotodiodeSpec(
            name=e["name"],
            responsivity=float(e["responsivity_a_per_w"]),
            wavelength=float(e["wavelength_m"]),
            capacitance=float(e["capacitance_f"]),
            bandwidth=float(e["bandwidth_hz"]),
            saturation_current=float(e["saturation_current_a"]),
        )
    return Catalog(version=int(doc.get("catalog_version", 1)), opamps=opamps, photodiodes=pds)


def load_catalog(path=None) -> Catalog:
    """Load the bundled catalog, or a user-edited copy at ``path``."""
    if path is None:
        text = resources.files("pulsehd").joinpath("data/components.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read catalog {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"catalog is not valid JSON: {exc}") from exc
    return parse_catalog(doc)


def default_catalog() -> Catalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_catalog()
    return _DEFAULT


_DEFAULT = None
