"""JSON experiment configuration.

Four sections: ``source``, ``detector``, ``imperfections``, ``analysis``.
Physical quantities carry their SI unit in the key name. Unknown keys are
rejected. The defaults describe the 1560 nm / 100 MHz telecom setup sampled at
10 GS/s for 1 ms with the OPA856 + FGA015 detector (R_F = 1.2 kOhm, no C_F).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .catalog import load_catalog
from .circuit import HIGH_PASS, LOW_PASS, DetectorConfig, FilterSpec, TiaConfig
from .errors import ConfigError, PulseHDError
from .synth import ImperfectionConfig, PhaseScan, SourceConfig, SpectralMode, SqueezingSpectrum

DEFAULTS = {
    "source": {
        "rep_rate_hz": 1e8,
        "sample_rate_hz": 1e10,
        "duration_s": 1e-3,
        "pulse_fwhm_s": 1e-9,
        "pulse_delay_s": 3e-9,
        "lo_pulse_energy_j": 4e-11,
        "lo_wavelength_m": 1.56e-6,
        "phase_scan_mode": "ramp",
        "phase_scan_rate_rad_per_s": 2 * math.pi / 1e-3,
        "phase_offset_rad": 0.0,
        "eta_mod": 1.0,
        "selected_mode": 0,
        "spectrum": [
            {"index": 0, "squeezing_db": -3.0, "antisqueezing_db": 4.0, "squeezing_angle_rad": 0.0},
            {"index": 1, "squeezing_db": -2.4, "antisqueezing_db": 3.2, "squeezing_angle_rad": 0.0},
            {"index": 2, "squeezing_db": -1.8, "antisqueezing_db": 2.4, "squeezing_angle_rad": 0.0},
            {"index": 3, "squeezing_db": -1.2, "antisqueezing_db": 1.6, "squeezing_angle_rad": 0.0},
            {"index": 4, "squeezing_db": -0.6, "antisqueezing_db": 0.8, "squeezing_angle_rad": 0.0},
        ],
        "channels": ["diff_ac", "diff_dc"],
    },
    "detector": {
        "catalog_path": None,
        "opamp": "OPA856",
        "photodiode": "FGA015",
        "feedback_resistance_ohm": 1200.0,
        "feedback_capacitance_mode": "override",
        "feedback_capacitance_f": 0.0,
        "rail_voltage_v": 3.3,
        "lpf_cutoff_hz": 60e3,
        "lpf_order": 1,
        "hpf_cutoff_hz": 100e3,
        "hpf_order": 1,
        "hpf_post_gain": 1.0,
    },
    "imperfections": {
        "pd_gain_mismatch": 10 ** (-61 / 20),
        "electronic_noise_rms_v": None,
        "target_snc_db": 15.0,
        "snc_reference_hz": 50e6,
        "common_mode_diode": "pd1",
        "common_mode_lo_power_w": 6.5e-5,
        "rng_seed": 0,
    },
    "analysis": {
        "segment_len_samples": 10000,
        "overlap_fraction": 0.5,
        "window": "hann",
        "slot_window_fraction": 1.0,
        "slot_offset_s": 0.0,
        "phase_bins": 64,
        "analysis_freq_hz": 60e6,
        "analysis_span_hz": 5e6,
        "snc_span_hz": 5e6,
    },
}

_SPECTRUM_KEYS = {"index", "squeezing_db", "antisqueezing_db", "squeezing_angle_rad"}


def _merge(user: dict) -> dict:
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    merged = copy.deepcopy(DEFAULTS)
    for section, values in user.items():
        if not isinstance(values, dict):
            raise ConfigError(f"{section}: must be an object")
        bad = set(values) - set(DEFAULTS[section])
        if bad:
            raise ConfigError(f"{section}: unknown keys {sorted(bad)}")
        merged[section].update(values)
    imp = user.get("imperfections", {})
    if "electronic_noise_rms_v" in imp and imp["electronic_noise_rms_v"] is not None and "target_snc_db" not in imp:
        merged["imperfections"]["target_snc_db"] = None
    return merged


def _field(section, key, fn):
    try:
        return fn()
    except PulseHDError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, doc=None):
        cfg = cls(_merge(doc or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls.from_dict({})
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def __getitem__(self, section):
        return self.data[section]

    # -- typed views ---------------------------------------------------------

    @property
    def duration(self):
        return float(self.data["source"]["duration_s"])

    @property
    def common_mode_source(self):
        """Source used for the CMRR pair (``cm`` and ``bal`` channels)."""
        src = self.source_config()
        power = self.data["imperfections"]["common_mode_lo_power_w"]
        return src if power is None else src.with_lo_power(float(power))

    @property
    def channels(self):
        return list(self.data["source"]["channels"])

    def spectrum(self):
        modes = []
        for i, m in enumerate(self.data["source"]["spectrum"]):
            if not isinstance(m, dict) or set(m) - _SPECTRUM_KEYS or not {"index", "squeezing_db", "antisqueezing_db"} <= set(m):
                raise ConfigError(f"source.spectrum[{i}]: needs index, squeezing_db, antisqueezing_db[, squeezing_angle_rad]")
            modes.append(
                SpectralMode(int(m["index"]), float(m["squeezing_db"]), float(m["antisqueezing_db"]),
                             float(m.get("squeezing_angle_rad", 0.0)))
            )
        return _field("source", "spectrum", lambda: SqueezingSpectrum(tuple(modes)))

    def source_config(self) -> SourceConfig:
        s = self.data["source"]
        scan = _field(
            "source", "phase_scan_mode",
            lambda: PhaseScan(s["phase_scan_mode"], float(s["phase_scan_rate_rad_per_s"]), float(s["phase_offset_rad"])),
        )
        return _field(
            "source", "*",
            lambda: SourceConfig(
                rep_rate=float(s["rep_rate_hz"]),
                sample_rate=float(s["sample_rate_hz"]),
                pulse_fwhm=float(s["pulse_fwhm_s"]),
                pulse_delay=float(s["pulse_delay_s"]),
                lo_pulse_energy=float(s["lo_pulse_energy_j"]),
                lo_wavelength=float(s["lo_wavelength_m"]),
                phase_scan=scan,
                spectrum=self.spectrum(),
                selected_mode=int(s["selected_mode"]),
                eta_mod=float(s["eta_mod"]),
            ),
        )

    def catalog(self):
        return load_catalog(self.data["detector"]["catalog_path"])

    def detector_config(self, catalog=None) -> DetectorConfig:
        d = self.data["detector"]
        catalog = catalog or self.catalog()
        opamp = catalog.opamp(d["opamp"])
        pd = catalog.photodiode(d["photodiode"])
        tia = _field(
            "detector", "feedback_resistance_ohm",
            lambda: TiaConfig(opamp, pd, float(d["feedback_resistance_ohm"]), float(d["feedback_capacitance_f"]),
                              float(d["rail_voltage_v"])),
        )
        mode = d["feedback_capacitance_mode"]
        if mode == "designed":
            tia = tia.with_designed_feedback()
        elif mode != "override":
            raise ConfigError("detector.feedback_capacitance_mode: must be 'designed' or 'override'")
        lpf = _field("detector", "lpf_cutoff_hz", lambda: FilterSpec(LOW_PASS, float(d["lpf_cutoff_hz"]), int(d["lpf_order"])))
        hpf = _field(
            "detector", "hpf_cutoff_hz",
            lambda: FilterSpec(HIGH_PASS, float(d["hpf_cutoff_hz"]), int(d["hpf_order"]), float(d["hpf_post_gain"])),
        )
        return DetectorConfig(tia, lpf, hpf)

    def imperfection_config(self, seed=None) -> ImperfectionConfig:
        i = self.data["imperfections"]
        noise = i["electronic_noise_rms_v"]
        snc = i["target_snc_db"]
        return _field(
            "imperfections", "*",
            lambda: ImperfectionConfig(
                pd_gain_mismatch=float(i["pd_gain_mismatch"]),
                electronic_noise_rms=None if noise is None else float(noise),
                target_snc_db=None if snc is None else float(snc),
                snc_reference_hz=float(i["snc_reference_hz"]),
                rng_seed=int(i["rng_seed"] if seed is None else seed),
            ),
        )

    def validate(self):
        """Check every section; raises ConfigError naming the offending field."""
        src = self.source_config()
        self.detector_config()
        self.imperfection_config()
        if self.data["imperfections"]["common_mode_diode"] not in ("pd1", "pd2"):
            raise ConfigError("imperfections.common_mode_diode: must be 'pd1' or 'pd2'")
        cm_power = self.data["imperfections"]["common_mode_lo_power_w"]
        if cm_power is not None and not float(cm_power) > 0:
            raise ConfigError("imperfections.common_mode_lo_power_w: must be > 0 or null")
        duration = self.duration
        n = duration * src.rep_rate
        if not duration > 0 or abs(n - round(n)) > 1e-6 * max(n, 1):
            raise ConfigError(
                f"source.duration_s: {duration} s is not a whole number of {1 / src.rep_rate:.3g} s slots"
            )
        if round(n) < 10:
            raise ConfigError("source.duration_s: must cover at least 10 slots")
        _field("source", "sample_rate_hz", lambda: src.samples_per_slot)
        a = self.data["analysis"]
        w = a["slot_window_fraction"]
        if not 0 < w <= 1:
            raise ConfigError("analysis.slot_window_fraction: must lie in (0, 1]")
        off = float(a["slot_offset_s"])
        if off < 0 or off + w / src.rep_rate > duration:
            raise ConfigError("analysis.slot_offset_s: integration window does not fit in the trace duration")
        n_samples = round(duration * src.sample_rate)
        if not 2 <= int(a["segment_len_samples"]) <= n_samples:
            raise ConfigError(f"analysis.segment_len_samples: must lie in [2, {n_samples}]")
        if not 0 <= a["overlap_fraction"] <= 0.9:
            raise ConfigError("analysis.overlap_fraction: must lie in [0, 0.9]")
        if a["window"] != "hann":
            raise ConfigError("analysis.window: only 'hann' is supported")
        if int(a["phase_bins"]) < 2:
            raise ConfigError("analysis.phase_bins: must be >= 2")
        return self
