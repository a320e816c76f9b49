import json

import pytest

from pulsehd.config import DEFAULTS, ExperimentConfig
from pulsehd.errors import ConfigError


def test_defaults():
    cfg = ExperimentConfig.from_dict()
    src = cfg.source_config()
    assert round(cfg.duration * src.sample_rate) == 10_000_000
    assert round(cfg.duration * src.rep_rate) == 100_000
    det = cfg.detector_config()
    assert det.tia.feedback_resistance == 1200.0 and det.tia.feedback_capacitance == 0.0
    imp = cfg.imperfection_config()
    assert imp.target_snc_db == 15.0 and imp.electronic_noise_rms is None


def test_seed_override():
    assert ExperimentConfig.from_dict().imperfection_config(seed=11).rng_seed == 11


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"bogus": {}}, "bogus"),
        ({"source": {"rep_rate": 1e8}}, "rep_rate"),
        ({"source": {"duration_s": 1.05e-8}}, "source.duration_s"),
        ({"source": {"duration_s": 5e-8}}, "source.duration_s"),
        ({"source": {"sample_rate_hz": 2.5e8}}, "source.sample_rate_hz"),
        ({"detector": {"feedback_capacitance_mode": "auto"}}, "detector.feedback_capacitance_mode"),
        ({"detector": {"feedback_resistance_ohm": -5}}, "detector.feedback_resistance_ohm"),
        ({"analysis": {"slot_window_fraction": 1.5}}, "analysis.slot_window_fraction"),
        ({"analysis": {"segment_len_samples": 10**9}}, "analysis.segment_len_samples"),
        ({"analysis": {"window": "flattop"}}, "analysis.window"),
        ({"imperfections": {"common_mode_diode": "pd3"}}, "imperfections.common_mode_diode"),
        ({"source": {"spectrum": [{"index": 0}]}}, "source.spectrum"),
    ],
)
def test_rejections_name_the_field(doc, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        ExperimentConfig.from_dict(doc)


def test_unknown_component():
    with pytest.raises(ConfigError, match="OPA999"):
        ExperimentConfig.from_dict({"detector": {"opamp": "OPA999"}})


def test_noise_setting_replaces_target():
    imp = ExperimentConfig.from_dict({"imperfections": {"electronic_noise_rms_v": 1e-4}}).imperfection_config()
    assert imp.electronic_noise_rms == 1e-4 and imp.target_snc_db is None


def test_hash_stable_and_sensitive():
    a = ExperimentConfig.from_dict()
    assert a.hash == ExperimentConfig.from_dict(json.loads(json.dumps(DEFAULTS))).hash
    assert a.hash != ExperimentConfig.from_dict({"imperfections": {"rng_seed": 1}}).hash


def test_designed_mode():
    cfg = ExperimentConfig.from_dict(
        {"detector": {"feedback_capacitance_mode": "designed", "photodiode": "s3883", "feedback_resistance_ohm": 1500}}
    )
    assert cfg.detector_config().tia.feedback_capacitance == pytest.approx(1.59e-12, rel=0.01)


def test_load(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"analysis": {"phase_bins": 32}}))
    assert ExperimentConfig.load(p)["analysis"]["phase_bins"] == 32
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
