import pytest

from pulsehd.catalog import default_catalog
from pulsehd.circuit import DetectorConfig, TiaConfig
from pulsehd.synth import ImperfectionConfig, SourceConfig, calibrate_noise_to_snc


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def telecom(catalog):
    """OPA856 + FGA015, 1.2 kOhm, no feedback capacitor."""
    return DetectorConfig(TiaConfig(catalog.opamp("OPA856"), catalog.photodiode("FGA015"), 1200.0, 0.0))


@pytest.fixture(scope="session")
def source():
    return SourceConfig()


@pytest.fixture(scope="session")
def noise_15db(source, telecom):
    return calibrate_noise_to_snc(source, telecom, 15.0)


@pytest.fixture
def quiet():
    return ImperfectionConfig(electronic_noise_rms=0.0, rng_seed=7)
