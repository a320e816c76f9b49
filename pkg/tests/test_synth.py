import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from pulsehd.circuit import DetectorConfig, TiaConfig
from pulsehd.analysis import slot_integrate, sliding_variance, snc_at, welch_psd
from pulsehd.errors import ChannelError, ConfigError, DomainError, InfeasibleCalibrationError, ResampleRequiredError
from pulsehd.quantum import ELEMENTARY_CHARGE, unit_efficiency_responsivity
from pulsehd.synth import (
    ImperfectionConfig,
    PhaseScan,
    SourceConfig,
    SqueezingSpectrum,
    calibrate_noise_to_snc,
    lo_electrons,
    pulse_template,
    shot_slot_variance,
    slot_kernel,
    standard_normals,
    synthesize,
    synthesize_common_mode,
    synthesize_dark,
    synthesize_shot,
)

SHORT = 1e-4  # 10^4 slots


def slot_var(trace, name="diff_ac"):
    return np.var(slot_integrate(trace.channel(name), trace.sample_rate, 1e8).values, ddof=1)


@pytest.fixture(scope="module")
def visible(catalog):
    """OPA856 + s3883 at 1.5 kOhm with the designed feedback capacitor."""
    tia = TiaConfig(catalog.opamp("OPA856"), catalog.photodiode("s3883"), 1500.0).with_designed_feedback()
    return DetectorConfig(tia)


class TestRandomStreams:
    def test_thread_count_independent(self):
        a = standard_normals(300_000, 5, 0, 0, 1 << 16, workers=1)
        b = standard_normals(300_000, 5, 0, 0, 1 << 16, workers=4)
        np.testing.assert_array_equal(a, b)

    def test_prefix_stable(self):
        a = standard_normals(200_000, 5, 0, 0, 1 << 16)
        b = standard_normals(70_000, 5, 0, 0, 1 << 16)
        np.testing.assert_array_equal(a[:70_000], b)

    def test_streams_differ(self):
        a = standard_normals(1000, 5, 0, 0, 1 << 16)
        assert not np.array_equal(a, standard_normals(1000, 5, 1, 0, 1 << 16))
        assert not np.array_equal(a, standard_normals(1000, 5, 0, 1, 1 << 16))
        assert not np.array_equal(a, standard_normals(1000, 6, 0, 0, 1 << 16))


class TestSourceConfig:
    def test_default_slotting(self, source):
        assert source.samples_per_slot == 100
        assert source.lo_power == pytest.approx(4e-3)

    def test_resample_required(self):
        with pytest.raises(ResampleRequiredError):
            SourceConfig(rep_rate=3e7).samples_per_slot

    def test_template_normalised(self, source):
        g = pulse_template(source)
        assert g.size == 100
        assert g.sum() / source.sample_rate == pytest.approx(1.0)
        assert np.argmax(g) == 30

    def test_phase_ramp_and_static(self, source):
        ph = source.slot_phases(100_000)
        assert ph[0] == pytest.approx(2 * np.pi * 0.5e-8 / 1e-3)
        assert ph[-1] - ph[0] == pytest.approx(2 * np.pi * (1 - 1e-5), rel=1e-9)
        st = replace(source, phase_scan=PhaseScan("static", offset=0.7)).slot_phases(10)
        assert np.all(st == 0.7)
        with pytest.raises(ConfigError):
            PhaseScan("sawtooth")

    def test_missing_mode(self, source):
        with pytest.raises(ConfigError):
            replace(source, selected_mode=9)

    def test_spectrum_order_warning(self):
        with pytest.warns(UserWarning):
            SqueezingSpectrum.from_levels([(-1.0, 1.0), (-3.0, 3.0)])

    def test_imperfection_exclusive(self):
        with pytest.raises(ConfigError):
            ImperfectionConfig(electronic_noise_rms=1e-3, target_snc_db=15.0)


class TestSynthesize:
    def test_shape_and_meta(self, source, telecom, quiet):
        tr = synthesize(source, telecom, quiet, SHORT, ("diff_ac", "diff_dc", "diff_tia", "pd1", "pd2"))
        assert tr.n_samples == 1_000_000
        assert tr.names == ["diff_ac", "diff_dc", "diff_tia", "pd1", "pd2"]
        assert tr.meta["n_slots"] == 10_000 and tr.meta["samples_per_slot"] == 100
        assert not tr.saturated

    def test_deterministic(self, source, telecom, noise_15db):
        imp = ImperfectionConfig(pd_gain_mismatch=1e-3, electronic_noise_rms=noise_15db, rng_seed=11)
        a = synthesize(source, telecom, imp, SHORT, ("diff_ac", "pd1"))
        b = synthesize(source, telecom, imp, SHORT, ("diff_ac", "pd1"), workers=3)
        for name in a.names:
            np.testing.assert_array_equal(a.channel(name), b.channel(name))
        c = synthesize(source, telecom, replace(imp, rng_seed=12), SHORT)
        assert not np.array_equal(a.channel("diff_ac"), c.channel("diff_ac"))

    def test_too_short(self, source, telecom, quiet):
        with pytest.raises(ConfigError):
            synthesize(source, telecom, quiet, 5e-8)

    def test_unknown_channel(self, source, telecom, quiet):
        with pytest.raises(ChannelError):
            synthesize(source, telecom, quiet, SHORT, ("diff_xx",))
        tr = synthesize(source, telecom, quiet, SHORT)
        with pytest.raises(ChannelError):
            tr.channel("pd1")

    @pytest.mark.parametrize("det", ["telecom", "visible"])
    def test_vacuum_slot_variance_is_shot_noise(self, source, det, request):
        det = request.getfixturevalue(det)
        # a 2-sigma bound: a fixed seed keeps the check deterministic
        imp = ImperfectionConfig(electronic_noise_rms=0.0, rng_seed=0)
        tr = synthesize_shot(source, det, imp, 1e-3)
        n = tr.meta["n_slots"]
        ratio = slot_var(tr) / shot_slot_variance(source, det)
        assert abs(ratio - 1.0) < 2 * math.sqrt(2 / n)

    def test_slot_kernel(self, source, telecom, visible):
        # ringing of the uncompensated TIA leaks into the next slot
        a = slot_kernel(source, telecom)
        assert a[0] > 1.05 and a[1] < -0.1
        b = slot_kernel(source, visible)
        assert abs(b[1]) < 0.05
        assert abs(a.sum()) < 0.01 and abs(b.sum()) < 0.01  # high-pass removes DC
        nominal = (ELEMENTARY_CHARGE * telecom.tia.feedback_resistance) ** 2 * lo_electrons(source, telecom)
        assert shot_slot_variance(source, telecom) / nominal == pytest.approx(np.sum(a * a))

    def test_slot_values_gaussian(self, source, telecom, quiet):
        tr = synthesize_shot(source, telecom, quiet, SHORT)
        v = slot_integrate(tr.channel("diff_ac"), tr.sample_rate, 1e8).values
        assert stats.jarque_bera(v).pvalue > 0.05

    def test_shot_variance_linear_in_energy(self, source, telecom, quiet):
        energies = np.array([1, 2, 3, 4, 5]) * 1e-11
        var = [slot_var(synthesize_shot(replace(source, lo_pulse_energy=e), telecom, quiet, SHORT)) for e in energies]
        assert stats.linregress(energies, var).rvalue ** 2 > 0.999

    def test_dark_channels(self, source, telecom, noise_15db):
        imp = ImperfectionConfig(electronic_noise_rms=noise_15db, rng_seed=3)
        tr = synthesize_dark(source, telecom, imp, SHORT, ("pd1", "pd2", "diff_tia"))
        assert np.all(tr.channel("pd1") == 0) and np.all(tr.channel("pd2") == 0)
        # white current noise through the TIA: output rms below the R_F-referred level
        rms = np.std(tr.channel("diff_tia"))
        assert 0 < rms < 2 * noise_15db

    def test_mismatch_scales_pd2(self, source, telecom):
        imp = ImperfectionConfig(pd_gain_mismatch=0.01, electronic_noise_rms=0.0)
        tr = synthesize(source.with_lo_power(1e-4), telecom, imp, SHORT, ("pd1", "pd2"))
        assert tr.meta["pd_clipped"] == 0
        assert tr.channel("pd2").sum() / tr.channel("pd1").sum() == pytest.approx(1.01, rel=1e-3)

    def test_rails_flag_saturation(self, source, telecom, quiet):
        det = replace(telecom, tia=replace(telecom.tia, rail_voltage=1e-3))
        tr = synthesize(source, det, quiet, SHORT, ("pd1", "diff_ac"))
        assert tr.saturated and tr.meta["n_clipped"] > 0
        assert tr.meta["pd_clipped"] > 0

    def test_single_diode_monitor_clips_alone(self, source, telecom, quiet):
        # at 4 mW each diode monitor exceeds the rails while the difference does not
        tr = synthesize(source, telecom, quiet, SHORT, ("pd1", "diff_ac"))
        assert tr.meta["pd_clipped"] > 0 and not tr.saturated

    def test_squeezed_ramp_brackets(self, source, telecom):
        ideal = replace(
            telecom,
            tia=replace(telecom.tia, photodiode=replace(
                telecom.tia.photodiode, responsivity=unit_efficiency_responsivity(1.56e-6), wavelength=1.56e-6)),
        )
        src = replace(source, spectrum=SqueezingSpectrum.from_levels([(-3.0, 3.0)]))
        imp = ImperfectionConfig(electronic_noise_rms=0.0, rng_seed=5)
        v = slot_integrate(synthesize(src, ideal, imp, 1e-3).channel("diff_ac"), 1e10, 1e8).values
        window = 2000
        track = sliding_variance(v, window) / shot_slot_variance(src, ideal)
        tol = 3 * math.sqrt(2 / window)
        assert track.min() == pytest.approx(10 ** -0.3, rel=tol)
        assert track.max() == pytest.approx(10 ** 0.3, rel=tol)


class TestCommonMode:
    def test_line_at_rep_rate(self, source, visible, quiet):
        src = replace(source.with_lo_power(65e-6), lo_wavelength=795e-9)
        tr = synthesize_common_mode(src, visible, quiet, SHORT)
        psd = welch_psd(tr.channel("diff_ac"), tr.sample_rate, 10_000)
        k = np.argmax(psd.psd[1:]) + 1
        assert psd.freqs[k] == pytest.approx(1e8)

    def test_uncompensated_tia_lifts_second_harmonic(self, source, telecom, quiet):
        # 15 dB of peaking near 190 MHz makes the 200 MHz line the strongest
        tr = synthesize_common_mode(source.with_lo_power(65e-6), telecom, quiet, SHORT)
        psd = welch_psd(tr.channel("diff_ac"), tr.sample_rate, 10_000)
        assert psd.freqs[np.argmax(psd.psd[1:]) + 1] == pytest.approx(2e8)

    def test_periodic(self, source, telecom):
        src = source.with_lo_power(65e-6)
        imp = ImperfectionConfig(electronic_noise_rms=0.0)
        v = synthesize_common_mode(src, telecom, imp, SHORT, channels=("diff_tia",)).channel("diff_tia")
        slots = v.reshape(-1, 100)
        mean = slots.mean(axis=0)
        assert np.argmax(np.abs(mean)) in range(30, 60)
        # shot noise is a small fraction of the periodic pulse
        assert np.std(slots[:, np.argmax(np.abs(mean))]) < 0.05 * np.max(np.abs(mean))

    def test_pd1_pd2_symmetry(self, source, telecom):
        src = source.with_lo_power(65e-6)
        imp = ImperfectionConfig(pd_gain_mismatch=2e-3, electronic_noise_rms=0.0)
        a = synthesize_common_mode(src, telecom, imp, SHORT, "pd1", ("diff_tia",)).channel("diff_tia")
        b = synthesize_common_mode(src, telecom, imp, SHORT, "pd2", ("diff_tia",)).channel("diff_tia")
        np.testing.assert_allclose(b, -1.002 * a, rtol=1e-9, atol=1e-15)

    def test_bad_diode(self, source, telecom, quiet):
        with pytest.raises(ConfigError):
            synthesize_common_mode(source, telecom, quiet, SHORT, "pd3")


class TestCalibration:
    def test_round_trip_18db(self, source, telecom):
        sigma = calibrate_noise_to_snc(source, telecom, 18.0)
        imp = ImperfectionConfig(electronic_noise_rms=sigma, rng_seed=2)
        light = welch_psd(synthesize_shot(source, telecom, imp, 1e-3).channel("diff_ac"), 1e10)
        dark = welch_psd(synthesize_dark(source, telecom, imp, 1e-3).channel("diff_ac"), 1e10)
        assert 17.7 <= snc_at(light, dark, 50e6, 5e6) <= 18.3

    def test_scaling(self, source, telecom):
        s15 = calibrate_noise_to_snc(source, telecom, 15.0)
        s18 = calibrate_noise_to_snc(source, telecom, 18.0)
        assert s18 / s15 == pytest.approx(10 ** (-3 / 20), rel=0.01)
        # exact form keeps the "+1" of the illuminated variance
        assert s18 / s15 == pytest.approx(math.sqrt((10**1.5 - 1) / (10**1.8 - 1)), rel=1e-12)

    def test_zero_target_rejected(self, source, telecom):
        with pytest.raises(DomainError):
            calibrate_noise_to_snc(source, telecom, 0.0)

    def test_infeasible(self, source, telecom):
        det = replace(telecom, tia=replace(telecom.tia, rail_voltage=1e-3))
        with pytest.raises(InfeasibleCalibrationError):
            calibrate_noise_to_snc(source, det, 15.0)

    def test_no_light_infeasible(self, source, telecom):
        with pytest.raises(InfeasibleCalibrationError):
            calibrate_noise_to_snc(replace(source, lo_pulse_energy=0.0), telecom, 15.0)
