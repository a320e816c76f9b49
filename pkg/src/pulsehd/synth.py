"""Synthetic oscilloscope traces of a pulsed balanced homodyne detector.

One quadrature value is drawn per pulse slot and spread over a Gaussian
electrical pulse envelope; the photocurrent difference then runs through the
detector electronics. Random numbers come from counter-based (Philox)
substreams keyed by (seed, run, stream, block), so the output does not depend
on how blocks are distributed over threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .circuit import DetectorConfig, Waveform, convert_current, demux, steady_state, tia_sos
from .errors import ChannelError, ConfigError, DomainError, InfeasibleCalibrationError, ResampleRequiredError
from .quantum import ELEMENTARY_CHARGE, QuadratureState, pd_quantum_efficiency

SLOT_BLOCK = 1 << 16
SAMPLE_BLOCK = 1 << 20

STREAM_QUADRATURE = 0
STREAM_ELECTRONIC = 1

RUN_MAIN = 0
RUN_COMMON_MODE = 1
RUN_SHOT = 2
RUN_DARK = 3
RUN_BALANCED = 4
RUN_MODE_BASE = 16
RUN_SWEEP_BASE = 1 << 20

CHANNELS = ("pd1", "pd2", "diff_ac", "diff_dc", "diff_tia")


@dataclass(frozen=True)
class SpectralMode:
    index: int
    squeezing_db: float
    antisqueezing_db: float
    squeezing_angle: float = 0.0

    def state(self) -> QuadratureState:
        return QuadratureState(self.squeezing_db, self.antisqueezing_db, self.squeezing_angle)


@dataclass(frozen=True)
class SqueezingSpectrum:
    """Ordered supermode squeezing levels, one entry per Hermite-Gauss order."""

    modes: tuple

    def __post_init__(self):
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise ConfigError("squeezing spectrum needs at least one mode")
        idx = [m.index for m in modes]
        if any(b <= a for a, b in zip(idx, idx[1:])) or idx[0] < 0:
            raise ConfigError(f"mode indices must be unique, ascending and >= 0, got {idx}")
        for m in modes:
            m.state()  # validates the uncertainty bound
        for a, b in zip(modes, modes[1:]):
            if abs(b.squeezing_db) > abs(a.squeezing_db) or abs(b.antisqueezing_db) > abs(a.antisqueezing_db):
                warnings.warn(
                    f"squeezing magnitude grows from mode {a.index} to mode {b.index}",
                    stacklevel=3,
                )

    @classmethod
    def from_levels(cls, levels):
        return cls(tuple(SpectralMode(i, s, a) for i, (s, a) in enumerate(levels)))

    @classmethod
    def vacuum(cls):
        return cls((SpectralMode(0, 0.0, 0.0),))

    def mode(self, index) -> SpectralMode:
        for m in self.modes:
            if m.index == index:
                return m
        raise ConfigError(f"mode {index} not in spectrum (have {[m.index for m in self.modes]})")

    @property
    def indices(self):
        return [m.index for m in self.modes]


DEFAULT_SPECTRUM = SqueezingSpectrum.from_levels(
    [(-3.0, 4.0), (-2.4, 3.2), (-1.8, 2.4), (-1.2, 1.6), (-0.6, 0.8)]
)


@dataclass(frozen=True)
class PhaseScan:
    mode: str = "ramp"
    rate: float = 2.0 * math.pi / 1e-3
    offset: float = 0.0

    def __post_init__(self):
        if self.mode not in ("static", "ramp"):
            raise ConfigError(f"phase scan mode must be 'static' or 'ramp', got {self.mode!r}")

    def phases(self, n_slots, rep_rate):
        if self.mode == "static":
            return np.full(n_slots, float(self.offset))
        t = (np.arange(n_slots) + 0.5) / rep_rate
        return self.offset + self.rate * t


@dataclass(frozen=True)
class SourceConfig:
    rep_rate: float = 100e6
    sample_rate: float = 10e9
    pulse_fwhm: float = 1e-9
    pulse_delay: float = 3e-9
    lo_pulse_energy: float = 4e-3 / 100e6
    lo_wavelength: float = 1.56e-6
    phase_scan: PhaseScan = field(default_factory=PhaseScan)
    spectrum: SqueezingSpectrum = DEFAULT_SPECTRUM
    selected_mode: int = 0
    eta_mod: float = 1.0
    signal_present: bool = True

    def __post_init__(self):
        if not self.rep_rate > 0 or not self.sample_rate > 0:
            raise ConfigError("rep_rate and sample_rate must be > 0")
        if not 0 < self.pulse_fwhm < 1.0 / self.rep_rate:
            raise ConfigError("pulse_fwhm must be positive and shorter than the slot period")
        if not 0 <= self.pulse_delay < 1.0 / self.rep_rate:
            raise ConfigError("pulse_delay must lie inside the slot")
        if not self.lo_pulse_energy >= 0:
            raise ConfigError("lo_pulse_energy must be >= 0")
        if not self.lo_wavelength > 0:
            raise ConfigError("lo_wavelength must be > 0")
        if not 0 <= self.eta_mod <= 1:
            raise ConfigError("eta_mod must lie in [0, 1]")
        self.spectrum.mode(self.selected_mode)

    @property
    def samples_per_slot(self) -> int:
        ratio = self.sample_rate / self.rep_rate
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * ratio:
            raise ResampleRequiredError(
                f"sample_rate / rep_rate = {ratio:.6g} is not an integer; resample the trace"
            )
        return n

    @property
    def lo_power(self):
        return self.lo_pulse_energy * self.rep_rate

    def with_lo_power(self, watts):
        return replace(self, lo_pulse_energy=watts / self.rep_rate)

    def slot_phases(self, n_slots):
        return self.phase_scan.phases(n_slots, self.rep_rate)


@dataclass(frozen=True)
class ImperfectionConfig:
    pd_gain_mismatch: float = 0.0
    electronic_noise_rms: float | None = 0.0
    target_snc_db: float | None = None
    snc_reference_hz: float = 50e6
    rng_seed: int = 0

    def __post_init__(self):
        if not self.pd_gain_mismatch >= 0:
            raise ConfigError("pd_gain_mismatch must be >= 0")
        if (self.electronic_noise_rms is None) == (self.target_snc_db is None):
            raise ConfigError("set exactly one of electronic_noise_rms and target_snc_db")
        if self.electronic_noise_rms is not None and not self.electronic_noise_rms >= 0:
            raise ConfigError("electronic_noise_rms must be >= 0")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")


@dataclass
class TraceBuffer:
    """Multi-channel voltage record sharing one sample clock."""

    sample_rate: float
    channels: dict
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ConfigError(f"channels have unequal lengths {sorted(lengths)}")
        self.channels = {k: np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}

    @property
    def n_samples(self):
        return len(next(iter(self.channels.values()))) if self.channels else 0

    @property
    def names(self):
        return list(self.channels)

    def channel(self, name) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise ChannelError(f"channel {name!r} not in trace (have {self.names})") from None

    @property
    def saturated(self):
        return bool(self.meta.get("saturated", False))


# -- random streams --------------------------------------------------------------


def _substream(seed, run, stream, block):
    ss = np.random.SeedSequence([int(seed), int(run), int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def standard_normals(n, seed, run, stream, block_size, workers=1):
    """``n`` standard normals; block ``b`` always comes from the same substream."""
    out = np.empty(n)
    starts = range(0, n, block_size)

    def fill(start):
        stop = min(start + block_size, n)
        _substream(seed, run, stream, start // block_size).standard_normal(out=out[start:stop])

    if workers > 1 and n > block_size:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out


# -- physical scales ---------------------------------------------------------------


def pulse_template(source: SourceConfig) -> np.ndarray:
    """Gaussian pulse sampled over one slot, normalised so sum * dt == 1 (units 1/s)."""
    sps = source.samples_per_slot
    dt = 1.0 / source.sample_rate
    sigma = source.pulse_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    t = np.arange(sps) * dt
    g = np.exp(-0.5 * ((t - source.pulse_delay) / sigma) ** 2)
    total = g.sum() * dt
    if total <= 0:
        raise ConfigError("pulse envelope is not resolved by the sample clock")
    return g / total


def lo_electrons(source: SourceConfig, detector: DetectorConfig) -> float:
    """Mean photoelectrons per pulse summed over both diodes."""
    return detector.tia.photodiode.responsivity * source.lo_pulse_energy / ELEMENTARY_CHARGE


def optical_efficiency(source: SourceConfig, detector: DetectorConfig) -> float:
    """Mode matching times the squared photodiode efficiency at the LO wavelength."""
    eta_pd = pd_quantum_efficiency(detector.tia.photodiode.responsivity, source.lo_wavelength)
    return source.eta_mod * eta_pd**2


def template_response(source: SourceConfig, f) -> complex:
    """Discrete-time Fourier transform of the sampled pulse at ``f`` (1 at DC)."""
    g = pulse_template(source)
    dt = 1.0 / source.sample_rate
    n = np.arange(g.size)
    return complex(np.sum(g * dt * np.exp(-2j * np.pi * f * n * dt)))


def _slot_count(source, duration):
    n = duration * source.rep_rate
    n_slots = round(n)
    if abs(n - n_slots) > 1e-6 * max(n, 1.0):
        raise ConfigError(
            f"duration {duration} s is not a whole number of slots at {source.rep_rate} Hz"
        )
    if n_slots < 10:
        raise ConfigError("duration must cover at least 10 pulse slots")
    return n_slots


def _resolve_noise(source, detector, imperfections):
    if imperfections.electronic_noise_rms is not None:
        return float(imperfections.electronic_noise_rms)
    return calibrate_noise_to_snc(
        source,
        detector,
        imperfections.target_snc_db,
        reference_hz=imperfections.snc_reference_hz,
        mismatch=imperfections.pd_gain_mismatch,
    )


# -- synthesis ----------------------------------------------------------------


def _render(amplitudes, template):
    return (amplitudes[:, None] * template[None, :]).ravel()


def _electronics(i_diff, source, detector, noise_rms, seed, run, channels, workers, backend, mean_charge=0.0):
    """Add electronic noise, run TIA + demux, return requested channels and clip count.

    Filters start in the periodic steady state of the mean pulse train
    (``mean_charge`` per slot), as if the laser had been running for ever.
    """
    fs = source.sample_rate
    tia = detector.tia
    ss = steady_state(detector, mean_charge * pulse_template(source), fs)
    if noise_rms > 0:
        # white current noise at the TIA input; R_F * std is the output-referred rms
        noise = standard_normals(i_diff.size, seed, run, STREAM_ELECTRONIC, SAMPLE_BLOCK, workers)
        noise *= noise_rms / tia.feedback_resistance
        i_diff = i_diff + noise
    v = convert_current(Waveform(i_diff, fs), tia, backend=backend, zi=ss.tia)
    out = {}
    if "diff_tia" in channels:
        out["diff_tia"] = v.samples
    if "diff_ac" in channels or "diff_dc" in channels:
        dc, ac = demux(v, detector.lpf, detector.hpf, backend=backend, zi=(ss.lpf, ss.hpf))
        if "diff_ac" in channels:
            out["diff_ac"] = ac.samples
        if "diff_dc" in channels:
            out["diff_dc"] = dc.samples
    return out, v.n_clipped


def _check_channels(channels):
    channels = tuple(channels)
    bad = [c for c in channels if c not in CHANNELS]
    if bad:
        raise ChannelError(f"unknown channels {bad}; choose from {list(CHANNELS)}")
    return channels


def _finish(channels_out, order, source, detector, extra_meta, n_clipped, pd_clipped, noise_rms, seed):
    chans = {c: channels_out[c] for c in order if c in channels_out}
    mean_current = 0.5 * detector.tia.photodiode.responsivity * source.lo_power
    meta = {
        "rep_rate": source.rep_rate,
        "samples_per_slot": source.samples_per_slot,
        "n_clipped": int(n_clipped),
        "pd_clipped": int(pd_clipped),
        "saturated": bool(n_clipped),
        "pd_saturated": bool(mean_current > detector.tia.photodiode.saturation_current),
        "electronic_noise_rms": noise_rms,
        "rng_seed": int(seed),
    }
    meta.update(extra_meta)
    return TraceBuffer(source.sample_rate, chans, 0.0, meta)


def synthesize(
    source: SourceConfig,
    detector: DetectorConfig,
    imperfections: ImperfectionConfig,
    duration: float,
    channels=("diff_ac",),
    run=RUN_MAIN,
    workers=1,
    backend=None,
) -> TraceBuffer:
    """Balanced-detector trace of the selected squeezed mode (or vacuum).

    Per slot k the measured quadrature is drawn from
    N(0, eta*V(theta_k) + 1 - eta) with eta the optical efficiency; the diode
    currents are (N/2 -/+ sqrt(N) x_k / 2) e g(t), diode 2 scaled by (1 + eps).
    """
    channels = _check_channels(channels)
    n_slots = _slot_count(source, duration)
    noise_rms = _resolve_noise(source, detector, imperfections)
    seed = imperfections.rng_seed
    eps = imperfections.pd_gain_mismatch

    theta = source.slot_phases(n_slots)
    if source.signal_present:
        st = source.spectrum.mode(source.selected_mode).state()
        d = theta - st.squeezing_angle
        var = st.v_min * np.cos(d) ** 2 + st.v_max * np.sin(d) ** 2
        eta = optical_efficiency(source, detector)
        var = eta * var + (1.0 - eta)
    else:
        var = np.ones(n_slots)
    x = standard_normals(n_slots, seed, run, STREAM_QUADRATURE, SLOT_BLOCK, workers)
    x *= np.sqrt(var)

    n_e = lo_electrons(source, detector)
    root = math.sqrt(n_e)
    q1 = ELEMENTARY_CHARGE * (0.5 * n_e - 0.5 * root * x)
    q2 = (1.0 + eps) * ELEMENTARY_CHARGE * (0.5 * n_e + 0.5 * root * x)
    g = pulse_template(source)
    mean1 = ELEMENTARY_CHARGE * 0.5 * n_e
    out, n_clipped = _electronics(
        _render(q2 - q1, g), source, detector, noise_rms, seed, run, channels, workers, backend, eps * mean1
    )
    pd_clipped = 0
    for name, q, mean in (("pd1", q1, mean1), ("pd2", q2, (1.0 + eps) * mean1)):
        if name in channels:
            zi = steady_state(detector, mean * g, source.sample_rate).tia
            v = convert_current(Waveform(_render(q, g), source.sample_rate), detector.tia, backend=backend, zi=zi)
            out[name] = v.samples
            pd_clipped += v.n_clipped
    return _finish(
        out, channels, source, detector, {"n_slots": n_slots, "run": run}, n_clipped, pd_clipped, noise_rms, seed
    )


def synthesize_common_mode(
    source: SourceConfig,
    detector: DetectorConfig,
    imperfections: ImperfectionConfig,
    duration: float,
    which="pd1",
    channels=("diff_ac",),
    run=RUN_COMMON_MODE,
    workers=1,
    backend=None,
) -> TraceBuffer:
    """Trace with only one diode illuminated (the other arm blocked).

    The lit diode receives half the LO and carries its own shot noise.
    """
    if which not in ("pd1", "pd2"):
        raise ConfigError(f"which must be 'pd1' or 'pd2', got {which!r}")
    channels = tuple(c for c in _check_channels(channels) if c not in ("pd1", "pd2"))
    n_slots = _slot_count(source, duration)
    noise_rms = _resolve_noise(source, detector, imperfections)
    seed = imperfections.rng_seed
    eps = imperfections.pd_gain_mismatch

    half = 0.5 * lo_electrons(source, detector)
    z = standard_normals(n_slots, seed, run, STREAM_QUADRATURE, SLOT_BLOCK, workers)
    q = ELEMENTARY_CHARGE * (half + math.sqrt(half) * z)
    gain = -1.0 if which == "pd1" else 1.0 + eps
    out, n_clipped = _electronics(
        _render(gain * q, pulse_template(source)), source, detector, noise_rms, seed, run, channels, workers,
        backend, gain * ELEMENTARY_CHARGE * half,
    )
    return _finish(
        out,
        channels,
        source,
        detector,
        {"n_slots": n_slots, "run": run, "common_mode": which},
        n_clipped,
        0,
        noise_rms,
        seed,
    )


def synthesize_dark(source, detector, imperfections, duration, channels=("diff_ac",), **kw):
    """LO blocked: electronic noise only."""
    kw.setdefault("run", RUN_DARK)
    return synthesize(replace(source, lo_pulse_energy=0.0), detector, imperfections, duration, channels, **kw)


def synthesize_shot(source, detector, imperfections, duration, channels=("diff_ac",), **kw):
    """Signal blocked, LO on: the shot-noise reference run."""
    kw.setdefault("run", RUN_SHOT)
    return synthesize(replace(source, signal_present=False), detector, imperfections, duration, channels, **kw)


# -- electronic noise calibration ---------------------------------------------


def slot_kernel(source, detector, n_slots=1024, channel="diff_ac"):
    """Slot integrals of the response to one unit-charge pulse in slot 0.

    Entry j is the share of a pulse's charge that lands in slot j once the
    TIA (normalised to unit DC gain) and, for ``diff_ac``, the high-pass have
    acted. Ringing longer than a slot spreads a pulse over its neighbours.
    """
    from .circuit import filter_sos

    fs = source.sample_rate
    sps = source.samples_per_slot
    x = np.zeros(n_slots * sps)
    x[:sps] = pulse_template(source)
    y, _, _ = kernels.sos_filter(tia_sos(detector.tia, fs), x)
    if channel == "diff_ac":
        y, _, _ = kernels.sos_filter(filter_sos(detector.hpf, fs), y)
    return y.reshape(n_slots, sps).sum(axis=1) / fs


def shot_slot_variance(source, detector):
    """Predicted variance (V^2 s^2) of slot-integrated ``diff_ac`` for a vacuum signal."""
    a = slot_kernel(source, detector)
    n_e = lo_electrons(source, detector)
    return (ELEMENTARY_CHARGE * detector.tia.feedback_resistance) ** 2 * n_e * float(np.sum(a * a))


def dark_slot_variance(source, detector, noise_rms, n_taus=12):
    """Predicted variance (V^2 s^2) of slot-integrated ``diff_ac`` for the dark trace."""
    from .circuit import filter_sos

    fs = source.sample_rate
    sps = source.samples_per_slot
    n = int(n_taus * fs / (2.0 * math.pi * detector.hpf.cutoff)) + 10 * sps
    x = np.zeros(n)
    x[0] = 1.0
    h, _, _ = kernels.sos_filter(tia_sos(detector.tia, fs), x)
    h, _, _ = kernels.sos_filter(filter_sos(detector.hpf, fs), h)
    c = np.convolve(h, np.ones(sps))
    return (noise_rms / fs) ** 2 * float(np.dot(c, c))


def slot_electronic_efficiency(source, detector, noise_rms):
    """1 - dark/illuminated variance for full-slot integration of ``diff_ac``."""
    shot = shot_slot_variance(source, detector)
    return shot / (shot + dark_slot_variance(source, detector, noise_rms))


def shot_to_noise_ratio(source, detector, noise_rms, f, mismatch=0.0):
    """Predicted shot-noise / electronic-noise PSD ratio at frequency ``f``.

    Both components pass the same electronics, so only the source spectrum
    and the white-noise floor enter.
    """
    n_e = lo_electrons(source, detector)
    var_q = ELEMENTARY_CHARGE**2 * n_e * (1.0 + 0.5 * mismatch) ** 2
    g = abs(template_response(source, f)) ** 2
    shot = var_q * source.rep_rate * g
    if noise_rms == 0:
        return math.inf
    white = (noise_rms / detector.tia.feedback_resistance) ** 2 / source.sample_rate
    return shot / white


def predicted_snc_db(source, detector, noise_rms, f, mismatch=0.0):
    r = shot_to_noise_ratio(source, detector, noise_rms, f, mismatch)
    return 10.0 * math.log10(1.0 + r) if math.isfinite(r) else math.inf


def _peak_output(source, detector, amplitude_charge):
    """Largest |TIA output| for one pulse of the given charge (before noise)."""
    g = pulse_template(source)
    x = np.concatenate([g, np.zeros(4 * g.size)])
    sos = tia_sos(detector.tia, source.sample_rate)
    y, _, _ = kernels.sos_filter(sos, x)
    return detector.tia.feedback_resistance * amplitude_charge * float(np.max(np.abs(y)))


def calibrate_noise_to_snc(source, detector, target_snc_db, reference_hz=50e6, mismatch=0.0):
    """Electronic noise rms (V, output referred) giving ``target_snc_db`` at ``reference_hz``.

    Raises :class:`InfeasibleCalibrationError` when the LO-only run would
    already drive the TIA into its rails.
    """
    if target_snc_db is None or not target_snc_db > 0:
        raise DomainError(f"target SNC must be > 0 dB, got {target_snc_db!r}")
    if not 0 < reference_hz < source.sample_rate / 2:
        raise DomainError("reference frequency must lie between 0 and Nyquist")
    n_e = lo_electrons(source, detector)
    if n_e <= 0:
        raise InfeasibleCalibrationError("no LO light: shot noise is zero, any clearance is unreachable")
    per_unit = shot_to_noise_ratio(source, detector, 1.0, reference_hz, mismatch)
    sigma = math.sqrt(per_unit / math.expm1(target_snc_db * math.log(10.0) / 10.0))

    worst = ELEMENTARY_CHARGE * (0.5 * mismatch * n_e + 5.0 * math.sqrt(n_e) * (1.0 + 0.5 * mismatch))
    if _peak_output(source, detector, worst) >= detector.tia.rail_voltage:
        raise InfeasibleCalibrationError(
            f"LO power {source.lo_power * 1e3:.3g} mW saturates the TIA "
            f"(rail {detector.tia.rail_voltage} V) before the clearance can be measured"
        )
    return sigma
