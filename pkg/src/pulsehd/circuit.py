"""Detector electronics: photodiode pair, transimpedance amplifier, demux filters.

The TIA is modelled as a single-pole op-amp (gain-bandwidth product GBP)
closing a loop around R_F || C_F with the photodiode and op-amp input
capacitances at the inverting node. The resulting second-order transfer
function has its natural frequency at the usual cutoff estimate
``sqrt(GBP / (2 pi R_F C_tot))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, ShapeError
from .quantum import pd_quantum_efficiency


@dataclass(frozen=True)
class OpAmpSpec:
    name: str
    gbp: float
    input_capacitance: float
    min_noise_gain: float
    max_bandwidth: float

    def __post_init__(self):
        for attr in ("gbp", "input_capacitance", "min_noise_gain", "max_bandwidth"):
            if not getattr(self, attr) > 0:
                raise DomainError(f"op-amp {self.name}: {attr} must be > 0")


@dataclass(frozen=True)
class PhotodiodeSpec:
    name: str
    responsivity: float
    wavelength: float
    capacitance: float
    bandwidth: float
    saturation_current: float

    def __post_init__(self):
        if not self.capacitance > 0:
            raise DomainError(f"photodiode {self.name}: capacitance must be > 0")
        if not self.saturation_current > 0 or not self.bandwidth > 0:
            raise DomainError(f"photodiode {self.name}: bandwidth and saturation current must be > 0")
        # raises for datasheet values that imply more than one electron per photon
        pd_quantum_efficiency(self.responsivity, self.wavelength)

    @property
    def quantum_efficiency(self):
        return pd_quantum_efficiency(self.responsivity, self.wavelength)


@dataclass(frozen=True)
class TiaConfig:
    opamp: OpAmpSpec
    photodiode: PhotodiodeSpec
    feedback_resistance: float
    feedback_capacitance: float = 0.0
    rail_voltage: float = 3.3

    def __post_init__(self):
        if not self.feedback_resistance > 0:
            raise DomainError("feedback resistance must be > 0")
        if not self.feedback_capacitance >= 0:
            raise DomainError("feedback capacitance must be >= 0")
        if not self.rail_voltage > 0:
            raise DomainError("rail voltage must be > 0")

    @property
    def total_capacitance(self):
        """C_F + 2 C_PD + C_A1 seen by the loop."""
        return (
            self.feedback_capacitance
            + 2.0 * self.photodiode.capacitance
            + self.opamp.input_capacitance
        )

    def with_designed_feedback(self):
        c_f = design_feedback_capacitance(self.opamp, self.photodiode, self.feedback_resistance)
        return replace(self, feedback_capacitance=c_f)


LOW_PASS = "low-pass"
HIGH_PASS = "high-pass"


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    cutoff: float
    order: int = 1
    post_gain: float = 1.0

    def __post_init__(self):
        if self.kind not in (LOW_PASS, HIGH_PASS):
            raise ConfigError(f"filter kind must be {LOW_PASS!r} or {HIGH_PASS!r}, got {self.kind!r}")
        if not self.cutoff > 0:
            raise DomainError("filter cutoff must be > 0")
        if int(self.order) != self.order or self.order < 1:
            raise DomainError("filter order must be an integer >= 1")


@dataclass(frozen=True)
class DetectorConfig:
    """Complete detector: TIA plus the DC/AC demultiplexing filters."""

    tia: TiaConfig
    lpf: FilterSpec = field(default_factory=lambda: FilterSpec(LOW_PASS, 60e3))
    hpf: FilterSpec = field(default_factory=lambda: FilterSpec(HIGH_PASS, 100e3))


@dataclass
class Waveform:
    """Uniformly sampled single-channel signal (amperes or volts)."""

    samples: np.ndarray
    sample_rate: float
    n_clipped: int = 0

    def __len__(self):
        return len(self.samples)


# -- closed-form design equations ---------------------------------------------


def tia_cutoff(cfg: TiaConfig) -> float:
    """Cutoff estimate sqrt(GBP / (2 pi R_F (C_F + 2 C_PD + C_A1)))."""
    c_tot = cfg.total_capacitance
    if not (cfg.opamp.gbp > 0 and cfg.feedback_resistance > 0 and c_tot > 0):
        raise DomainError("GBP, R_F and the capacitance sum must all be > 0")
    return math.sqrt(cfg.opamp.gbp / (2.0 * math.pi * cfg.feedback_resistance * c_tot))


def design_feedback_capacitance(opamp: OpAmpSpec, pd: PhotodiodeSpec, r_f: float) -> float:
    """Feedback capacitance sqrt((2 C_PD + C_A1) / (pi GBP R_F)) for a flat response."""
    if not (r_f > 0 and opamp.gbp > 0 and pd.capacitance > 0 and opamp.input_capacitance > 0):
        raise DomainError("all design inputs must be > 0")
    return math.sqrt(
        (2.0 * pd.capacitance + opamp.input_capacitance) / (math.pi * opamp.gbp * r_f)
    )


def _tia_polynomial(cfg: TiaConfig):
    """Denominator coefficients (1, a1, a2) of Z(s) = R_F / (1 + a1 s + a2 s^2)."""
    omega_g = 2.0 * math.pi * cfg.opamp.gbp
    a1 = cfg.feedback_resistance * cfg.feedback_capacitance + 1.0 / omega_g
    a2 = cfg.feedback_resistance * cfg.total_capacitance / omega_g
    return a1, a2


def tia_natural_frequency(cfg: TiaConfig) -> float:
    _, a2 = _tia_polynomial(cfg)
    return 1.0 / (2.0 * math.pi * math.sqrt(a2))


def tia_damping(cfg: TiaConfig) -> float:
    a1, a2 = _tia_polynomial(cfg)
    return a1 / (2.0 * math.sqrt(a2))


def tia_transfer(cfg: TiaConfig, f):
    """Complex transimpedance Z(f) in ohms; scalar or array ``f`` (Hz)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("frequency must be >= 0")
    a1, a2 = _tia_polynomial(cfg)
    s = 2j * np.pi * f
    z = cfg.feedback_resistance / (1.0 + a1 * s + a2 * s * s)
    return z if z.ndim else complex(z)


@dataclass
class BodeResult:
    freqs: np.ndarray
    magnitude_db: np.ndarray
    f_3db: float | None
    peaking_db: float

    @property
    def resolved(self):
        return self.f_3db is not None


def bode_analysis(cfg: TiaConfig, f_grid) -> BodeResult:
    """Magnitude of Z(f) relative to DC, -3 dB crossing and peaking.

    ``f_3db`` is None when the grid does not bracket the -3 dB crossing.
    """
    f = np.asarray(f_grid, dtype=np.float64)
    if f.ndim != 1 or f.size < 16:
        raise ShapeError("frequency grid needs at least 16 points")
    if np.any(np.diff(f) <= 0):
        raise ShapeError("frequency grid must be strictly ascending")
    mag = 20.0 * np.log10(np.abs(tia_transfer(cfg, f)) / cfg.feedback_resistance)
    below = np.nonzero(mag < -3.0)[0]
    f_3db = None
    if below.size and below[0] > 0:
        k = below[0]
        m0, m1 = mag[k - 1], mag[k]
        f_3db = float(f[k - 1] + (-3.0 - m0) * (f[k] - f[k - 1]) / (m1 - m0))
    peaking = max(0.0, float(mag.max()))
    return BodeResult(freqs=f, magnitude_db=mag, f_3db=f_3db, peaking_db=peaking)


def log_grid(f_lo=1e6, f_hi=10e9, n=400):
    return np.geomspace(f_lo, f_hi, n)


# -- discrete-time realisation ---------------------------------------------


def bilinear_biquad(b, a, sample_rate, prewarp_hz):
    """Map an analog biquad to one digital section by the bilinear transform.

    ``b`` and ``a`` are (c0, c1, c2) coefficients of c0 + c1 s + c2 s^2. The
    frequency ``prewarp_hz`` is mapped exactly. Returns a row
    ``[b0, b1, b2, 1, a1, a2]``.
    """
    if not 0 < prewarp_hz < sample_rate / 2:
        raise DomainError(
            f"prewarp frequency {prewarp_hz:.4g} Hz must lie below Nyquist ({sample_rate / 2:.4g} Hz)"
        )
    w = 2.0 * math.pi * prewarp_hz
    k = w / math.tan(w / (2.0 * sample_rate))

    def mapped(c):
        c0, c1, c2 = c
        return np.array([c0 + c1 * k + c2 * k * k, 2.0 * (c0 - c2 * k * k), c0 - c1 * k + c2 * k * k])

    num = mapped(b)
    den = mapped(a)
    return np.concatenate([num / den[0], den / den[0]])


def tia_sos(cfg: TiaConfig, sample_rate: float) -> np.ndarray:
    """One biquad realising Z(f) / R_F, prewarped at the natural frequency."""
    a1, a2 = _tia_polynomial(cfg)
    return bilinear_biquad((1.0, 0.0, 0.0), (1.0, a1, a2), sample_rate, tia_natural_frequency(cfg))[None, :]


def filter_sos(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Cascade of ``order`` identical first-order sections; gain on the first."""
    tau = 1.0 / (2.0 * math.pi * spec.cutoff)
    if spec.kind == LOW_PASS:
        row = bilinear_biquad((1.0, 0.0, 0.0), (1.0, tau, 0.0), sample_rate, spec.cutoff)
    else:
        row = bilinear_biquad((0.0, tau, 0.0), (1.0, tau, 0.0), sample_rate, spec.cutoff)
    sos = np.tile(row, (spec.order, 1))
    sos[0, :3] *= spec.post_gain
    return sos


class StreamingFilter:
    """Stateful biquad cascade for chunked processing of one stream.

    Feeding consecutive chunks gives the same output as one pass over the
    concatenation. Not safe to share between streams.
    """

    def __init__(self, sos, lo=-np.inf, hi=np.inf, backend=None):
        self.sos = np.ascontiguousarray(sos, dtype=np.float64)
        self.lo = lo
        self.hi = hi
        self.backend = backend
        self.state = np.zeros((self.sos.shape[0], 2))
        self.n_clipped = 0

    def process(self, chunk):
        y, self.state, n = kernels.sos_filter(
            self.sos, chunk, self.state, self.lo, self.hi, backend=self.backend
        )
        self.n_clipped += n
        return y

    def reset(self):
        self.state[...] = 0.0
        self.n_clipped = 0


def _check_pair(a: Waveform, b: Waveform):
    if len(a) != len(b):
        raise ShapeError(f"trace lengths differ ({len(a)} vs {len(b)})")
    if a.sample_rate != b.sample_rate:
        raise ShapeError(f"sample rates differ ({a.sample_rate} vs {b.sample_rate})")


def _tia_sos_scaled(cfg: TiaConfig, sample_rate):
    sos = tia_sos(cfg, sample_rate)
    sos[:, :3] *= cfg.feedback_resistance
    return sos


def periodic_steady_state(sos, period_input):
    """Cascade state at a period boundary after ``period_input`` has repeated forever.

    One period acts on the state as z -> M z + c; the fixed point solves
    (I - M) z = c.
    """
    sos = np.asarray(sos, dtype=np.float64)
    x = np.asarray(period_input, dtype=np.float64)
    dim = 2 * sos.shape[0]
    _, c, _ = kernels.sos_filter(sos, x)
    m = np.empty((dim, dim))
    zeros = np.zeros_like(x)
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        _, zf, _ = kernels.sos_filter(sos, zeros, e.reshape(-1, 2))
        m[:, j] = zf.ravel()
    return np.linalg.solve(np.eye(dim) - m, c.ravel()).reshape(-1, 2)


@dataclass
class SteadyState:
    """Filter states matching an input that has been periodic since long before t = 0."""

    tia: np.ndarray
    lpf: np.ndarray
    hpf: np.ndarray


def steady_state(detector, period_current, sample_rate) -> SteadyState:
    """Initial states for the TIA and demux filters given one period of mean current."""
    tia = detector.tia
    sos = _tia_sos_scaled(tia, sample_rate)
    z_tia = periodic_steady_state(sos, period_current)
    v, _, _ = kernels.sos_filter(sos, period_current, z_tia, -tia.rail_voltage, tia.rail_voltage)
    return SteadyState(
        z_tia,
        periodic_steady_state(filter_sos(detector.lpf, sample_rate), v),
        periodic_steady_state(filter_sos(detector.hpf, sample_rate), v),
    )


def convert_current(i_diff: Waveform, cfg: TiaConfig, backend=None, zi=None) -> Waveform:
    """TIA output for a net input current: R_F * filtered current, clipped at the rails."""
    sos = _tia_sos_scaled(cfg, i_diff.sample_rate)
    y, _, n = kernels.sos_filter(
        sos, i_diff.samples, zi, -cfg.rail_voltage, cfg.rail_voltage, backend=backend
    )
    return Waveform(y, i_diff.sample_rate, n)


def subtract_and_convert(i1: Waveform, i2: Waveform, cfg: TiaConfig, backend=None) -> Waveform:
    """Voltage at the TIA output for photocurrents ``i1`` and ``i2`` (amperes).

    The diodes are wired in reverse, so the amplifier sees ``i2 - i1``.
    """
    _check_pair(i1, i2)
    diff = np.asarray(i2.samples, dtype=np.float64) - np.asarray(i1.samples, dtype=np.float64)
    return convert_current(Waveform(diff, i1.sample_rate), cfg, backend=backend)


def demux(v: Waveform, lpf: FilterSpec, hpf: FilterSpec, backend=None, zi=(None, None)):
    """Split the TIA output into (dc, ac) branches; ``zi`` holds optional (lpf, hpf) states."""
    if lpf.kind != LOW_PASS or hpf.kind != HIGH_PASS:
        raise ConfigError("demux needs a low-pass and a high-pass filter spec")
    dc, _, _ = kernels.sos_filter(filter_sos(lpf, v.sample_rate), v.samples, zi[0], backend=backend)
    ac, _, _ = kernels.sos_filter(filter_sos(hpf, v.sample_rate), v.samples, zi[1], backend=backend)
    return Waveform(dc, v.sample_rate), Waveform(ac, v.sample_rate)
