"""Figures of merit recovered from traces: PSD, SNC, CMRR, efficiency, squeezing."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import CalibrationError, DomainError, ResampleRequiredError, ShapeError

LOAD_OHMS = 50.0
DBM_FLOOR = -300.0


# -- spectrum analyser emulation -----------------------------------------------


@dataclass
class PsdEstimate:
    freqs: np.ndarray
    power_dbm: np.ndarray
    rbw: float
    segment_count: int
    psd: np.ndarray  # one-sided, V^2/Hz

    def band_mask(self, f_lo, f_hi):
        mask = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        if not mask.any():
            raise DomainError(f"no PSD bins between {f_lo:.4g} and {f_hi:.4g} Hz")
        return mask

    def band_power_mw(self, center, span):
        """Mean per-bin power (mW at the RBW) over ``center +/- span/2``."""
        mask = self.band_mask(center - span / 2, center + span / 2)
        return float(np.mean(self.psd[mask] * self.rbw / LOAD_OHMS * 1e3))

    def band_variance(self, f_lo, f_hi):
        """Integrated PSD (V^2) over a band."""
        mask = self.band_mask(f_lo, f_hi)
        df = self.freqs[1] - self.freqs[0]
        return float(np.sum(self.psd[mask]) * df)


def psd_to_dbm(psd, rbw):
    p_mw = np.asarray(psd) * rbw / LOAD_OHMS * 1e3
    with np.errstate(divide="ignore"):
        dbm = 10.0 * np.log10(p_mw)
    return np.maximum(dbm, DBM_FLOOR)


def mw_to_dbm(p_mw):
    return 10.0 * math.log10(p_mw) if p_mw > 0 else DBM_FLOOR


def welch_psd(samples, sample_rate, segment_len=10_000, overlap=0.5, window="hann", chunk_segments=256):
    """One-sided Welch PSD of a voltage record, reported in dBm into 50 ohm.

    Segments are accumulated in a fixed order, ``chunk_segments`` at a time,
    so memory stays bounded for long records. ``rbw`` is the equivalent noise
    bandwidth of the window; a bin-centred tone of amplitude A reads
    A^2 / 2 / 50 ohm.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ShapeError("welch_psd needs a non-empty 1-D trace")
    segment_len = int(segment_len)
    if not 2 <= segment_len <= x.size:
        raise ShapeError(f"segment_len {segment_len} must lie in [2, {x.size}]")
    if not 0.0 <= overlap <= 0.9:
        raise DomainError("overlap must lie in [0, 0.9]")
    if window != "hann":
        raise DomainError(f"unsupported window {window!r}")
    w = np.hanning(segment_len + 1)[:-1]  # periodic Hann
    step = segment_len - int(round(overlap * segment_len))
    n_seg = 1 + (x.size - segment_len) // step
    scale = 1.0 / (sample_rate * np.sum(w * w))

    acc = np.zeros(segment_len // 2 + 1)
    stride = x.strides[0]
    for first in range(0, n_seg, chunk_segments):
        count = min(chunk_segments, n_seg - first)
        view = np.lib.stride_tricks.as_strided(
            x[first * step :], shape=(count, segment_len), strides=(step * stride, stride), writeable=False
        )
        spec = np.fft.rfft(view * w, axis=1)
        acc += np.sum(spec.real**2 + spec.imag**2, axis=0)
    psd = acc * scale / n_seg
    if segment_len % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    freqs = np.fft.rfftfreq(segment_len, 1.0 / sample_rate)
    rbw = sample_rate * np.sum(w * w) / np.sum(w) ** 2
    return PsdEstimate(freqs, psd_to_dbm(psd, rbw), float(rbw), int(n_seg), psd)


def _check_grids(a: PsdEstimate, b: PsdEstimate):
    if a.freqs.shape != b.freqs.shape or not np.allclose(a.freqs, b.freqs, rtol=1e-12, atol=0):
        raise ShapeError("PSD estimates are on different frequency grids")


def snc_spectrum(psd_light: PsdEstimate, psd_dark: PsdEstimate) -> np.ndarray:
    """Shot-noise clearance per bin: illuminated minus dark level, in dB."""
    _check_grids(psd_light, psd_dark)
    return psd_light.power_dbm - psd_dark.power_dbm


def snc_at(psd_light: PsdEstimate, psd_dark: PsdEstimate, center, span):
    """Clearance (dB) from band-averaged linear powers around ``center``."""
    _check_grids(psd_light, psd_dark)
    return 10.0 * math.log10(psd_light.band_power_mw(center, span) / psd_dark.band_power_mw(center, span))


def cmrr(psd_cm: PsdEstimate, psd_diff: PsdEstimate, f_rep: float) -> float:
    """Peak common-mode level minus peak difference level near ``f_rep`` (dB)."""
    _check_grids(psd_cm, psd_diff)
    f = psd_cm.freqs
    if not f[0] <= f_rep <= f[-1]:
        raise DomainError(f"f_rep {f_rep:.4g} Hz outside the PSD grid")
    half = 2.0 * psd_cm.rbw
    mask = (f >= f_rep - half) & (f <= f_rep + half)
    if not mask.any():
        mask = np.abs(f - f_rep) == np.min(np.abs(f - f_rep))
    return float(np.max(psd_cm.power_dbm[mask]) - np.max(psd_diff.power_dbm[mask]))


def electronic_efficiency(dark_variance: float, light_variance: float) -> float:
    """1 - sigma_en^2 / sigma_o^2 from measured dark and illuminated variances."""
    if not dark_variance >= 0 or not light_variance > 0:
        raise DomainError("variances must be non-negative (illuminated > 0)")
    if light_variance < dark_variance:
        warnings.warn("illuminated variance below the dark level: noise dominated, reporting 0", stacklevel=2)
        return 0.0
    return 1.0 - dark_variance / light_variance


def electronic_efficiency_from_psd(psd_dark: PsdEstimate, psd_light: PsdEstimate, f_lo, f_hi):
    _check_grids(psd_dark, psd_light)
    return electronic_efficiency(psd_dark.band_variance(f_lo, f_hi), psd_light.band_variance(f_lo, f_hi))


# -- pulse-resolved quadratures ---------------------------------------------------


@dataclass
class QuadratureSeries:
    values: np.ndarray
    slot_period: float
    phases: np.ndarray | None = None
    calibration: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.phases is not None:
            self.phases = np.asarray(self.phases, dtype=np.float64)
            if self.phases.shape != self.values.shape:
                raise ShapeError("phases and values must have the same length")
        if self.calibration is not None and not self.calibration > 0:
            raise CalibrationError("calibration variance must be > 0")

    def __len__(self):
        return self.values.size

    def with_phases(self, phases):
        return replace(self, phases=np.asarray(phases, dtype=np.float64)[: self.values.size])

    def shot_variance(self):
        if self.calibration is not None:
            return self.calibration
        return float(np.var(self.values, ddof=1))


def _whole_samples(value, what):
    n = round(value)
    if abs(value - n) > 1e-6 * max(1.0, abs(value)):
        raise ResampleRequiredError(f"{what} is {value:.6g} samples, not an integer; resample the trace")
    return int(n)


def slot_integrate(samples, sample_rate, f_rep, window=1.0, offset=0.0, backend=None) -> QuadratureSeries:
    """Integrate the trace over one window per pulse slot (V*s per slot).

    Slot k integrates samples ``[k*T + offset, k*T + offset + window*T)``;
    ``window <= 1`` keeps consecutive pulses separate.
    """
    x = np.asarray(samples, dtype=np.float64)
    sps = _whole_samples(sample_rate / f_rep, "slot period")
    if not 0.0 < window <= 1.0:
        raise DomainError("window must lie in (0, 1]")
    start = _whole_samples(offset * sample_rate, "offset")
    if start < 0:
        raise DomainError("offset must be >= 0")
    width = max(1, int(round(window * sps)))
    if x.size < start + width:
        raise ShapeError("trace shorter than one integration window")
    n_slots = (x.size - start - width) // sps + 1
    sums = kernels.slot_sums(x, start, sps, width, n_slots, backend=backend)
    return QuadratureSeries(sums / sample_rate, slot_period=1.0 / f_rep)


@dataclass
class SqueezingResult:
    mode_index: int
    squeezing_db: float
    antisqueezing_db: float
    n_slots: int
    statistical_uncertainty_db: float
    method: str = "fit"
    min_bin_db: float | None = None
    max_bin_db: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def squeezed(self):
        return self.squeezing_db < 0.0


def variance_uncertainty_db(n_eff):
    return 10.0 * math.log10(1.0 + math.sqrt(2.0 / n_eff))


def phase_binned_variance(values, phases, n_bins, harmonics=False):
    """Per-bin (mean phase, variance, count) for bins over [0, 2 pi).

    With ``harmonics`` the per-bin means of cos 2 phi and sin 2 phi are
    appended, which lets a fit model the averaging across a bin exactly.
    """
    phi = np.mod(phases, 2.0 * np.pi)
    idx = np.minimum((phi / (2.0 * np.pi) * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    s1 = np.bincount(idx, weights=values, minlength=n_bins)
    s2 = np.bincount(idx, weights=values * values, minlength=n_bins)
    # circular mean phase per bin
    c = np.bincount(idx, weights=np.cos(phi), minlength=n_bins)
    s = np.bincount(idx, weights=np.sin(phi), minlength=n_bins)
    ok = counts >= 2
    n = counts[ok].astype(np.float64)
    mean = s1[ok] / n
    var = (s2[ok] - n * mean * mean) / (n - 1.0)
    centers = np.arctan2(s[ok], c[ok])
    if not harmonics:
        return centers, var, counts[ok]
    c2 = np.bincount(idx, weights=np.cos(2 * phi), minlength=n_bins)[ok] / n
    s2 = np.bincount(idx, weights=np.sin(2 * phi), minlength=n_bins)[ok] / n
    return centers, var, counts[ok], c2, s2


def sliding_variance(values, window, step=None):
    step = step or max(1, window // 2)
    starts = np.arange(0, values.size - window + 1, step)
    return np.array([np.var(values[a : a + window], ddof=1) for a in starts])


def squeezing_from_series(series: QuadratureSeries, shot_ref: QuadratureSeries, mode_index=0, n_bins=64):
    """Squeezing and anti-squeezing (dB re shot noise) of one mode.

    With per-slot LO phases, slots are binned in phase and the ellipse
    V(theta) = c0 + c1 cos 2 theta + c2 sin 2 theta is least-squares fitted to
    the bin variances; the extremes c0 -/+ hypot(c1, c2) are reported. The raw
    extreme bins are kept in ``min_bin_db`` / ``max_bin_db``. A static phase
    gives one variance (reported in both fields). Without phases, the extremes
    of a sliding-window variance track are used.
    """
    if len(series) < 1000 or len(shot_ref) < 1000:
        raise ShapeError("squeezing extraction needs at least 1000 slots in each series")
    shot = shot_ref.shot_variance()
    if not shot > 0:
        raise CalibrationError("shot-noise reference has zero variance")
    v = series.values
    n = v.size

    if series.phases is None:
        window = max(100, n // n_bins)
        track = sliding_variance(v, window) / shot
        lo, hi = float(track.min()), float(track.max())
        return SqueezingResult(
            mode_index, 10 * math.log10(lo), 10 * math.log10(hi), n, variance_uncertainty_db(window), "sliding",
            10 * math.log10(lo), 10 * math.log10(hi),
        )

    centers, var, counts, c2, s2 = phase_binned_variance(v, series.phases, n_bins, harmonics=True)
    var = var / shot
    if centers.size == 1:
        level = 10 * math.log10(float(np.var(v, ddof=1)) / shot)
        return SqueezingResult(mode_index, level, level, n, variance_uncertainty_db(n), "static", level, level)

    min_bin_db = 10 * math.log10(var.min())
    max_bin_db = 10 * math.log10(var.max())
    n_eff = n / centers.size
    two = np.exp(2j * centers)
    covers = centers.size >= 8 and abs(np.mean(two)) < 0.5
    if covers:
        a = np.column_stack([np.ones_like(centers), c2, s2])
        # a bin variance scatters in proportion to its level, so reweight by
        # 1 / V_fit after a first pass; otherwise the anti-squeezed bins
        # dominate and the minimum gets noisy
        w = np.sqrt(counts - 1.0)
        for _ in range(3):
            coef, *_ = np.linalg.lstsq(a * w[:, None], var * w, rcond=None)
            fitted = a @ coef
            if np.any(fitted <= 0):
                break
            w = np.sqrt(counts - 1.0) / fitted
        r = math.hypot(coef[1], coef[2])
        v_min, v_max = coef[0] - r, coef[0] + r
        if v_min > 0:
            return SqueezingResult(
                mode_index, 10 * math.log10(v_min), 10 * math.log10(v_max), n, variance_uncertainty_db(n_eff),
                "fit", min_bin_db, max_bin_db,
                {"squeezing_angle": 0.5 * math.atan2(-coef[2], -coef[1])},
            )
    return SqueezingResult(
        mode_index, min_bin_db, max_bin_db, n, variance_uncertainty_db(n_eff), "bins", min_bin_db, max_bin_db
    )


# -- saturation sweep --------------------------------------------------------------


@dataclass
class LinearitySweep:
    powers: np.ndarray
    noise_dbm: np.ndarray
    noise_mw: np.ndarray
    saturated: np.ndarray
    slope_mw_per_w: float | None
    intercept_mw: float | None
    r_squared: float | None
    db_per_doubling: float | None
    knee: float | None
    all_saturated: bool = False


def _linear_fit(x, y):
    a = np.column_stack([np.ones_like(x), x])
    (c0, c1), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (c0 + c1 * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(c0), float(c1), r2


def fit_linearity(powers, noise_mw, saturated=None, knee_db=1.0):
    """Linear (mW-domain) fit with progressive knee detection.

    Point k is the knee when it is flagged as clipped or deviates by more than
    ``knee_db`` from the line fitted to all points before it.
    """
    p = np.asarray(powers, dtype=np.float64)
    y = np.asarray(noise_mw, dtype=np.float64)
    sat = np.zeros(p.size, bool) if saturated is None else np.asarray(saturated, bool)
    if p.size < 4 or np.any(np.diff(p) <= 0):
        raise DomainError("linearity sweep needs at least 4 ascending powers")
    dbm = np.array([mw_to_dbm(v) for v in y])
    if sat.all():
        return LinearitySweep(p, dbm, y, sat, None, None, None, None, float(p[0]), True)
    if sat[:2].any():
        # fewer than two unclipped points below the knee: nothing to fit
        return LinearitySweep(p, dbm, y, sat, None, None, None, None, float(p[int(np.argmax(sat))]), False)
    end = p.size
    for k in range(2, p.size):
        if sat[k]:
            end = k
            break
        c0, c1, _ = _linear_fit(p[:k], y[:k])
        pred = c0 + c1 * p[k]
        if pred <= 0 or abs(10 * math.log10(y[k] / pred)) > knee_db:
            end = k
            break
    knee = float(p[end]) if end < p.size else None
    c0, c1, r2 = _linear_fit(p[:end], y[:end])

    dark = y[0] if p[0] == 0 else max(c0, 0.0)
    lit = (p[:end] > 0) & (y[:end] - dark > 0)
    db_doubling = None
    if lit.sum() >= 2:
        slope, _ = np.polyfit(np.log2(p[:end][lit]), 10 * np.log10(y[:end][lit] - dark), 1)
        db_doubling = float(slope)
    return LinearitySweep(p, dbm, y, sat, c1, c0, r2, db_doubling, knee, False)


def linearity_sweep(
    source, detector, imperfections, power_grid, analysis_freq=60e6, span=5e6, duration=1e-4,
    segment_len=10_000, channel="diff_ac", workers=1, backend=None,
):
    """Noise power around ``analysis_freq`` versus LO power (signal blocked).

    Electronic noise is resolved once at the configured LO power and then
    held fixed across the grid. Each point draws from its own substream.
    """
    from .synth import RUN_SWEEP_BASE, ImperfectionConfig, _resolve_noise, synthesize_shot

    noise_rms = _resolve_noise(source, detector, imperfections)
    imp = ImperfectionConfig(
        pd_gain_mismatch=imperfections.pd_gain_mismatch,
        electronic_noise_rms=noise_rms,
        rng_seed=imperfections.rng_seed,
    )
    noise_mw, sat = [], []
    for i, p in enumerate(power_grid):
        tr = synthesize_shot(
            source.with_lo_power(p), detector, imp, duration, (channel,),
            run=RUN_SWEEP_BASE + i, workers=workers, backend=backend,
        )
        psd = welch_psd(tr.channel(channel), tr.sample_rate, segment_len)
        noise_mw.append(psd.band_power_mw(analysis_freq, span))
        sat.append(tr.saturated)
    return fit_linearity(power_grid, noise_mw, sat)
