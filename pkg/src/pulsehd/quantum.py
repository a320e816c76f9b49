"""Gaussian quadrature statistics of balanced homodyne detection.

All variances are in shot-noise units: the vacuum quadrature variance is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, InconsistentDatasheetError

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
ELEMENTARY_CHARGE = 1.602176634e-19

_UNCERTAINTY_SLACK = 1e-12


def db_to_ratio(db):
    return 10.0 ** (db / 10.0)


def ratio_to_db(ratio):
    return 10.0 * math.log10(ratio)


def _check_unit_interval(name, value):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class QuadratureState:
    """Single-mode Gaussian state described by its noise ellipse.

    ``squeezing_db`` is the minimum quadrature variance in dB relative to shot
    noise (negative when squeezed), ``antisqueezing_db`` the maximum.
    Impure states are allowed as long as ``V_min * V_max >= 1``.
    """

    squeezing_db: float = 0.0
    antisqueezing_db: float = 0.0
    squeezing_angle: float = 0.0
    mean_q: float = 0.0
    mean_p: float = 0.0

    def __post_init__(self):
        for name in ("squeezing_db", "antisqueezing_db", "squeezing_angle", "mean_q", "mean_p"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.squeezing_db > self.antisqueezing_db:
            raise DomainError(
                "squeezing_db is the minimum variance and cannot exceed antisqueezing_db "
                f"({self.squeezing_db} > {self.antisqueezing_db})"
            )
        if self.v_min * self.v_max < 1.0 - _UNCERTAINTY_SLACK:
            raise DomainError(
                f"state violates the uncertainty bound: V_min*V_max = {self.v_min * self.v_max:.6g} < 1"
            )

    @property
    def v_min(self):
        return db_to_ratio(self.squeezing_db)

    @property
    def v_max(self):
        return db_to_ratio(self.antisqueezing_db)

    @classmethod
    def vacuum(cls):
        return cls()


@dataclass(frozen=True)
class LocalOscillator:
    amplitude: float
    phase: float = 0.0
    wavelength: float = 1.56e-6
    mode_index: int = 0

    def __post_init__(self):
        if not self.amplitude >= 0.0:
            raise DomainError(f"LO amplitude must be >= 0, got {self.amplitude!r}")
        if self.mode_index < 0:
            raise DomainError(f"mode_index must be >= 0, got {self.mode_index!r}")


@dataclass(frozen=True)
class EfficiencyBudget:
    eta_mod: float = 1.0
    eta_pd: float = 1.0
    eta_elec: float = 1.0

    def __post_init__(self):
        _check_unit_interval("eta_mod", self.eta_mod)
        _check_unit_interval("eta_pd", self.eta_pd)
        _check_unit_interval("eta_elec", self.eta_elec)

    @property
    def eta_total(self):
        return total_efficiency(self)


def quadrature_variance(state: QuadratureState, theta: float) -> float:
    """Variance of the quadrature measured at LO phase ``theta``."""
    c = math.cos(theta - state.squeezing_angle)
    s = math.sin(theta - state.squeezing_angle)
    return state.v_min * c * c + state.v_max * s * s


def apply_loss(variance: float, eta: float) -> float:
    """Variance after a beam splitter of transmission ``eta`` mixing in vacuum."""
    _check_unit_interval("eta", eta)
    if not variance > 0.0:
        raise DomainError(f"variance must be > 0, got {variance!r}")
    return eta * variance + (1.0 - eta)


def homodyne_difference_moments(lo: LocalOscillator, state: QuadratureState, eta: float = 1.0):
    """Mean and variance of the photon-number difference, in photon units.

    The mean field is attenuated by sqrt(eta), the variance mixed with vacuum.
    """
    if not lo.amplitude > 0.0:
        raise DomainError("LO amplitude must be > 0 for a homodyne measurement")
    _check_unit_interval("eta", eta)
    mean_quad = state.mean_q * math.cos(lo.phase) + state.mean_p * math.sin(lo.phase)
    mean = lo.amplitude * math.sqrt(eta) * mean_quad
    variance = lo.amplitude**2 * apply_loss(quadrature_variance(state, lo.phase), eta)
    return mean, variance


def unit_efficiency_responsivity(wavelength: float) -> float:
    """Responsivity (A/W) of a photodiode converting every photon."""
    return ELEMENTARY_CHARGE * wavelength / (PLANCK * LIGHT_SPEED)


def pd_quantum_efficiency(responsivity: float, wavelength: float) -> float:
    """Photon-to-electron efficiency from a datasheet responsivity in A/W."""
    if not responsivity > 0.0 or not wavelength > 0.0:
        raise DomainError("responsivity and wavelength must be > 0")
    eta = responsivity * PLANCK * LIGHT_SPEED / (wavelength * ELEMENTARY_CHARGE)
    if eta > 1.0 + 1e-12:
        raise InconsistentDatasheetError(
            f"responsivity {responsivity} A/W at {wavelength * 1e9:.1f} nm implies "
            f"quantum efficiency {eta:.3f} > 1"
        )
    return min(eta, 1.0)


def electronic_efficiency_from_snc(snc_db: float) -> float:
    """Electronic efficiency ``1 - sigma_en^2 / sigma_o^2`` for a clearance in dB."""
    if not snc_db >= 0.0:
        raise DomainError(f"shot-noise clearance must be >= 0 dB, got {snc_db!r}")
    return -math.expm1(-snc_db * math.log(10.0) / 10.0)


def snc_from_eta(eta_elec: float) -> float:
    """Inverse of :func:`electronic_efficiency_from_snc`."""
    if not (0.0 <= eta_elec < 1.0):
        raise DomainError(f"eta_elec must lie in [0, 1), got {eta_elec!r}")
    return -10.0 * math.log1p(-eta_elec) / math.log(10.0)


def total_efficiency(budget: EfficiencyBudget) -> float:
    """Overall detection efficiency; the photodiode term enters squared."""
    _check_unit_interval("eta_mod", budget.eta_mod)
    _check_unit_interval("eta_pd", budget.eta_pd)
    _check_unit_interval("eta_elec", budget.eta_elec)
    return budget.eta_mod * budget.eta_pd**2 * budget.eta_elec
