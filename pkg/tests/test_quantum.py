import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsehd.errors import DomainError, InconsistentDatasheetError
from pulsehd.quantum import (
    EfficiencyBudget,
    LocalOscillator,
    QuadratureState,
    apply_loss,
    db_to_ratio,
    electronic_efficiency_from_snc,
    homodyne_difference_moments,
    pd_quantum_efficiency,
    quadrature_variance,
    ratio_to_db,
    snc_from_eta,
    total_efficiency,
    unit_efficiency_responsivity,
)

etas = st.floats(0.0, 1.0)
thetas = st.floats(-10.0, 10.0)


def state_strategy():
    return st.tuples(st.floats(-15.0, 0.0), st.floats(0.0, 15.0), st.floats(0.0, 3.0)).map(
        lambda t: QuadratureState(t[0], max(t[1], -t[0]), t[2])
    )


class TestQuadratureVariance:
    def test_vacuum_is_one_everywhere(self):
        vac = QuadratureState.vacuum()
        for theta in (0.0, 0.3, 1.0, math.pi):
            assert quadrature_variance(vac, theta) == pytest.approx(1.0)

    def test_minimum_at_squeezing_angle(self):
        s = QuadratureState(-3.0, 3.0, 0.4)
        assert quadrature_variance(s, 0.4) == pytest.approx(10 ** -0.3)
        assert quadrature_variance(s, 0.4 + math.pi / 2) == pytest.approx(10 ** 0.3)

    @given(state_strategy(), thetas)
    def test_bounded_by_extremes(self, s, theta):
        v = quadrature_variance(s, theta)
        assert s.v_min * (1 - 1e-12) <= v <= s.v_max * (1 + 1e-12)

    @given(state_strategy(), thetas)
    def test_pi_periodic(self, s, theta):
        assert quadrature_variance(s, theta) == pytest.approx(quadrature_variance(s, theta + math.pi), rel=1e-9)


class TestStateValidation:
    def test_uncertainty_violation(self):
        with pytest.raises(DomainError):
            QuadratureState(-3.0, 1.0)

    def test_impure_allowed(self):
        QuadratureState(-1.0, 5.0)

    def test_min_above_max_rejected(self):
        with pytest.raises(DomainError):
            QuadratureState(2.0, 1.0)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            QuadratureState(float("nan"), 0.0)


class TestLoss:
    def test_examples(self):
        assert apply_loss(10 ** -0.3, 0.8) == pytest.approx(0.8 * 10 ** -0.3 + 0.2)
        assert apply_loss(2.0, 0.0) == 1.0
        assert apply_loss(0.5, 1.0) == 0.5

    @given(etas)
    def test_vacuum_fixed_point(self, eta):
        assert apply_loss(1.0, eta) == pytest.approx(1.0, abs=1e-15)

    @given(st.floats(0.01, 100.0), etas, etas)
    def test_composition(self, v, a, b):
        assert apply_loss(apply_loss(v, a), b) == pytest.approx(apply_loss(v, a * b), rel=1e-12)

    @given(st.floats(0.01, 0.99), etas, etas)
    def test_squeezing_degrades_monotonically(self, v, a, b):
        lo, hi = sorted((a, b))
        assert apply_loss(v, lo) >= apply_loss(v, hi) - 1e-15

    def test_domain(self):
        with pytest.raises(DomainError):
            apply_loss(1.0, 1.2)
        with pytest.raises(DomainError):
            apply_loss(-1.0, 0.5)


class TestHomodyneMoments:
    def test_variance_scales_with_lo_photons(self):
        s = QuadratureState(-3.0, 3.0)
        _, v1 = homodyne_difference_moments(LocalOscillator(100.0), s)
        _, v2 = homodyne_difference_moments(LocalOscillator(200.0), s)
        assert v2 / v1 == pytest.approx(4.0)
        assert v1 == pytest.approx(1e4 * 10 ** -0.3)

    def test_mean_follows_displacement(self):
        s = QuadratureState(mean_q=2.0, mean_p=1.0)
        m0, _ = homodyne_difference_moments(LocalOscillator(10.0, 0.0), s)
        m1, _ = homodyne_difference_moments(LocalOscillator(10.0, math.pi / 2), s)
        assert m0 == pytest.approx(20.0)
        assert m1 == pytest.approx(10.0)
        m_lossy, _ = homodyne_difference_moments(LocalOscillator(10.0, 0.0), s, eta=0.25)
        assert m_lossy == pytest.approx(10.0)

    def test_zero_lo_rejected(self):
        with pytest.raises(DomainError):
            homodyne_difference_moments(LocalOscillator(0.0), QuadratureState())


class TestEfficiencies:
    def test_unit_responsivity(self):
        assert unit_efficiency_responsivity(1.56e-6) == pytest.approx(1.2582, rel=1e-4)

    def test_pd_efficiency(self):
        assert pd_quantum_efficiency(0.95, 1.55e-6) == pytest.approx(0.95 / 1.2501, rel=1e-3)
        assert pd_quantum_efficiency(0.58, 795e-9) == pytest.approx(0.9047, rel=1e-3)

    def test_pd_efficiency_above_one(self):
        with pytest.raises(InconsistentDatasheetError):
            pd_quantum_efficiency(1.5, 795e-9)

    @pytest.mark.parametrize("snc,eta", [(18, 0.98415), (15, 0.96838), (12, 0.93690), (7, 0.80047)])
    def test_snc_table(self, snc, eta):
        assert electronic_efficiency_from_snc(snc) == pytest.approx(eta, abs=1e-5)

    def test_zero_clearance(self):
        assert electronic_efficiency_from_snc(0.0) == 0.0

    @given(st.floats(0.0, 60.0))
    def test_snc_round_trip(self, snc):
        assert snc_from_eta(electronic_efficiency_from_snc(snc)) == pytest.approx(snc, abs=1e-9)

    def test_negative_snc(self):
        with pytest.raises(DomainError):
            electronic_efficiency_from_snc(-1.0)

    @given(etas, etas, etas)
    def test_budget_product(self, a, b, c):
        budget = EfficiencyBudget(a, b, c)
        assert budget.eta_total == a * b**2 * c
        assert total_efficiency(budget) == budget.eta_total

    def test_budget_domain(self):
        with pytest.raises(DomainError):
            EfficiencyBudget(eta_pd=1.01)

    @settings(max_examples=50)
    @given(st.floats(-40, 40))
    def test_db_helpers(self, db):
        assert ratio_to_db(db_to_ratio(db)) == pytest.approx(db, abs=1e-9)
