import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from bvmlab.basis import BasisKind, BasisSpec, CoefficientField
from bvmlab.model import SignalKind, SignalSpec, make_signal
from bvmlab.norms import NormSpec, norm
from bvmlab.prior import (
    BaseDensity,
    Family,
    ProductPriorSpec,
    ScaleRule,
    check_condition,
    prior_sample,
    tail_mass,
    truncation_level,
)

BASES = [BaseDensity.gaussian(), BaseDensity.laplace(), BaseDensity.student_t(4.0), BaseDensity.uniform(1.5)]


class TestBaseDensity:
    @pytest.mark.parametrize("base", BASES, ids=lambda b: b.family.value)
    def test_logpdf_matches_scipy(self, base):
        x = np.linspace(-1.4, 1.4, 29)
        np.testing.assert_allclose(base.logpdf(x), base._scipy.logpdf(x), rtol=1e-12)

    @pytest.mark.parametrize("base", BASES, ids=lambda b: b.family.value)
    def test_normalised(self, base):
        lo, hi = base.support
        total, _ = integrate.quad(base.pdf, lo, hi)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_variance_and_bounds(self):
        assert BaseDensity.laplace().variance == pytest.approx(2.0)
        assert BaseDensity.student_t(5.0).variance == pytest.approx(5 / 3)
        assert BaseDensity.uniform(2.0).variance == pytest.approx(4 / 3)
        assert BaseDensity.gaussian().upper_bound == pytest.approx(1 / math.sqrt(2 * math.pi))
        u = BaseDensity.uniform(2.0)
        assert u.lower_bound(1.0) == 0.25
        assert u.lower_bound(3.0) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BaseDensity.uniform(0.0)
        with pytest.raises(ValueError):
            BaseDensity.student_t(2.0)
        assert BaseDensity.uniform(1.0).kinks == (-1.0, 1.0)


class TestScaleRule:
    def test_power_trig(self):
        basis = BasisSpec.trigonometric(4)
        np.testing.assert_allclose(ScaleRule.power_trig(1.0).per_coordinate(basis), np.array([4, 3, 2, 2, 2, 2, 2, 3, 4.0]) ** -1.5)

    def test_power_dyadic(self):
        basis = BasisSpec.wavelet(2)
        np.testing.assert_allclose(ScaleRule.power_dyadic(1.0).per_coordinate(basis), 2.0 ** (-1.5 * basis.levels))

    def test_explicit(self):
        basis = BasisSpec.wavelet(2)
        np.testing.assert_allclose(ScaleRule.explicit([1.0, 0.5, 0.25]).per_coordinate(basis), [1, 1, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25])
        with pytest.raises(ValueError):
            ScaleRule.explicit([1.0]).per_coordinate(basis)
        with pytest.raises(ValueError):
            ScaleRule.explicit([1.0, -1.0])

    def test_mismatched_rule(self):
        with pytest.raises(ValueError):
            ScaleRule.power_trig(1.0).per_coordinate(BasisSpec.wavelet(2))
        with pytest.raises(ValueError):
            ScaleRule.power_dyadic(1.0).per_coordinate(BasisSpec.trigonometric(2))
        with pytest.raises(ValueError):
            ScaleRule.power_dyadic(0.0)

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("l_max", [0, 1, 3])
    def test_tail_mass_trig(self, gamma, l_max):
        rule = ScaleRule.power_trig(gamma)
        direct = sum(2 * max(2, l) ** (-1 - 2 * gamma) for l in range(l_max + 1, 200_000))
        assert tail_mass(rule, BasisKind.TRIGONOMETRIC, l_max) == pytest.approx(direct, rel=1e-4)

    @pytest.mark.parametrize("gamma", [0.5, 1.0])
    def test_tail_mass_dyadic(self, gamma):
        direct = sum(2**l * 2.0 ** (-l * (1 + 2 * gamma)) for l in range(5, 200))
        assert tail_mass(ScaleRule.power_dyadic(gamma), BasisKind.WAVELET, 4) == pytest.approx(direct, rel=1e-12)

    def test_truncation_level(self):
        rule = ScaleRule.power_dyadic(1.0)
        J = truncation_level(rule, BasisKind.WAVELET, 1000)
        assert tail_mass(rule, BasisKind.WAVELET, J) < 1e-7
        assert tail_mass(rule, BasisKind.WAVELET, J - 1) >= 1e-7


class TestProductPrior:
    def test_uniform_tau_must_exceed_M(self):
        basis = BasisSpec.wavelet(3)
        with pytest.raises(ValueError):
            ProductPriorSpec(BaseDensity.uniform(1.0), ScaleRule.power_dyadic(1.0), basis, M=1.0)
        ProductPriorSpec(BaseDensity.uniform(1.5), ScaleRule.power_dyadic(1.0), basis, M=1.0)

    def test_uniform_draws_in_holder_ball(self):
        basis = BasisSpec.wavelet(6)
        spec = ProductPriorSpec(BaseDensity.uniform(0.7), ScaleRule.power_dyadic(1.0), basis)
        draws = prior_sample(spec, 11, count=500)
        assert np.all(norm(draws, NormSpec.holder(1.0)) <= 0.7)

    def test_gaussian_variance(self):
        basis = BasisSpec.wavelet(3)
        spec = ProductPriorSpec(BaseDensity.gaussian(), ScaleRule.power_dyadic(1.0), basis)
        R = 10_000
        draws = prior_sample(spec, 1, count=R).values
        exact = 2.0 ** (-3 * np.maximum(basis.levels, 0))
        # the coarse level shares l = 0, so its variance is one
        se = exact * math.sqrt(2 / R)
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - exact) <= 4 * se)

    def test_same_seed(self):
        spec = ProductPriorSpec(BaseDensity.laplace(), ScaleRule.power_trig(1.0), BasisSpec.trigonometric(5))
        np.testing.assert_array_equal(prior_sample(spec, 3).values, prior_sample(spec, 3).values)


class TestCheckCondition:
    def setup_method(self):
        self.basis = BasisSpec.wavelet(4)
        self.spec = ProductPriorSpec(BaseDensity.gaussian(), ScaleRule.power_dyadic(1.0), self.basis, M=1.0)

    def test_zero(self):
        rep = check_condition(self.spec, CoefficientField.zeros(self.basis))
        assert rep.M_hat == 0 and rep.satisfied

    def test_violation_reported(self):
        sigma = self.spec.sigma
        theta = CoefficientField.from_dict(self.basis, {(3, 2): 2 * sigma[self.basis.offset(3, 2)]})
        rep = check_condition(self.spec, theta)
        assert not rep.satisfied
        assert rep.violating_indices == [(3, 2)]
        assert rep.M_hat == pytest.approx(2.0)

    @given(st.integers(0, 10_000), st.floats(0.01, 1.0))
    def test_holder_decay_satisfies(self, seed, M):
        theta = make_signal(SignalSpec(SignalKind.HOLDER_DECAY, self.basis, gamma=1.0, M=M, seed=seed))
        rep = check_condition(self.spec, theta)
        assert rep.satisfied and rep.M_hat <= M

    def test_uniform_support(self):
        spec = ProductPriorSpec(BaseDensity.uniform(1.0), ScaleRule.power_dyadic(1.0), self.basis)
        theta = CoefficientField(self.basis, spec.sigma * 1.0)
        assert not check_condition(spec, theta).satisfied
        assert check_condition(spec, theta * 0.9).satisfied

    def test_basis_mismatch(self):
        with pytest.raises(ValueError):
            check_condition(self.spec, CoefficientField.zeros(BasisSpec.wavelet(3)))
