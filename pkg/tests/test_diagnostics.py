import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from bvmlab.basis import BasisSpec, CoefficientField
from bvmlab.diagnostics import (
    BvmDiagnosticReport,
    ProjectionSpec,
    empirical_bl_distance,
    fidi_distance,
    gaussian_ks_distance,
    hdelta_concentration,
    mean_linearity,
)
from bvmlab.model import Observation, SignalKind, SignalSpec, make_signal, observe
from bvmlab.norms import hdelta_weights
from bvmlab.posterior import fit, posterior_sample
from bvmlab.prior import BaseDensity, ProductPriorSpec, ScaleRule


def gaussian_post(basis, n, seed=1):
    prior = ProductPriorSpec(BaseDensity.gaussian(), ScaleRule.matching(basis, 1.0), basis)
    theta = make_signal(SignalSpec(SignalKind.HOLDER_DECAY, basis, gamma=1.0, M=1.0, seed=seed))
    return theta, fit(prior, observe(theta, n, (seed, 2)))


class TestProjection:
    def test_wavelet_up_to(self):
        basis = BasisSpec.wavelet(6)
        proj = ProjectionSpec.up_to(basis, 2)
        assert proj.levels == (0, 1, 2)
        assert proj.dim(basis) == 8
        np.testing.assert_array_equal(proj.indices(basis), np.arange(8))

    def test_trig_up_to(self):
        basis = BasisSpec.trigonometric(6)
        assert ProjectionSpec.up_to(basis, 2).dim(basis) == 5

    def test_errors(self):
        with pytest.raises(ValueError):
            ProjectionSpec(())
        with pytest.raises(ValueError):
            ProjectionSpec((9,)).indices(BasisSpec.wavelet(3))


class TestGaussianKS:
    @given(st.floats(-3, 3), st.floats(0.05, 5))
    def test_matches_grid_search(self, m, v):
        t = np.linspace(-40, 40, 400_001)
        brute = np.max(np.abs(stats.norm.cdf(t, m, math.sqrt(v)) - stats.norm.cdf(t)))
        got = gaussian_ks_distance(m, v)
        assert brute - 1e-9 <= got <= brute + 1e-4
        assert 0 <= got <= 1

    def test_identity(self):
        assert gaussian_ks_distance(0.0, 1.0) == 0.0

    def test_pure_shift(self):
        assert gaussian_ks_distance(1.0, 1.0) == pytest.approx(2 * stats.norm.cdf(0.5) - 1)


class TestFidi:
    def test_empirical_matches_exact_ks(self):
        # the rescaled marginal is N(sqrt(n)(m - x), n v) exactly
        basis = BasisSpec.wavelet(6)
        _, post = gaussian_post(basis, 2**10)
        proj = ProjectionSpec.up_to(basis, 3)
        S = 20_000
        rep = fidi_distance(post, proj, S, seed=3)
        idx = proj.indices(basis)
        rn = math.sqrt(post.n)
        exact = gaussian_ks_distance(rn * (post.mean[idx] - post.x[idx]), post.n * post.variance[idx])
        assert rep.per_coordinate_ks.shape == (16,)
        np.testing.assert_allclose(rep.per_coordinate_ks, exact, atol=3 * 0.5 / math.sqrt(S))
        assert rep.cov_deviation >= 0

    def test_sample_minimum(self):
        basis = BasisSpec.wavelet(3)
        _, post = gaussian_post(basis, 64)
        with pytest.raises(ValueError):
            fidi_distance(post, ProjectionSpec((0,)), 499)
        with pytest.raises(ValueError):
            fidi_distance(post, ProjectionSpec((0,)), samples=posterior_sample(post, 100, 0))

    def test_report_summary(self):
        rep = BvmDiagnosticReport(per_coordinate_ks=np.array([0.1, 0.3]), cov_deviation=0.2, mean_linearity=1.0)
        assert rep.max_ks == 0.3
        assert rep.summary() == {"max_ks": 0.3, "cov_deviation": 0.2, "mean_linearity": 1.0}
        assert BvmDiagnosticReport().max_ks is None


class TestConcentration:
    def test_sentinels(self):
        basis = BasisSpec.wavelet(4)
        theta, post = gaussian_post(basis, 256)
        assert hdelta_concentration(post, theta, M_test=math.inf, sample_count=500) == 0.0
        assert hdelta_concentration(post, theta, M_test=0.0, sample_count=500) == 1.0

    def test_in_unit_interval(self):
        basis = BasisSpec.wavelet(4)
        theta, post = gaussian_post(basis, 256)
        assert 0.0 <= hdelta_concentration(post, theta, M_test=5.0, sample_count=500) <= 1.0


class TestMeanLinearity:
    def test_closed_form(self):
        basis = BasisSpec.wavelet(7)
        _, post = gaussian_post(basis, 2**12)
        s2 = post.sigma**2
        n = post.n
        expected = math.sqrt(n) * math.sqrt(np.sum(hdelta_weights(basis, 1.0) * (post.x / (n * s2 + 1)) ** 2))
        assert mean_linearity(post, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_zero_observation(self):
        basis = BasisSpec.wavelet(4)
        for base in (BaseDensity.gaussian(), BaseDensity.laplace(), BaseDensity.uniform(1.0)):
            prior = ProductPriorSpec(base, ScaleRule.power_dyadic(1.0), basis)
            post = fit(prior, Observation(100, CoefficientField.zeros(basis)))
            assert mean_linearity(post) == pytest.approx(0.0, abs=1e-13)


class TestBL:
    def test_identical(self, rng):
        a = rng.standard_normal(100)
        assert empirical_bl_distance(a, a) == 0.0

    @given(st.floats(-10, 10))
    def test_translation(self, c):
        a = np.linspace(-1, 1, 50)
        assert empirical_bl_distance(a, a + c) == pytest.approx(abs(c), abs=1e-12)

    def test_independent_normals(self, rng):
        assert empirical_bl_distance(rng.standard_normal(100_000), rng.standard_normal(100_000)) < 0.02

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_bl_distance([], [1.0])
