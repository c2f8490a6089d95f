import math

import numpy as np
import pytest

from heatchain import estimators as est
from heatchain import model as mdl
from heatchain import oracle as orc
from heatchain.dynamics import IntegratorConfig


CFG = IntegratorConfig(h=0.02)


class TestAdmissibleInterval:
    def test_values(self, harmonic_n2):
        lo, hi = est.admissible_alpha_interval(harmonic_n2)
        assert lo == pytest.approx(-1.0)
        assert hi == pytest.approx(2.0)

    def test_unbounded_at_equilibrium(self):
        m = mdl.validate_model(
            n=1, d=1, u1=mdl.PotentialSpec.from_coeffs(a2=1.0), u2=None,
            lam=1.0, gamma=1.0, t1=1.0, tn=1.0)
        lo, hi = est.admissible_alpha_interval(m)
        assert lo == -math.inf and hi == math.inf

    def test_interval_is_symmetric_about_half(self, harmonic_n2):
        lo, hi = est.admissible_alpha_interval(harmonic_n2)
        assert lo + hi == pytest.approx(1.0)


class TestCgfPoint:
    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            est.CgfPoint(alpha=0.5, e=0.0, stderr=0.0, method="magic",
                         t=1.0, population=0)

    def test_rejects_negative_stderr(self):
        with pytest.raises(ValueError):
            est.CgfPoint(alpha=0.5, e=0.0, stderr=-1.0, method="cloning",
                         t=1.0, population=100)


class TestErgodicAverage:
    def test_mean_sigma_matches_oracle(self, harmonic_n2):
        m = harmonic_n2
        mean, err = est.ergodic_average(
            m, lambda x: mdl.entropy_production(m, x, 1),
            t=400.0, burn_in=40.0, config=CFG, seed=11, replicas=6)
        ref = orc.mean_entropy_production(m)
        assert err > 0.0
        assert abs(mean - ref) < 4.0 * err

    def test_requires_time_beyond_burn_in(self, harmonic_n2):
        with pytest.raises(ValueError):
            est.ergodic_average(harmonic_n2, lambda x: 0.0, t=1.0,
                                burn_in=2.0, config=CFG, seed=0)


class TestNaiveMgf:
    def test_alpha_zero_is_exact_one(self, harmonic_n1):
        val, (lo, hi) = est.mgf_naive(harmonic_n1, 0, 0.0, t=2.0,
                                      n_walkers=64, config=CFG, seed=5)
        assert val == 1.0
        assert lo <= 1.0 <= hi

    def test_overflow_guard(self, harmonic_n1):
        with pytest.raises(est.WeightOverflowError):
            est.mgf_naive(harmonic_n1, 0, 1e6, t=10.0, n_walkers=64,
                          config=CFG, seed=5)


class TestSystematicResample:
    def test_preserves_population_and_bias(self):
        rng = np.random.default_rng(0)
        w = np.array([0.5, 0.25, 0.125, 0.125])
        counts = np.zeros(4)
        for _ in range(400):
            idx = est._systematic_resample(w, rng)
            assert idx.shape == (4,)
            counts += np.bincount(idx, minlength=4)
        freq = counts / counts.sum()
        assert np.allclose(freq, w / w.sum(), atol=0.02)


class TestCloning:
    def test_alpha_zero_gives_zero(self, harmonic_n1):
        pt = est.cgf_cloning(harmonic_n1, 0, 0.0, t=4.0, n_walkers=128,
                             window=1.0, config=CFG, seed=3)
        assert pt.e == pytest.approx(0.0, abs=1e-12)
        assert pt.method == "cloning"

    def test_matches_riccati_within_errorbars(self, harmonic_n1):
        m = harmonic_n1
        pt = est.cgf_cloning(m, 0, 0.5, t=60.0, n_walkers=400, window=1.0,
                             config=CFG, seed=21, replicas=4, burn_in=8.0)
        ref = orc.riccati_cgf(m, 0.5).e
        assert abs(pt.e - ref) < max(4.0 * pt.stderr, 0.004)

    def test_deterministic_given_seed(self, harmonic_n1):
        kw = dict(t=4.0, n_walkers=128, window=1.0, config=CFG, seed=9)
        a = est.cgf_cloning(harmonic_n1, 0, 0.3, **kw)
        b = est.cgf_cloning(harmonic_n1, 0, 0.3, **kw)
        assert a.e == b.e and a.stderr == b.stderr

    def test_small_population_rejected(self, harmonic_n1):
        with pytest.raises(ValueError):
            est.cgf_cloning(harmonic_n1, 0, 0.5, t=2.0, n_walkers=10,
                            window=1.0, config=CFG, seed=0)

    def test_curve_checks_admissibility(self, harmonic_n2):
        with pytest.raises(ValueError):
            est.cgf_curve(harmonic_n2, (0,), [5.0], t=2.0, n_walkers=128,
                          window=1.0, config=CFG, seed=0)


class TestSymmetryResidual:
    def test_residual_zero_for_symmetric_curve(self):
        alphas = np.linspace(0.0, 1.0, 11)
        vals = alphas * (1.0 - alphas)
        pts = [est.CgfPoint(alpha=a, e=v, stderr=0.01, method="riccati",
                            t=0.0, population=0)
               for a, v in zip(alphas, vals)]
        resid, err = est.symmetry_residual(est.CgfCurve(points=pts))
        assert resid == pytest.approx(0.0, abs=1e-14)
        assert err == pytest.approx(0.01 * math.sqrt(2.0))

    def test_requires_mirror_closed_grid(self):
        pts = [est.CgfPoint(alpha=a, e=0.0, stderr=0.0, method="riccati",
                            t=0.0, population=0) for a in (0.1, 0.2)]
        with pytest.raises(ValueError):
            est.symmetry_residual(est.CgfCurve(points=pts))


class TestLegendre:
    def test_quadratic_cgf_transforms_exactly(self):
        # e(a) = a<s> - a^2 v/2 has I(w) = (w - <s>)^2 / (2 v)
        mean_s, var = 0.4, 0.8
        alphas = np.linspace(-4.0, 5.0, 181)
        vals = mean_s * alphas - 0.5 * var * alphas**2
        w_grid = np.linspace(-1.0, 1.5, 11)
        table = est.legendre_transform(alphas, vals, w_grid)
        expected = (w_grid - mean_s) ** 2 / (2.0 * var)
        assert np.allclose(table.rate, expected, atol=1e-6)
        assert np.allclose(table.alpha_star, (mean_s - w_grid) / var,
                           atol=1e-3)

    def test_rate_vanishes_at_mean(self, harmonic_n2):
        m = harmonic_n2
        mean_s = orc.mean_entropy_production(m)
        alphas = np.linspace(-0.9, 1.9, 141)
        vals = orc.riccati_curve(m, alphas)
        table = est.legendre_transform(alphas, vals, np.array([mean_s]))
        assert table.rate[0] == pytest.approx(0.0, abs=1e-8)

    def test_fluctuation_symmetry_in_rate(self, harmonic_n2):
        m = harmonic_n2
        alphas = np.linspace(-0.9, 1.9, 141)
        vals = orc.riccati_curve(m, alphas)
        w = np.linspace(-0.12, 0.12, 9)
        table = est.legendre_transform(alphas, vals, w)
        sym = table.rate - table.rate[::-1] + w
        assert np.max(np.abs(sym)) < 1e-6

    def test_boundary_argmax_raises(self):
        alphas = np.linspace(0.0, 1.0, 5)
        vals = np.zeros(5)
        with pytest.raises(est.GridTooCoarseError):
            est.legendre_transform(alphas, vals + alphas, np.array([5.0]))
