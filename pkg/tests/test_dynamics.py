import numpy as np
import pytest

from heatchain import dynamics as dyn
from heatchain import model as mdl
from heatchain import oracle as orc
from heatchain.streams import stream


class TestConfig:
    def test_rejects_bad_step_and_scheme(self):
        with pytest.raises(ValueError):
            dyn.IntegratorConfig(h=0.0)
        with pytest.raises(ValueError):
            dyn.IntegratorConfig(h=0.01, scheme="leapfrog")
        with pytest.raises(ValueError):
            dyn.IntegratorConfig(h=0.01, quadrature="simpson")


class TestDeterminism:
    def test_bit_identical_reruns(self, harmonic_n2):
        cfg = dyn.IntegratorConfig(h=0.01)
        x0 = np.zeros(harmonic_n2.dim)
        out = []
        for _ in range(2):
            rng = stream(99, "determinism")
            res = dyn.integrate(harmonic_n2, x0, 5.0, cfg, rng, bonds=(0, 1))
            out.append((res.state.copy(), res.work.w.copy()))
        assert np.array_equal(out[0][0], out[1][0])
        assert np.array_equal(out[0][1], out[1][1])

    def test_streams_differ_across_replicas(self, harmonic_n2):
        cfg = dyn.IntegratorConfig(h=0.01)
        x0 = np.zeros(harmonic_n2.dim)
        a = dyn.integrate(harmonic_n2, x0, 1.0, cfg, stream(99, "t", replica=0))
        b = dyn.integrate(harmonic_n2, x0, 1.0, cfg, stream(99, "t", replica=1))
        assert not np.array_equal(a.state, b.state)


class TestNoiselessStep:
    def test_conserves_energy_without_damping_limit(self, harmonic_n2):
        # with gamma very small the noiseless flow nearly conserves G
        m = mdl.validate_model(
            n=2, d=1, u1=harmonic_n2.u1, u2=harmonic_n2.u2,
            lam=1.0, gamma=1e-12, t1=1.0, tn=1.0)
        x = np.array([0.3, -0.2, 0.5, 0.1, 0.4, -0.6])
        g0 = float(mdl.energy_G(m, x))
        for _ in range(2000):
            x, _ = dyn.step(m, x, 0.01, rng=None, noise=False)
        assert mdl.energy_G(m, x) == pytest.approx(g0, rel=1e-4)

    def test_dissipation_matches_friction_integral(self, quartic_n1):
        # dG/dt = -gamma |r|^2 at zero temperature
        m = quartic_n1
        x0 = np.array([1.0, 0.5, 0.8, -0.3])
        res = dyn.deterministic_integrate(m, x0, 5.0, h=1e-3)
        drop = res.energy[0] - res.energy[-1]
        assert drop == pytest.approx(m.gamma * res.int_r2, rel=1e-4)
        assert np.all(np.diff(res.energy) <= 1e-12)  # monotone decay

    def test_strang_weak_error_beats_euler(self, harmonic_n1):
        # one deterministic step compared against a fine reference
        m = harmonic_n1
        x0 = np.array([0.7, -0.4, 0.2, 0.9])
        ref = dyn.deterministic_integrate(m, x0, 0.5, h=1e-5).state
        h = 0.05
        xs = x0.copy()
        xe = x0.copy()
        for _ in range(int(0.5 / h)):
            xs, _ = dyn.step(m, xs, h, rng=None, noise=False)
            xe, _ = dyn.step_euler(m, xe, h, rng=None, noise=False)
        assert np.linalg.norm(xs - ref) < 0.1 * np.linalg.norm(xe - ref)

    def test_deterministic_order_two(self, quartic_n1):
        m = quartic_n1
        x0 = np.array([1.0, 0.5, 0.8, -0.3])
        ref = dyn.deterministic_integrate(m, x0, 1.0, h=1e-5).state
        errs = []
        for h in (0.02, 0.01, 0.005):
            x = x0.copy()
            for _ in range(int(round(1.0 / h))):
                x, _ = dyn.step(m, x, h, rng=None, noise=False)
            errs.append(np.linalg.norm(x - ref))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.8)


class TestStationaryStatistics:
    def test_ou_marginal_variance(self):
        # with a heavy particle (large pinning), r decouples weakly; check
        # the exact OU substep statistics directly over many steps
        m = mdl.validate_model(
            n=1, d=1, u1=mdl.PotentialSpec.from_coeffs(a2=1.0), u2=None,
            lam=1.0, gamma=2.0, t1=3.0, tn=0.5)
        rng = stream(5, "ou")
        st = dyn._Stepper(m, h=0.05)
        x = np.zeros((4000, m.dim))
        for _ in range(2000):
            st.ou_half(x, rng)
        r = x[:, 2:]
        # stationary variance of the repeated half-step map is T exactly
        assert np.mean(r[:, 0] ** 2) == pytest.approx(3.0, rel=0.1)
        assert np.mean(r[:, 1] ** 2) == pytest.approx(0.5, rel=0.1)

    def test_covariance_matches_lyapunov_oracle(self, harmonic_n2):
        m = harmonic_n2
        cfg = dyn.IntegratorConfig(h=0.02)
        rng = stream(17, "cov")
        x = np.zeros((2000, m.dim))
        res = dyn.integrate(m, x, 30.0, cfg, rng)
        x = res.state
        res = dyn.integrate(m, x, 30.0, cfg, rng, sample_every=50)
        samp = res.samples.reshape(-1, m.dim)
        cov = samp.T @ samp / samp.shape[0]
        sigma = orc.lyapunov_covariance(m)
        assert np.allclose(cov, sigma, atol=0.08)

    def test_gibbs_second_moments_equilibrium(self):
        # T1 = Tn = 1: stationary law is exp(-G); all quadratic modes unit
        m = mdl.validate_model(
            n=2, d=1, u1=mdl.PotentialSpec.from_coeffs(a2=1.0),
            u2=mdl.PotentialSpec.from_coeffs(a2=1.0),
            lam=1.0, gamma=1.0, t1=1.0, tn=1.0)
        sigma = orc.lyapunov_covariance(m)
        b = orc.drift_matrix(m)
        # analytic check: the Gibbs covariance solves the Lyapunov equation
        hess = np.zeros((m.dim, m.dim))
        hess[:2, :2] = np.eye(2)
        hess[2:4, 2:4] = np.array([[2.0, -1.0], [-1.0, 2.0]])
        hess[4:, 4:] = np.eye(2)
        gibbs = np.linalg.inv(hess)
        assert np.allclose(sigma, gibbs, atol=1e-12)


class TestWorkAccumulator:
    def test_quadratures_agree_to_first_order(self, harmonic_n2):
        m = harmonic_n2
        x0 = 0.5 * np.ones(m.dim)
        out = {}
        for quad in ("midpoint", "trapezoid"):
            cfg = dyn.IntegratorConfig(h=0.005, quadrature=quad)
            rng = stream(3, "quad")
            out[quad] = dyn.integrate(m, x0, 20.0, cfg, rng, bonds=(1,)).work.w
        assert out["midpoint"] == pytest.approx(out["trapezoid"], abs=0.05)

    def test_add_concatenates(self):
        a = dyn.WorkAccumulator(bonds=(0, 1), t=1.0, w=np.array([0.1, 0.2]))
        b = dyn.WorkAccumulator(bonds=(0, 1), t=2.0, w=np.array([0.3, 0.4]))
        a.add(b)
        assert a.t == 3.0
        assert np.allclose(a.w, [0.4, 0.6])
        with pytest.raises(ValueError):
            a.add(dyn.WorkAccumulator(bonds=(0,), t=1.0, w=np.array([0.0])))

    def test_time_not_multiple_of_step(self, harmonic_n2):
        cfg = dyn.IntegratorConfig(h=0.3)
        with pytest.raises(ValueError):
            dyn.integrate(harmonic_n2, np.zeros(6), 1.0, cfg, stream(0, "x"))

    def test_nonfinite_detection(self, harmonic_n2):
        x = np.full(6, 1e300)
        with pytest.raises(dyn.NonFiniteError):
            for _ in range(200):
                x, _ = dyn.step_euler(harmonic_n2, x, 0.5, stream(0, "y"))
