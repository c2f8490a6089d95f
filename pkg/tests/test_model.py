import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatchain import model as mdl


def random_state(model, rng, scale=1.0):
    return scale * rng.standard_normal(model.dim)


class TestValidation:
    def test_minimal_harmonic(self, harmonic_n2):
        assert harmonic_n2.harmonic
        assert harmonic_n2.k1 == harmonic_n2.k2 == 2
        assert harmonic_n2.dim == 6

    def test_nonconfining(self):
        with pytest.raises(mdl.NonConfiningError):
            mdl.PotentialSpec.from_coeffs(a2=0.0)
        with pytest.raises(mdl.NonConfiningError):
            mdl.validate_model(
                n=1, d=1, u1=mdl.PotentialSpec(degree=2, coeffs=((2, -1.0),)),
                u2=None, lam=1.0, gamma=1.0, t1=1.0, tn=1.0)

    def test_degree_order(self):
        with pytest.raises(mdl.DegreeOrderError):
            mdl.validate_model(
                n=2, d=1,
                u1=mdl.PotentialSpec.from_coeffs(a2=1.0, a4=1.0),
                u2=mdl.PotentialSpec.from_coeffs(a2=1.0),
                lam=1.0, gamma=1.0, t1=1.0, tn=1.0)

    @pytest.mark.parametrize("bad", ["lam", "gamma", "t1", "tn"])
    def test_nonpositive_params(self, bad):
        kwargs = dict(n=1, d=1, u1=mdl.PotentialSpec.from_coeffs(a2=1.0),
                      u2=None, lam=1.0, gamma=1.0, t1=1.0, tn=1.0)
        kwargs[bad] = -0.5
        with pytest.raises(mdl.NonPositiveParamError):
            mdl.validate_model(**kwargs)

    def test_u2_iff_n_ge_2(self):
        u = mdl.PotentialSpec.from_coeffs(a2=1.0)
        with pytest.raises(mdl.ModelError):
            mdl.validate_model(n=1, d=1, u1=u, u2=u, lam=1, gamma=1, t1=1, tn=1)
        with pytest.raises(mdl.ModelError):
            mdl.validate_model(n=2, d=1, u1=u, u2=None, lam=1, gamma=1, t1=1, tn=1)


class TestPotential:
    def test_quartic_value_and_grad(self):
        u = mdl.PotentialSpec.from_coeffs(a2=2.0, a4=4.0)
        x = np.array([1.5, -0.5])
        s2 = float(x @ x)
        assert np.isclose(u.value(x), s2 + s2**2)
        assert np.allclose(u.grad(x), (2.0 + 4.0 * s2) * x)

    def test_grad_matches_fd(self, rng):
        u = mdl.PotentialSpec.from_coeffs(a2=0.7, a4=1.3)
        x = rng.standard_normal(3)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (u.value(x + e) - u.value(x - e)) / (2 * h)
            assert np.isclose(u.grad(x)[j], fd, atol=1e-7)

    def test_hess_matches_fd(self, rng):
        u = mdl.PotentialSpec.from_coeffs(a2=0.7, a4=1.3)
        x = rng.standard_normal(3)
        h = 1e-5
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (u.grad(x + e) - u.grad(x - e)) / (2 * h)
            assert np.allclose(u.hess(x)[:, j], fd, atol=1e-6)


class TestObservables:
    def test_local_energies_sum_exactly(self, anharmonic_n3, rng):
        x = random_state(anharmonic_n3, rng, 2.0)
        h = mdl.local_energies(anharmonic_n3, x)
        assert np.sum(h) == pytest.approx(
            float(mdl.chain_energy(anharmonic_n3, x)), abs=1e-14)

    def test_energy_G_adds_reservoirs(self, harmonic_n2, rng):
        x = random_state(harmonic_n2, rng)
        _, _, r = mdl.split_state(harmonic_n2, x)
        assert mdl.energy_G(harmonic_n2, x) == pytest.approx(
            float(mdl.chain_energy(harmonic_n2, x)) + 0.5 * float(r @ r))

    def test_flow_count_and_index_errors(self, harmonic_n2, rng):
        x = random_state(harmonic_n2, rng)
        assert mdl.heat_flows(harmonic_n2, x).shape == (3,)
        with pytest.raises(mdl.IndexOutOfRangeError):
            mdl.entropy_production(harmonic_n2, x, 3)
        with pytest.raises(mdl.IndexOutOfRangeError):
            mdl.reference_R(harmonic_n2, x, -1)

    def test_entropy_sign_example(self, harmonic_n2):
        # flow 3 across the middle bond with T = (2, 1): sigma = 1/2 * 3
        x = np.zeros(6)
        x[0] = x[1] = 2.0   # p1 = p2 = 2
        x[2] = 3.0          # q1 - q2 = 3 stretches the middle bond
        phi = mdl.heat_flows(harmonic_n2, x)[1]
        assert phi == pytest.approx(6.0)
        assert mdl.entropy_production(harmonic_n2, x, 1) == pytest.approx(3.0)

    def test_conservation_balance_pointwise(self, anharmonic_n3, rng):
        # dH_i/dt along the deterministic part equals Phi_{i-1} - Phi_i
        m = anharmonic_n3
        x = random_state(m, rng, 1.5)
        p, q, r = mdl.split_state(m, x)
        h = 1e-6
        # move along the Hamiltonian flow only (r frozen, no damping)
        gv = mdl.grad_V(m, q)
        d = m.d
        lam_force = np.zeros_like(p)
        lam_force[0] += m.lam * r[:d]
        lam_force[-1] += m.lam * r[d:]
        xdot = mdl.pack_state(m, -gv - lam_force, p, np.zeros_like(r))
        e_plus = mdl.local_energies(m, x + h * xdot)
        e_minus = mdl.local_energies(m, x - h * xdot)
        dh = (e_plus - e_minus) / (2 * h)
        phi = mdl.heat_flows(m, x)
        assert np.allclose(dh, phi[:-1] - phi[1:], atol=1e-6)


class TestSymmetries:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sigma_odd_R_even_under_flip(self, seed):
        m = mdl.validate_model(
            n=2, d=1, u1=mdl.PotentialSpec.from_coeffs(a2=1.0),
            u2=mdl.PotentialSpec.from_coeffs(a2=1.0, a4=0.4),
            lam=1.0, gamma=1.0, t1=2.0, tn=1.0)
        x = np.random.default_rng(seed).standard_normal(m.dim)
        y = mdl.flip_momenta(m, x)
        for i in range(m.n + 1):
            assert mdl.entropy_production(m, y, i) == pytest.approx(
                -float(mdl.entropy_production(m, x, i)), abs=1e-12)
            assert mdl.reference_R(m, y, i) == pytest.approx(
                float(mdl.reference_R(m, x, i)), abs=1e-12)
        assert mdl.energy_G(m, y) == pytest.approx(float(mdl.energy_G(m, x)))

    def test_flip_is_involution(self, harmonic_n2, rng):
        x = random_state(harmonic_n2, rng)
        assert np.array_equal(
            mdl.flip_momenta(harmonic_n2, mdl.flip_momenta(harmonic_n2, x)), x)


class TestDerivatives:
    @pytest.mark.parametrize("which", ["G", "R"])
    def test_analytic_derivatives_match_fd(self, anharmonic_n3, rng, which):
        m = anharmonic_n3
        x = random_state(m, rng, 1.2)
        if which == "G":
            f = lambda y: float(mdl.energy_G(m, y))
            grad, hess = mdl.grad_G(m, x), mdl.hess_G(m, x)
        else:
            f = lambda y: float(mdl.reference_R(m, y, 1))
            grad, hess = mdl.grad_R(m, x, 1), mdl.hess_R(m, x, 1)
        h = 1e-5
        for j in range(m.dim):
            e = np.zeros(m.dim)
            e[j] = h
            assert grad[j] == pytest.approx((f(x + e) - f(x - e)) / (2 * h),
                                            abs=1e-6)
        fd_hess = np.empty((m.dim, m.dim))
        for j in range(m.dim):
            e = np.zeros(m.dim)
            e[j] = h
            fd_hess[:, j] = ((np.array([f(x + e + dsel) for dsel in
                                        np.eye(m.dim) * h])
                              - np.array([f(x + e - dsel) for dsel in
                                          np.eye(m.dim) * h])) / (2 * h)
                             - (np.array([f(x - e + dsel) for dsel in
                                          np.eye(m.dim) * h])
                                - np.array([f(x - e - dsel) for dsel in
                                            np.eye(m.dim) * h])) / (2 * h)
                             ) / (2 * h)
        assert np.allclose(hess, fd_hess, atol=1e-4)
