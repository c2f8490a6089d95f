"""Anharmonic oscillator chain coupled to two reservoirs.

Defines the chain parameterization (pinning and interaction potentials,
coupling and damping constants, reservoir temperatures), the reduced phase
point x = (p, q, r), and the observables built from it: local energies,
heat flows, entropy productions and the reference functions used by the
generator identities.
"""

from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    """Invalid chain model parameterization."""


class NonConfiningError(ModelError):
    """Leading potential coefficient is not positive."""


class DegreeOrderError(ModelError):
    """Interaction potential grows slower than the pinning potential."""


class NonPositiveParamError(ModelError):
    """Temperature, damping or coupling constant is not positive."""


class IndexOutOfRangeError(IndexError):
    """Bond/flow index outside 0..n."""


@dataclass(frozen=True)
class PotentialSpec:
    """Radial even polynomial potential U(x) = sum_m a_m |x|^m / m.

    Only even powers 2 <= m <= degree are allowed and the leading
    coefficient must be positive (confinement).
    """

    degree: int
    coeffs: tuple  # ((m, a_m), ...) sorted by m

    @staticmethod
    def from_coeffs(**kwargs):
        """Build from keyword coefficients, e.g. from_coeffs(a2=1.0, a4=0.5)."""
        pairs = []
        for name, val in kwargs.items():
            if not name.startswith("a"):
                raise ModelError(f"unknown coefficient {name!r}")
            m = int(name[1:])
            if val != 0.0:
                pairs.append((m, float(val)))
        if not pairs:
            raise NonConfiningError("potential has no nonzero coefficient")
        pairs.sort()
        return PotentialSpec(degree=pairs[-1][0], coeffs=tuple(pairs))

    def value(self, x):
        """U(x) for x of shape (..., d)."""
        s2 = np.sum(np.square(x), axis=-1)
        out = np.zeros_like(s2)
        for m, a in self.coeffs:
            out += (a / m) * s2 ** (m // 2)
        return out

    def grad(self, x):
        """grad U = sum_m a_m |x|^(m-2) x, shape (..., d)."""
        s2 = np.sum(np.square(x), axis=-1)
        c = np.zeros_like(s2)
        for m, a in self.coeffs:
            c += a * s2 ** (m // 2 - 1)
        return c[..., None] * x

    def hess(self, x):
        """Hessian of U, shape (..., d, d)."""
        d = x.shape[-1]
        s2 = np.sum(np.square(x), axis=-1)
        c_iso = np.zeros_like(s2)
        c_out = np.zeros_like(s2)
        for m, a in self.coeffs:
            c_iso += a * s2 ** (m // 2 - 1)
            if m >= 4:
                c_out += a * (m - 2) * s2 ** (m // 2 - 2)
        eye = np.eye(d)
        return c_iso[..., None, None] * eye + c_out[..., None, None] * (
            x[..., :, None] * x[..., None, :]
        )


def _validate_potential(u, label):
    if u.degree < 2 or u.degree % 2 != 0:
        raise ModelError(f"{label}: degree must be even and >= 2, got {u.degree}")
    lead = dict(u.coeffs).get(u.degree, 0.0)
    if lead <= 0.0:
        raise NonConfiningError(f"{label}: leading coefficient a{u.degree} <= 0")
    for m, _ in u.coeffs:
        if m % 2 != 0 or m < 2 or m > u.degree:
            raise ModelError(f"{label}: bad power {m}")


@dataclass(frozen=True)
class ChainModel:
    """Validated chain of n oscillators in dimension d.

    u2 is None iff n == 1 (no interaction bond).  lam couples the boundary
    momenta to the auxiliary reservoir variables, gamma is the reservoir
    relaxation rate and (t1, tn) the reservoir temperatures.
    """

    n: int
    d: int
    u1: PotentialSpec
    u2: PotentialSpec | None
    lam: float
    gamma: float
    t1: float
    tn: float

    @property
    def k1(self):
        return self.u1.degree

    @property
    def k2(self):
        return self.u2.degree if self.u2 is not None else self.u1.degree

    @property
    def harmonic(self):
        if self.u1.degree != 2:
            return False
        return self.u2 is None or self.u2.degree == 2

    @property
    def dim(self):
        return 2 * self.n * self.d + 2 * self.d

    @property
    def t_min(self):
        return min(self.t1, self.tn)

    @property
    def t_max(self):
        return max(self.t1, self.tn)

    def r_temperatures(self):
        """Temperature of each auxiliary coordinate, shape (2d,)."""
        return np.concatenate(
            [np.full(self.d, self.t1), np.full(self.d, self.tn)]
        )


def validate_model(n, d, u1, u2, lam, gamma, t1, tn):
    """Validate raw parameters and return an immutable ChainModel.

    Raises NonConfiningError, DegreeOrderError or NonPositiveParamError.
    """
    n = int(n)
    d = int(d)
    if n < 1 or d < 1:
        raise ModelError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if (u2 is None) != (n == 1):
        raise ModelError("interaction potential u2 must be given iff n >= 2")
    _validate_potential(u1, "u1")
    if u2 is not None:
        _validate_potential(u2, "u2")
        if u2.degree < u1.degree:
            raise DegreeOrderError(
                f"k2={u2.degree} < k1={u1.degree}: interaction must be stiffer"
            )
    for name, val in (("lambda", lam), ("gamma", gamma), ("t1", t1), ("tn", tn)):
        if not val > 0.0:
            raise NonPositiveParamError(f"{name} must be > 0, got {val}")
    return ChainModel(n=n, d=d, u1=u1, u2=u2, lam=float(lam),
                      gamma=float(gamma), t1=float(t1), tn=float(tn))


# ---------------------------------------------------------------------------
# State layout: flat vector x = [p (n*d), q (n*d), r (2*d)], r = (r1, rn).
# All observables broadcast over leading axes of x.
# ---------------------------------------------------------------------------

def split_state(model, x):
    """Views (p, q, r) with shapes (..., n, d), (..., n, d), (..., 2d)."""
    nd = model.n * model.d
    lead = x.shape[:-1]
    p = x[..., :nd].reshape(lead + (model.n, model.d))
    q = x[..., nd:2 * nd].reshape(lead + (model.n, model.d))
    r = x[..., 2 * nd:]
    return p, q, r


def pack_state(model, p, q, r):
    """Inverse of split_state."""
    lead = r.shape[:-1]
    return np.concatenate(
        [p.reshape(lead + (-1,)), q.reshape(lead + (-1,)), r], axis=-1
    )


def flip_momenta(model, x):
    """Time reversal J: negate all chain momenta, keep (q, r)."""
    y = np.array(x, dtype=float, copy=True)
    nd = model.n * model.d
    y[..., :nd] *= -1.0
    return y


def potential_V(model, q):
    """V(q) = sum U1(q_i) + sum U2(q_i - q_{i+1}), q of shape (..., n, d)."""
    v = np.sum(model.u1.value(q), axis=-1)
    if model.n > 1:
        v = v + np.sum(model.u2.value(q[..., :-1, :] - q[..., 1:, :]), axis=-1)
    return v


def grad_V(model, q):
    """Gradient of V with respect to q, shape (..., n, d)."""
    g = model.u1.grad(q)
    if model.n > 1:
        gb = model.u2.grad(q[..., :-1, :] - q[..., 1:, :])
        g = g.copy()
        g[..., :-1, :] += gb
        g[..., 1:, :] -= gb
    return g


def hess_V(model, q):
    """Dense Hessian of V in the flattened q coordinates, (..., nd, nd)."""
    n, d = model.n, model.d
    lead = q.shape[:-2]
    h = np.zeros(lead + (n, d, n, d))
    hu1 = model.u1.hess(q)
    for i in range(n):
        h[..., i, :, i, :] += hu1[..., i, :, :]
    if n > 1:
        hb = model.u2.hess(q[..., :-1, :] - q[..., 1:, :])
        for i in range(n - 1):
            blk = hb[..., i, :, :]
            h[..., i, :, i, :] += blk
            h[..., i + 1, :, i + 1, :] += blk
            h[..., i, :, i + 1, :] -= blk
            h[..., i + 1, :, i, :] -= blk
    return h.reshape(lead + (n * d, n * d))


def chain_energy(model, x):
    """H(p, q) = sum p_i^2/2 + V(q)."""
    p, q, _ = split_state(model, x)
    return 0.5 * np.sum(np.square(p), axis=(-2, -1)) + potential_V(model, q)


def energy_G(model, x):
    """Total energy G = |r|^2/2 + H(p, q)."""
    _, _, r = split_state(model, x)
    return 0.5 * np.sum(np.square(r), axis=-1) + chain_energy(model, x)


def local_energies(model, x):
    """Per-oscillator energies H_1..H_n, shape (..., n).

    Each interaction bond contributes half of its energy to both of its
    endpoints, so sum_i H_i = H(p, q) exactly.
    """
    p, q, _ = split_state(model, x)
    h = 0.5 * np.sum(np.square(p), axis=-1) + model.u1.value(q)
    if model.n > 1:
        ub = model.u2.value(q[..., :-1, :] - q[..., 1:, :])
        h = h.copy()
        h[..., :-1] += 0.5 * ub
        h[..., 1:] += 0.5 * ub
    return h


def heat_flows(model, x):
    """Flows Phi_0..Phi_n, shape (..., n+1).

    Phi_0 = -lam r1.p1 (left reservoir into the chain), interior
    Phi_i = (p_i + p_{i+1})/2 . grad U2(q_i - q_{i+1}), and
    Phi_n = lam rn.pn (chain into the right reservoir).
    """
    p, q, r = split_state(model, x)
    d = model.d
    r1, rn = r[..., :d], r[..., d:]
    out = np.zeros(x.shape[:-1] + (model.n + 1,))
    out[..., 0] = -model.lam * np.sum(r1 * p[..., 0, :], axis=-1)
    out[..., -1] = model.lam * np.sum(rn * p[..., -1, :], axis=-1)
    if model.n > 1:
        gb = model.u2.grad(q[..., :-1, :] - q[..., 1:, :])
        mid = 0.5 * (p[..., :-1, :] + p[..., 1:, :])
        out[..., 1:-1] = np.sum(mid * gb, axis=-1)
    return out


def thermodynamic_force(model):
    """Prefactor of the flows in the entropy production, 1/Tn - 1/T1.

    This sign makes the stationary mean non-negative (positive flow runs
    from the hotter to the colder reservoir) and is the one under which
    the generator identities and e'(0) = <sigma> hold.
    """
    return 1.0 / model.tn - 1.0 / model.t1


def entropy_production(model, x, i):
    """sigma_i = (1/Tn - 1/T1) Phi_i for 0 <= i <= n."""
    if not 0 <= i <= model.n:
        raise IndexOutOfRangeError(f"flow index {i} outside 0..{model.n}")
    return thermodynamic_force(model) * heat_flows(model, x)[..., i]


def entropy_productions(model, x, bonds):
    """sigma_i for several indices at once, shape (..., len(bonds))."""
    for i in bonds:
        if not 0 <= i <= model.n:
            raise IndexOutOfRangeError(f"flow index {i} outside 0..{model.n}")
    phi = heat_flows(model, x)[..., list(bonds)]
    return thermodynamic_force(model) * phi


def entropy_production_boundary(model, x):
    """Boundary-flow entropy production sigma_b = Phi_n/Tn - Phi_0/T1.

    Signs are fixed so that the stationary mean coincides with the mean of
    the bond entropy productions (positive when T1 > Tn drives a positive
    flow left to right).
    """
    phi = heat_flows(model, x)
    return phi[..., -1] / model.tn - phi[..., 0] / model.t1


def _site_weights(model, i):
    """1/T1 for sites k <= i, 1/Tn for k > i (sites are 1-based)."""
    w = np.full(model.n, 1.0 / model.tn)
    w[:i] = 1.0 / model.t1
    return w


def reference_R(model, x, i):
    """Reference function R_i weighting energies by reservoir temperatures.

    R_i = (r1^2/2 + sum_{k<=i} H_k)/T1 + (sum_{k>i} H_k + rn^2/2)/Tn.
    """
    if not 0 <= i <= model.n:
        raise IndexOutOfRangeError(f"reference index {i} outside 0..{model.n}")
    _, _, r = split_state(model, x)
    d = model.d
    h = local_energies(model, x)
    w = _site_weights(model, i)
    return (
        0.5 * np.sum(np.square(r[..., :d]), axis=-1) / model.t1
        + 0.5 * np.sum(np.square(r[..., d:]), axis=-1) / model.tn
        + np.sum(w * h, axis=-1)
    )


# ---------------------------------------------------------------------------
# Analytic derivatives of G and R_i (flat-coordinate gradients/Hessians),
# used by the generator calculus.
# ---------------------------------------------------------------------------

def grad_G(model, x):
    p, q, r = split_state(model, x)
    lead = x.shape[:-1]
    return np.concatenate(
        [p.reshape(lead + (-1,)), grad_V(model, q).reshape(lead + (-1,)), r],
        axis=-1,
    )


def hess_G(model, x):
    _, q, _ = split_state(model, x)
    nd = model.n * model.d
    h = np.zeros(x.shape[:-1] + (model.dim, model.dim))
    idx = np.arange(nd)
    h[..., idx, idx] = 1.0
    h[..., nd:2 * nd, nd:2 * nd] = hess_V(model, q)
    ridx = np.arange(2 * nd, model.dim)
    h[..., ridx, ridx] = 1.0
    return h


def grad_R(model, x, i):
    """Gradient of R_i in flat coordinates."""
    if not 0 <= i <= model.n:
        raise IndexOutOfRangeError(f"reference index {i} outside 0..{model.n}")
    p, q, r = split_state(model, x)
    n, d = model.n, model.d
    w = _site_weights(model, i)
    gp = w[:, None] * p
    gq = w[:, None] * model.u1.grad(q)
    if n > 1:
        dq = q[..., :-1, :] - q[..., 1:, :]
        gb = 0.5 * (w[:-1] + w[1:])[:, None] * model.u2.grad(dq)
        gq = gq.copy()
        gq[..., :-1, :] += gb
        gq[..., 1:, :] -= gb
    tinv = 1.0 / model.r_temperatures()
    lead = x.shape[:-1]
    return np.concatenate(
        [gp.reshape(lead + (-1,)), gq.reshape(lead + (-1,)), tinv * r], axis=-1
    )


def hess_R(model, x, i):
    """Hessian of R_i in flat coordinates."""
    if not 0 <= i <= model.n:
        raise IndexOutOfRangeError(f"reference index {i} outside 0..{model.n}")
    _, q, _ = split_state(model, x)
    n, d = model.n, model.d
    nd = n * d
    w = _site_weights(model, i)
    h = np.zeros(x.shape[:-1] + (model.dim, model.dim))
    for k in range(n):
        idx = np.arange(k * d, (k + 1) * d)
        h[..., idx, idx] = w[k]
    hq = np.zeros(x.shape[:-1] + (n, d, n, d))
    hu1 = model.u1.hess(q)
    for k in range(n):
        hq[..., k, :, k, :] += w[k] * hu1[..., k, :, :]
    if n > 1:
        hb = model.u2.hess(q[..., :-1, :] - q[..., 1:, :])
        for k in range(n - 1):
            blk = 0.5 * (w[k] + w[k + 1]) * hb[..., k, :, :]
            hq[..., k, :, k, :] += blk
            hq[..., k + 1, :, k + 1, :] += blk
            hq[..., k, :, k + 1, :] -= blk
            hq[..., k + 1, :, k, :] -= blk
    h[..., nd:2 * nd, nd:2 * nd] = hq.reshape(x.shape[:-1] + (nd, nd))
    tinv = 1.0 / model.r_temperatures()
    ridx = np.arange(2 * nd, model.dim)
    h[..., ridx, ridx] = tinv
    return h
