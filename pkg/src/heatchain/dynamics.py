"""Time integration of the reduced chain-reservoir dynamics.

The default scheme is a palindromic Strang splitting

    C(h/2) B(h/2) K(h/2) D(h/2) | D(h/2) K(h/2) B(h/2) C(h/2)

where C is the exact Ornstein-Uhlenbeck update of r, B the exact linear
rotation coupling the boundary momenta to r, and K/D the kick/drift halves
of a velocity-Verlet step for (p, q).  The state at the center of the
palindrome serves as the midpoint for work quadrature.  A plain
Euler-Maruyama scheme is kept as a cross-check.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl


class NonFiniteError(FloatingPointError):
    """Trajectory left the finite range (step too large or blow-up)."""


SCHEMES = ("splitting", "euler-maruyama")
QUADRATURES = ("midpoint", "trapezoid")


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 0.01
    scheme: str = "splitting"
    quadrature: str = "midpoint"

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"step h must be > 0, got {self.h}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"unknown quadrature {self.quadrature!r}")


@dataclass
class WorkAccumulator:
    """Running time-integrals W_i = int_0^t sigma_i ds for selected bonds."""

    bonds: tuple
    t: float = 0.0
    w: np.ndarray = None

    def __post_init__(self):
        if self.w is None:
            self.w = np.zeros(len(self.bonds))

    def add(self, other):
        """Concatenate a later segment onto this one."""
        if other.bonds != self.bonds:
            raise ValueError("bond sets differ")
        self.t += other.t
        self.w = self.w + other.w


class _Stepper:
    """Precomputed substep coefficients for a fixed (model, h, noise flag)."""

    def __init__(self, model, h, noise=True):
        self.model = model
        self.h = h
        self.noise = noise
        d, n = model.d, model.n
        self.nd = n * d
        g = model.gamma
        self.ou_decay = math.exp(-g * h / 2.0)
        tvec = model.r_temperatures()
        if noise:
            self.ou_sigma = np.sqrt(tvec * (1.0 - math.exp(-g * h)))
        else:
            self.ou_sigma = None
        theta = model.lam * h / 2.0
        if n == 1:
            theta *= math.sqrt(2.0)
        self.rot_c = math.cos(theta)
        self.rot_s = math.sin(theta)

    # -- substeps (operate in place on a flat state array) ------------------

    def ou_half(self, x, rng):
        r = x[..., 2 * self.nd:]
        r *= self.ou_decay
        if self.noise:
            r += self.ou_sigma * rng.standard_normal(r.shape)

    def rotate_half(self, x):
        m = self.model
        d, nd = m.d, self.nd
        c, s = self.rot_c, self.rot_s
        r1 = x[..., 2 * nd:2 * nd + d]
        rn = x[..., 2 * nd + d:2 * nd + 2 * d]
        if m.n == 1:
            # both reservoirs couple to the single particle: (p, (r1+rn)/sqrt2)
            # rotates at frequency sqrt(2) lam, (r1-rn)/sqrt2 is frozen
            p = x[..., :d]
            inv = 1.0 / math.sqrt(2.0)
            u = (r1 - rn) * inv
            v = (r1 + rn) * inv
            pn = c * p - s * v
            vn = s * p + c * v
            p[...] = pn
            r1[...] = (vn + u) * inv
            rn[...] = (vn - u) * inv
        else:
            p1 = x[..., :d]
            pn = x[..., nd - d:nd]
            for pb, rb in ((p1, r1), (pn, rn)):
                pnew = c * pb - s * rb
                rnew = s * pb + c * rb
                pb[...] = pnew
                rb[...] = rnew

    def kick_half(self, x):
        m = self.model
        nd = self.nd
        q = x[..., nd:2 * nd].reshape(x.shape[:-1] + (m.n, m.d))
        g = mdl.grad_V(m, q).reshape(x.shape[:-1] + (nd,))
        x[..., :nd] -= (self.h / 2.0) * g

    def drift_half(self, x):
        nd = self.nd
        x[..., nd:2 * nd] += (self.h / 2.0) * x[..., :nd]


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite state encountered; reduce the step")


def step(model, x, h, rng, noise=True):
    """One Strang step.  Returns (new state, palindrome midpoint state)."""
    st = _Stepper(model, h, noise=noise)
    y = np.array(x, dtype=float, copy=True)
    st.ou_half(y, rng)
    st.rotate_half(y)
    st.kick_half(y)
    st.drift_half(y)
    mid = y.copy()
    st.drift_half(y)
    st.kick_half(y)
    st.rotate_half(y)
    st.ou_half(y, rng)
    _check_finite(y)
    return y, mid


def _drift(model, x):
    """Right-hand side of the zero-noise equations of motion."""
    p, q, r = mdl.split_state(model, x)
    d, nd = model.d, model.n * model.d
    out = np.zeros_like(x)
    dp = -mdl.grad_V(model, q)
    dp = dp.reshape(x.shape[:-1] + (nd,)).copy()
    dp[..., :d] -= model.lam * r[..., :d]
    dp[..., nd - d:] -= model.lam * r[..., d:]
    out[..., :nd] = dp
    out[..., nd:2 * nd] = x[..., :nd]
    dr = -model.gamma * r
    dr = dr.copy()
    dr[..., :d] += model.lam * p[..., 0, :]
    dr[..., d:] += model.lam * p[..., -1, :]
    out[..., 2 * nd:] = dr
    return out


def step_euler(model, x, h, rng, noise=True):
    """One Euler-Maruyama step (cross-check scheme)."""
    y = np.array(x, dtype=float, copy=True)
    mid = y.copy()
    y += h * _drift(model, y)
    if noise:
        nd = model.n * model.d
        sig = np.sqrt(2.0 * model.gamma * model.r_temperatures() * h)
        y[..., 2 * nd:] += sig * rng.standard_normal(y[..., 2 * nd:].shape)
    _check_finite(y)
    return y, mid


@dataclass
class IntegrationResult:
    state: np.ndarray
    work: WorkAccumulator
    samples: np.ndarray | None = None
    sample_times: np.ndarray | None = None


def integrate(model, x0, t, config, rng, bonds=(), sample_every=0,
              noise=True):
    """Advance x0 by t (a multiple of the step), accumulating bond work.

    Work integrals use the configured quadrature: 'midpoint' evaluates
    sigma at the palindrome midpoint of each step, 'trapezoid' averages the
    endpoint values.  Deterministic given (model, x0, config, rng state).
    """
    h = config.h
    nsteps = int(round(t / h))
    if abs(nsteps * h - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a multiple of h={h}")
    bonds = tuple(bonds)
    x = np.array(x0, dtype=float, copy=True)
    w = np.zeros(x.shape[:-1] + (len(bonds),)) if bonds else None
    stepper = step if config.scheme == "splitting" else step_euler
    samples = []
    stimes = []
    sig_prev = None
    if bonds and config.quadrature == "trapezoid":
        sig_prev = mdl.entropy_productions(model, x, bonds)
    for k in range(nsteps):
        x, xmid = stepper(model, x, h, rng, noise=noise)
        if bonds:
            if config.quadrature == "midpoint":
                w += h * mdl.entropy_productions(model, xmid, bonds)
            else:
                sig_new = mdl.entropy_productions(model, x, bonds)
                w += 0.5 * h * (sig_prev + sig_new)
                sig_prev = sig_new
        if sample_every and (k + 1) % sample_every == 0:
            samples.append(x.copy())
            stimes.append((k + 1) * h)
    acc = WorkAccumulator(bonds=bonds, t=nsteps * h,
                          w=w if bonds else np.zeros(0))
    return IntegrationResult(
        state=x,
        work=acc,
        samples=np.array(samples) if samples else None,
        sample_times=np.array(stimes) if stimes else None,
    )


@dataclass
class DeterministicResult:
    times: np.ndarray
    energy: np.ndarray      # G(t) at sample times
    int_r2: float           # int_0^t |r|^2 ds (midpoint quadrature)
    state: np.ndarray


def deterministic_integrate(model, x0, t, h, record_every=1):
    """Zero-temperature dynamics: noise off, dissipative drift retained.

    Reports G at sampled times and the accumulated int |r|^2 ds, the
    quantity controlling energy dissipation at zero temperature.
    """
    nsteps = int(round(t / h))
    if nsteps < 1:
        nsteps = 1
    h = t / nsteps
    x = np.array(x0, dtype=float, copy=True)
    nd2 = 2 * model.n * model.d
    times = [0.0]
    energy = [mdl.energy_G(model, x)]
    acc = 0.0
    for k in range(nsteps):
        x, xmid = step(model, x, h, rng=None, noise=False)
        acc += h * np.sum(np.square(xmid[..., nd2:]), axis=-1)
        if (k + 1) % record_every == 0 or k == nsteps - 1:
            times.append((k + 1) * h)
            energy.append(mdl.energy_G(model, x))
    return DeterministicResult(
        times=np.array(times), energy=np.array(energy), int_r2=acc, state=x
    )
