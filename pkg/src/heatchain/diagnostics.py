"""Stability and mixing diagnostics for the oscillator chain.

Probes the return mechanism from high energy: the exponential-moment
Liapunov contraction of the total energy, the power-law decay of the
tracking integral int r^2 dt along deterministic high-energy excursions,
and an autocorrelation-based mixing estimate for stationary observables.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import model as mdl
from .dynamics import IntegratorConfig, deterministic_integrate, integrate
from .streams import stream


class PreconditionError(ValueError):
    """Diagnostic invoked outside its validity regime."""


def sample_shell_state(model, energy, rng, zero_r=False):
    """Draw a state on the energy shell G = energy.

    A standard Gaussian direction is rescaled by the unique positive root
    of G(s * x) = energy (G is strictly increasing along rays away from
    the origin for confining potentials).  With zero_r the reservoir
    coordinates are pinned to zero before rescaling, so the whole energy
    sits in the mechanical chain.
    """
    if energy <= 0:
        raise PreconditionError("shell energy must be positive")
    x = rng.standard_normal(model.dim)
    if zero_r:
        x[2 * model.n * model.d:] = 0.0
    x /= np.linalg.norm(x)

    def shifted(s):
        return float(mdl.energy_G(model, s * x)) - energy

    hi = 1.0
    while shifted(hi) < 0.0:
        hi *= 2.0
    s = brentq(shifted, 0.0, hi, xtol=1e-12, rtol=1e-12)
    return s * x


def suggest_step(model, energy, base=0.01):
    """Step size scaled down with shell energy.

    For a pinning degree k2 the local frequency on the shell grows like
    E^{(k2-2)/(2 k2)}, so the step must shrink by the inverse factor to
    stay in the stable window of the integrator.
    """
    k2 = model.k2
    if k2 <= 2:
        return base
    return base * float(energy) ** (-(k2 - 2) / (2.0 * k2))


# ---------------------------------------------------------------------------
# Exponential-moment contraction.
# ---------------------------------------------------------------------------

@dataclass
class LiapunovReport:
    energies: np.ndarray
    log_kappa: np.ndarray        # log E[exp(theta (G(t) - E))] per shell
    theta: float
    horizon: float
    exponent: float              # fitted a in -log kappa ~ c E^a
    prefactor: float
    n_samples: int


def liapunov_ratio(model, energies, theta, horizon, n_samples=256,
                   seed=0, base_step=0.01, task="liapunov"):
    """Contraction of exp(theta G) started from energy shells.

    Requires theta * max(T1, Tn) < 1 so the exponential moment of the
    stationary state is finite.  For each shell energy E the quantity
    log E[exp(theta (G(t_E) - E))] is computed by log-mean-exp over
    trajectories; its negative is fitted as c * E^a over the shells.
    """
    if theta <= 0.0:
        raise PreconditionError("theta must be positive")
    if theta * model.t_max >= 1.0:
        raise PreconditionError(
            "theta * max temperature must be below 1 for a finite "
            "exponential moment"
        )
    energies = np.asarray(energies, dtype=float)
    logk = np.empty(energies.size)
    for k, energy in enumerate(energies):
        rng = stream(seed, task, replica=k, window=0)
        x0 = np.stack([
            sample_shell_state(model, energy, rng) for _ in range(n_samples)
        ])
        nsteps = max(1, math.ceil(horizon / suggest_step(model, energy,
                                                         base_step)))
        cfg = IntegratorConfig(h=horizon / nsteps)
        res = integrate(model, x0, horizon, cfg, rng)
        g = mdl.energy_G(model, res.state)
        z = theta * (g - energy)
        zmax = float(np.max(z))
        logk[k] = zmax + math.log(float(np.mean(np.exp(z - zmax))))
    # fit -log kappa = c E^a on shells where contraction is visible
    ok = logk < 0.0
    if np.count_nonzero(ok) < 2:
        raise PreconditionError(
            "no contraction observed; increase shell energies or horizon"
        )
    slope, intercept = np.polyfit(
        np.log(energies[ok]), np.log(-logk[ok]), 1
    )
    return LiapunovReport(
        energies=energies, log_kappa=logk, theta=theta, horizon=horizon,
        exponent=float(slope), prefactor=float(math.exp(intercept)),
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# Deterministic tracking scaling.
# ---------------------------------------------------------------------------

@dataclass
class TrackingReport:
    energies: np.ndarray
    integrals: np.ndarray        # mean int_0^{t_E} r^2 ds per shell
    horizons: np.ndarray
    slope: float                 # fitted log-log slope
    expected_slope: float        # 3/k2 - 1/2


def tracking_scaling(model, energies, n_samples=16, seed=0,
                     base_step=0.005, task="tracking"):
    """Scaling of the friction pathway at high energy.

    Starting on the shell G = E with the reservoir coordinates at zero,
    the noiseless flow is run for a time t_E = E^{1/k2 - 1/2} (the natural
    traversal time of the shell) and int_0^{t_E} |r|^2 ds is averaged.
    The prediction is a power law E^{3/k2 - 1/2}.
    """
    energies = np.asarray(energies, dtype=float)
    integrals = np.empty(energies.size)
    horizons = np.empty(energies.size)
    k2 = model.k2
    for k, energy in enumerate(energies):
        rng = stream(seed, task, replica=k, window=0)
        t_e = float(energy) ** (1.0 / k2 - 0.5)
        horizons[k] = t_e
        h = suggest_step(model, energy, base_step)
        vals = []
        for _ in range(n_samples):
            x0 = sample_shell_state(model, energy, rng, zero_r=True)
            res = deterministic_integrate(model, x0, t_e, h)
            vals.append(res.int_r2)
        integrals[k] = float(np.mean(vals))
    slope, _ = np.polyfit(np.log(energies), np.log(integrals), 1)
    return TrackingReport(
        energies=energies, integrals=integrals, horizons=horizons,
        slope=float(slope), expected_slope=3.0 / k2 - 0.5,
    )


# ---------------------------------------------------------------------------
# Mixing estimate.
# ---------------------------------------------------------------------------

@dataclass
class MixingReport:
    observable: str
    tau_int: float               # integrated autocorrelation time
    n_samples: int
    sample_dt: float


def _autocovariance(series):
    series = np.asarray(series, dtype=float)
    series = series - series.mean()
    n = series.size
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(series, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n].real
    return acov / np.arange(n, 0, -1)


def mixing_estimate(model, observable, t, burn_in=50.0, h=0.01,
                    sample_every=10, seed=0, task="mixing", name=""):
    """Integrated autocorrelation time of an observable along one path.

    Uses the FFT autocovariance with the standard self-consistent window
    (sum truncated at the first lag exceeding 5 tau).
    """
    rng = stream(seed, task, replica=0, window=0)
    cfg = IntegratorConfig(h=h)
    x0 = np.zeros(model.dim)
    res = integrate(model, x0, burn_in, cfg, rng)
    res = integrate(model, res.state, t, cfg, rng,
                    sample_every=sample_every)
    series = np.array([float(observable(model, s)) for s in res.samples])
    acov = _autocovariance(series)
    if acov[0] <= 0.0:
        raise PreconditionError("degenerate observable (zero variance)")
    rho = acov / acov[0]
    tau = 0.5
    for lag in range(1, rho.size):
        tau += rho[lag]
        if lag >= 5.0 * tau:
            break
    dt = h * sample_every
    return MixingReport(
        observable=name or getattr(observable, "__name__", "observable"),
        tau_int=float(tau * dt), n_samples=series.size, sample_dt=dt,
    )
