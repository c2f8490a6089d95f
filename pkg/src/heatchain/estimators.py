"""Monte Carlo estimation of stationary averages, generating functionals,
the scaled rate e(alpha) and the large-deviation rate function I(w).

Sign convention throughout: e(alpha) = lim_t -(1/t) log E[exp(-alpha W(t))]
with W the accumulated entropy production, so e(0) = 0, e'(0) equals the
stationary mean entropy production, and the fluctuation symmetry reads
e(alpha) = e(1 - alpha).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import model as mdl
from . import streams

MAX_EXPONENT = 700.0  # exp() overflow guard for weights


class WeightOverflowError(OverflowError):
    """exp(-alpha W) exceeded the floating-point range; shorten the horizon."""


class PopulationCollapseError(RuntimeError):
    """Effective sample size of the cloning population dropped below 2."""


class GridTooCoarseError(ValueError):
    """Legendre supremum attained at the alpha-grid boundary."""


def admissible_alpha_interval(model):
    """Open alpha interval on which e(alpha) is finite.

    (-Tmin/(Tmax-Tmin), 1 + Tmin/(Tmax-Tmin)); unbounded when T1 = Tn.
    """
    tmin, tmax = model.t_min, model.t_max
    if tmax == tmin:
        return (-math.inf, math.inf)
    half = tmin / (tmax - tmin)
    return (-half, 1.0 + half)


@dataclass
class CgfPoint:
    alpha: float
    e: float
    stderr: float
    method: str
    t: float
    population: int

    def __post_init__(self):
        if self.method not in ("naive", "cloning", "riccati", "grid"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.stderr < 0.0:
            raise ValueError("standard error must be >= 0")


@dataclass
class CgfCurve:
    points: list

    @property
    def alphas(self):
        return np.array([p.alpha for p in self.points])

    @property
    def values(self):
        return np.array([p.e for p in self.points])

    @property
    def stderrs(self):
        return np.array([p.stderr for p in self.points])


@dataclass
class RateTable:
    w: np.ndarray
    rate: np.ndarray
    alpha_star: np.ndarray
    source: object = None   # CgfCurve or description of the transformed curve


def _default_x0(model):
    return np.zeros(model.dim)


def ergodic_average(model, observable, t, burn_in, config, seed,
                    replicas=8, task="average"):
    """(mean, stderr) of a state observable along stationary trajectories.

    Runs `replicas` independent chains (one derived stream each, propagated
    as one vectorized ensemble), discards burn_in, then takes the time
    average per replica; the standard error is the replica spread.  The
    per-replica average uses every post-burn-in step, which is a batch-means
    estimate with batch length equal to the replica horizon.
    """
    if t <= burn_in:
        raise ValueError("need t > burn_in")
    h = config.h
    rng = streams.stream(seed, task)
    x = np.tile(_default_x0(model), (replicas, 1))
    nburn = int(round(burn_in / h))
    nkeep = int(round((t - burn_in) / h))
    stepper = dyn.step if config.scheme == "splitting" else dyn.step_euler
    for _ in range(nburn):
        x, _ = stepper(model, x, h, rng)
    acc = np.zeros(replicas)
    for _ in range(nkeep):
        x, xmid = stepper(model, x, h, rng)
        acc += observable(xmid if config.quadrature == "midpoint" else x)
    means = acc / nkeep
    mean = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return mean, stderr


def _accumulate_work(model, x, bond, nsteps, h, rng, quadrature):
    """Advance an ensemble nsteps, returning (state, per-walker work)."""
    w = np.zeros(x.shape[0])
    sig_prev = None
    if quadrature == "trapezoid":
        sig_prev = mdl.entropy_production(model, x, bond)
    for _ in range(nsteps):
        x, xmid = dyn.step(model, x, h, rng)
        if quadrature == "midpoint":
            w += h * mdl.entropy_production(model, xmid, bond)
        else:
            sig = mdl.entropy_production(model, x, bond)
            w += 0.5 * h * (sig_prev + sig)
            sig_prev = sig
    return x, w


def mgf_naive(model, bond, alpha, t, n_walkers, config, seed, x0=None,
              n_boot=400, task="mgf-naive"):
    """Direct estimate of Gamma(t, alpha) = E[exp(-alpha W(t))].

    Returns (estimate, (lo, hi)) with a 95% bootstrap interval over
    walkers, which stays usable for the skewed weight distributions this
    estimator produces.  Raises WeightOverflowError when the exponent guard
    trips (the signal that t is too large for the naive route).
    """
    if n_walkers < 2:
        raise ValueError("need at least 2 walkers")
    h = config.h
    rng = streams.stream(seed, task)
    x0 = _default_x0(model) if x0 is None else np.asarray(x0, dtype=float)
    x = np.tile(x0, (n_walkers, 1))
    nsteps = int(round(t / h))
    _, w = _accumulate_work(model, x, bond, nsteps, h, rng, config.quadrature)
    expo = -alpha * w
    if np.max(np.abs(expo)) > MAX_EXPONENT:
        raise WeightOverflowError("weight exponent guard tripped")
    weights = np.exp(expo)
    gamma_hat = float(np.mean(weights))
    boot_rng = streams.stream(seed, task + "/bootstrap")
    idx = boot_rng.integers(0, n_walkers, size=(n_boot, n_walkers))
    boot = np.mean(weights[idx], axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return gamma_hat, (float(lo), float(hi))


def _systematic_resample(weights, rng):
    """Systematic resampling; returns parent indices for a fixed population."""
    n = weights.size
    cum = np.cumsum(weights)
    cum /= cum[-1]
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cum, u)


def cgf_cloning(model, bond, alpha, t, n_walkers, window, config, seed,
                replicas=4, burn_in=0.0, x0=None, task="cgf-cloning"):
    """Population (cloning) estimate of e(alpha).

    Walkers carry weights exp(-alpha dW) over consecutive windows and are
    systematically resampled back to constant population after each one;
    e(alpha) is minus the time-averaged log mean window weight.  The
    standard error is the spread over independent replicas.
    """
    if n_walkers < 100:
        raise ValueError("population must be >= 100")
    h = config.h
    steps_per_window = int(round(window / h))
    if steps_per_window < 1 or abs(steps_per_window * h - window) > 1e-9:
        raise ValueError("window must be a positive multiple of h")
    n_windows = int(round(t / window))
    if n_windows < 1 or abs(n_windows * window - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be a positive multiple of the window")
    burn_windows = int(round(burn_in / window))
    x0 = _default_x0(model) if x0 is None else np.asarray(x0, dtype=float)

    estimates = np.empty(replicas)
    for rep in range(replicas):
        x = np.tile(x0, (n_walkers, 1))
        log_sum = 0.0
        for win in range(burn_windows + n_windows):
            rng = streams.stream(seed, task, replica=rep, window=win)
            x, w = _accumulate_work(
                model, x, bond, steps_per_window, h, rng, config.quadrature
            )
            expo = -alpha * w
            if np.max(np.abs(expo)) > MAX_EXPONENT:
                raise WeightOverflowError("window weight exponent overflow")
            weights = np.exp(expo)
            ess = weights.sum() ** 2 / np.sum(weights**2)
            if ess < 2.0:
                raise PopulationCollapseError(
                    f"effective sample size {ess:.2f} in window {win}"
                )
            if win >= burn_windows:
                log_sum += math.log(np.mean(weights))
            if alpha != 0.0:
                x = x[_systematic_resample(weights, rng)]
        estimates[rep] = -log_sum / t
    e_hat = float(np.mean(estimates))
    stderr = (
        float(np.std(estimates, ddof=1) / math.sqrt(replicas))
        if replicas > 1 else 0.0
    )
    return CgfPoint(alpha=alpha, e=e_hat, stderr=stderr, method="cloning",
                    t=t, population=n_walkers)


def cgf_curve(model, bonds, alphas, t, n_walkers, window, config, seed,
              replicas=4, burn_in=0.0, task="cgf-curve"):
    """Cloning curve over an alpha grid, one curve per bond index.

    Returns (curves, cross_bond_discrepancy): curves is a dict bond ->
    CgfCurve and the discrepancy the max over alpha of the spread between
    bonds (the theory says e is independent of the bond).
    """
    lo, hi = admissible_alpha_interval(model)
    for a in alphas:
        if not lo < a < hi:
            raise ValueError(f"alpha={a} outside admissible interval")
    curves = {}
    for bond in bonds:
        pts = [
            cgf_cloning(model, bond, a, t, n_walkers, window, config, seed,
                        replicas=replicas, burn_in=burn_in,
                        task=f"{task}/bond{bond}/alpha{a:.6g}")
            for a in alphas
        ]
        curves[bond] = CgfCurve(points=pts)
    disc = 0.0
    vals = np.array([curves[b].values for b in bonds])
    if len(bonds) > 1:
        disc = float(np.max(vals.max(axis=0) - vals.min(axis=0)))
    return curves, disc


def symmetry_residual(curve):
    """max |e(alpha) - e(1-alpha)| over grid pairs, with combined stderr.

    Only alphas whose mirror 1-alpha is on the grid participate.
    """
    alphas = curve.alphas
    vals = curve.values
    errs = curve.stderrs
    worst = 0.0
    worst_err = 0.0
    found = False
    for j, a in enumerate(alphas):
        k = np.argmin(np.abs(alphas - (1.0 - a)))
        if abs(alphas[k] - (1.0 - a)) > 1e-9:
            continue
        found = True
        resid = abs(vals[j] - vals[k])
        if resid >= worst:
            worst = resid
            worst_err = math.hypot(errs[j], errs[k])
    if not found:
        raise ValueError("grid is not closed under alpha -> 1 - alpha")
    return worst, worst_err


def legendre_transform(alphas, values, w_grid, source=None):
    """Rate function I(w) = sup_alpha {e(alpha) - alpha w} on a grid.

    The discrete argmax is refined by a three-point parabola fit; an argmax
    on the grid boundary raises GridTooCoarseError.  Since e(0) = 0 the
    supremum is >= 0 by construction whenever 0 is on the grid.
    """
    alphas = np.asarray(alphas, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(alphas)
    alphas, values = alphas[order], values[order]
    w_grid = np.asarray(w_grid, dtype=float)
    rate = np.empty_like(w_grid)
    alpha_star = np.empty_like(w_grid)
    for j, w in enumerate(w_grid):
        obj = values - alphas * w
        k = int(np.argmax(obj))
        if k == 0 or k == alphas.size - 1:
            raise GridTooCoarseError(
                f"argmax at grid boundary for w={w:.6g}; widen the alpha grid"
            )
        # parabola through the three bracketing points
        a0, a1, a2 = alphas[k - 1:k + 2]
        f0, f1, f2 = obj[k - 1:k + 2]
        denom = (a0 - a1) * (a0 - a2) * (a1 - a2)
        ca = (a2 * (f1 - f0) + a1 * (f0 - f2) + a0 * (f2 - f1)) / denom
        cb = (a2**2 * (f0 - f1) + a1**2 * (f2 - f0) + a0**2 * (f1 - f2)) / denom
        if ca < 0.0:
            a_star = -cb / (2.0 * ca)
            a_star = min(max(a_star, a0), a2)
            cc = f1 - ca * a1**2 - cb * a1
            val = ca * a_star**2 + cb * a_star + cc
        else:
            a_star, val = a1, f1
        rate[j] = max(val, 0.0)
        alpha_star[j] = a_star
    return RateTable(w=w_grid, rate=rate, alpha_star=alpha_star, source=source)


def rate_table_from_curve(curve, w_grid):
    """Legendre transform of an estimated CgfCurve."""
    return legendre_transform(curve.alphas, curve.values, w_grid, source=curve)
