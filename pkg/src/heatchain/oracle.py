"""Independent reference values for harmonic chains and tiny systems.

Three routes are provided: the stationary covariance of the linearized
dynamics (Lyapunov equation), the generating-function scaled rate e(alpha)
for harmonic chains through an algebraic Riccati equation (Gaussian
eigenfunction of the tilted generator), and a direct grid eigensolve of
the tilted generator for single-oscillator models.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import interpolate

from . import model as mdl
from .estimators import admissible_alpha_interval


class UnstableDriftError(ValueError):
    """Harmonic drift matrix has spectrum outside the left half-plane."""


class NoStabilizingSolutionError(RuntimeError):
    """No stabilizing Riccati solution (Gaussian eigenfunction absent)."""


class AlphaInadmissibleError(ValueError):
    """alpha outside the admissible interval."""


class NotConvergedError(RuntimeError):
    """Grid power iteration did not converge."""


class BoxTooSmallError(RuntimeError):
    """Grid eigenfunction carries too much mass at the box boundary."""


def _quadratic_coefficient(u, label):
    coeffs = dict(u.coeffs)
    if u.degree != 2:
        raise ValueError(f"{label}: oracle requires a harmonic potential")
    return coeffs[2]


def coupling_matrix(model):
    """Lambda: R^{nd} -> R^{2d}, p -> (lam p_1, lam p_n)."""
    n, d = model.n, model.d
    lam = np.zeros((2 * d, n * d))
    lam[:d, :d] = model.lam * np.eye(d)
    lam[d:, (n - 1) * d:n * d] = model.lam * np.eye(d)
    return lam


def drift_matrix(model):
    """Drift of the dynamics in (p, q, r) coordinates (harmonic only)."""
    _quadratic_coefficient(model.u1, "u1")
    if model.u2 is not None:
        _quadratic_coefficient(model.u2, "u2")
    n, d = model.n, model.d
    nd = n * d
    dim = model.dim
    k = mdl.hess_V(model, np.zeros((n, d)))
    lam = coupling_matrix(model)
    b = np.zeros((dim, dim))
    b[:nd, nd:2 * nd] = -k
    b[:nd, 2 * nd:] = -lam.T
    b[nd:2 * nd, :nd] = np.eye(nd)
    b[2 * nd:, :nd] = lam
    b[2 * nd:, 2 * nd:] = -model.gamma * np.eye(2 * d)
    return b


def noise_matrix(model):
    """Q = 2 gamma T on the r block, zero elsewhere."""
    dim = model.dim
    q = np.zeros((dim, dim))
    rr = np.diag(2.0 * model.gamma * model.r_temperatures())
    q[2 * model.n * model.d:, 2 * model.n * model.d:] = rr
    return q


def lyapunov_covariance(model):
    """Stationary covariance of the harmonic chain: B S + S B^T + Q = 0."""
    if not model.harmonic:
        raise ValueError("Lyapunov oracle requires a harmonic model")
    b = drift_matrix(model)
    if np.max(np.linalg.eigvals(b).real) >= 0.0:
        raise UnstableDriftError("drift matrix is not Hurwitz")
    sig = sla.solve_continuous_lyapunov(b, -noise_matrix(model))
    return 0.5 * (sig + sig.T)


def flow_form(model, i):
    """Symmetric matrix F_i with Phi_i(x) = x^T F_i x (harmonic model)."""
    if not 0 <= i <= model.n:
        raise mdl.IndexOutOfRangeError(f"flow index {i} outside 0..{model.n}")
    n, d = model.n, model.d
    nd = n * d
    f = np.zeros((model.dim, model.dim))
    if i == 0:
        for j in range(d):
            f[j, 2 * nd + j] = -model.lam
    elif i == n:
        for j in range(d):
            f[(n - 1) * d + j, 2 * nd + d + j] = model.lam
    else:
        a2 = _quadratic_coefficient(model.u2, "u2")
        for j in range(d):
            for pi in (i - 1, i):          # sites i, i+1 (0-based)
                for qi, sign in ((i - 1, 1.0), (i, -1.0)):
                    f[pi * d + j, nd + qi * d + j] += 0.5 * a2 * sign
    return 0.5 * (f + f.T)


def mean_flows(model, sigma=None):
    """Stationary means <Phi_0..Phi_n> under the Lyapunov covariance."""
    if sigma is None:
        sigma = lyapunov_covariance(model)
    return np.array(
        [np.sum(flow_form(model, i) * sigma) for i in range(model.n + 1)]
    )


def mean_entropy_production(model, sigma=None):
    """<sigma_i> (independent of i for the exact covariance)."""
    phi = mean_flows(model, sigma)
    return mdl.thermodynamic_force(model) * float(np.mean(phi))


# ---------------------------------------------------------------------------
# Riccati route: Gaussian eigenfunction of the tilted generator.
# ---------------------------------------------------------------------------

@dataclass
class RiccatiResult:
    alpha: float
    e: float
    m: np.ndarray          # quadratic form of the eigenfunction exp(-x'Mx/2)
    residual: float
    closed_loop_margin: float


def _tilted_matrices(model, alpha):
    dim = model.dim
    nd2 = 2 * model.n * model.d
    bt = drift_matrix(model)
    ridx = np.arange(nd2, dim)
    bt[ridx, ridx] += 2.0 * alpha * model.gamma
    dmat = noise_matrix(model)
    cmat = np.zeros((dim, dim))
    cmat[ridx, ridx] = (alpha - alpha**2) * model.gamma / model.r_temperatures()
    c0 = alpha * model.gamma * 2 * model.d
    return bt, dmat, cmat, c0


def riccati_cgf(model, alpha, check_admissible=True):
    """e(alpha) for a harmonic chain via the stabilizing Riccati solution.

    The Gaussian ansatz exp(-x'Mx/2) for the principal eigenfunction of the
    tilted generator reduces the eigenproblem to

        -M D M + Bt' M + M Bt + 2 C = 0,   e = Tr(D M)/2 - c0,

    solved through the stable invariant subspace of the Hamiltonian matrix
    [[Bt, -D], [-2C, -Bt']].  The stabilizing branch (Bt - D M Hurwitz) is
    the principal one; it is cross-validated against the grid eigensolver.
    """
    if not model.harmonic:
        raise ValueError("Riccati oracle requires a harmonic model")
    if check_admissible:
        lo, hi = admissible_alpha_interval(model)
        if not lo < alpha < hi:
            raise AlphaInadmissibleError(
                f"alpha={alpha} outside admissible interval ({lo}, {hi})"
            )
    dim = model.dim
    bt, dmat, cmat, c0 = _tilted_matrices(model, alpha)
    z = np.zeros((2 * dim, 2 * dim))
    z[:dim, :dim] = bt
    z[:dim, dim:] = -dmat
    z[dim:, :dim] = -2.0 * cmat
    z[dim:, dim:] = -bt.T
    tmat, vecs, sdim = sla.schur(z, output="real", sort="lhp")
    if sdim != dim:
        raise NoStabilizingSolutionError(
            f"alpha={alpha}: {sdim} stable Hamiltonian eigenvalues, need {dim}"
        )
    u = vecs[:dim, :dim]
    w = vecs[dim:, :dim]
    try:
        m = sla.solve(u.T, w.T).T
    except sla.LinAlgError as exc:
        raise NoStabilizingSolutionError(str(exc)) from exc
    m = 0.5 * (m + m.T)
    res = -m @ dmat @ m + bt.T @ m + m @ bt + 2.0 * cmat
    residual = float(np.max(np.abs(res)))
    margin = float(np.max(np.linalg.eigvals(bt - dmat @ m).real))
    if margin >= 0.0:
        raise NoStabilizingSolutionError(
            f"alpha={alpha}: closed loop not stable (margin {margin:.3e})"
        )
    e = 0.5 * float(np.trace(dmat @ m)) - c0
    return RiccatiResult(alpha=alpha, e=e, m=m, residual=residual,
                         closed_loop_margin=margin)


def riccati_curve(model, alphas):
    """e(alpha) on a grid, returned as a plain array."""
    return np.array([riccati_cgf(model, a).e for a in alphas])


# ---------------------------------------------------------------------------
# Grid eigensolve of the tilted generator for n = 1, d = 1 (4 coordinates).
# ---------------------------------------------------------------------------

@dataclass
class GridEigenResult:
    alpha: float
    e: float
    boundary_mass: float
    resolution: int
    box: tuple


def default_box(model, width=4.1):
    """Half-widths (p, q, r1, rn) covering `width` stds of the eigenfunction.

    Momentum and reservoir spreads scale like sqrt(2T); the position
    half-width is where the pinning energy reaches the same level, which
    reproduces the momentum width in the harmonic case and contracts for
    stiffer pinning.
    """
    from scipy.optimize import brentq
    tbar = 0.5 * (model.t1 + model.tn)
    level = 0.5 * width**2 * (2.0 * tbar)
    hi = width * math.sqrt(2.0 * tbar)
    while model.u1.value(np.array([hi])) < level:
        hi *= 2.0
    qw = brentq(lambda s: float(model.u1.value(np.array([s]))) - level,
                0.0, hi)
    return (width * math.sqrt(2.0 * tbar), qw,
            (width - 0.1) * math.sqrt(2.0 * model.t1),
            (width - 0.1) * math.sqrt(2.0 * model.tn))


def _tilted_grid_operator(model, alpha, axes):
    """Sparse central-difference discretization of the tilted generator.

    Fourth-order stencils in the interior, second-order on the two layers
    next to the boundary; values off the grid are zero (absorbing
    boundary).  axes: (p, q, r1, rn) 1-d grids.
    """
    g = model.gamma
    lam = model.lam
    grids = np.meshgrid(*axes, indexing="ij")
    pg, qg, r1g, rng_ = grids
    shape = pg.shape
    nn = pg.size
    dx = [ax[1] - ax[0] for ax in axes]
    strides = [int(np.prod(shape[a + 1:])) for a in range(4)]

    du1 = model.u1.grad(qg[..., None])[..., 0]
    vel = [
        -du1 - lam * (r1g + rng_),              # dp
        pg,                                     # dq
        lam * pg - g * (1.0 - 2.0 * alpha) * r1g,
        lam * pg - g * (1.0 - 2.0 * alpha) * rng_,
    ]
    rows, cols, vals = [], [], []
    idx = np.arange(nn)
    pos = [np.unravel_index(idx, shape)[a] for a in range(4)]

    def add(mask, offset, coef):
        rows.append(idx[mask])
        cols.append(idx[mask] + offset)
        if isinstance(coef, np.ndarray):
            vals.append(coef[mask])
        else:
            vals.append(np.full(int(mask.sum()), coef))

    for a in range(4):
        b = vel[a].ravel()
        s = strides[a]
        inner = (pos[a] >= 2) & (pos[a] <= shape[a] - 3)
        edge = ~inner
        add(inner, 2 * s, -b / (12.0 * dx[a]))
        add(inner, s, 8.0 * b / (12.0 * dx[a]))
        add(inner, -s, -8.0 * b / (12.0 * dx[a]))
        add(inner, -2 * s, b / (12.0 * dx[a]))
        add(edge & (pos[a] < shape[a] - 1), s, b / (2.0 * dx[a]))
        add(edge & (pos[a] > 0), -s, -b / (2.0 * dx[a]))

    diag = np.zeros(nn)
    for a, temp in ((2, model.t1), (3, model.tn)):
        c = g * temp / dx[a] ** 2
        s = strides[a]
        inner = (pos[a] >= 2) & (pos[a] <= shape[a] - 3)
        edge = ~inner
        add(inner, 2 * s, -c / 12.0)
        add(inner, s, 16.0 * c / 12.0)
        add(inner, -s, 16.0 * c / 12.0)
        add(inner, -2 * s, -c / 12.0)
        diag[inner] += -30.0 * c / 12.0
        add(edge & (pos[a] < shape[a] - 1), s, c)
        add(edge & (pos[a] > 0), -s, c)
        diag[edge] += -2.0 * c

    # multiplicative tilt potential
    diag += (
        -(alpha - alpha**2) * g * (r1g**2 / model.t1 + rng_**2 / model.tn)
        + 2.0 * alpha * g
    ).ravel()

    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    a_op = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nn, nn),
    )
    return a_op, shape


def _gibbs_guess(model, grids):
    g0 = (0.5 * grids[0] ** 2 + model.u1.value(grids[1][..., None])
          + 0.5 * grids[2] ** 2 + 0.5 * grids[3] ** 2)
    return np.exp(-g0 / (2.0 * model.t_max)).ravel()


def grid_eigen_cgf(model, alpha, box=None, resolution=33, tol=1e-6,
                   maxiter=5000, ncv=40, boundary_threshold=1e-3,
                   coarse_start=None):
    """e(alpha) from the rightmost eigenvalue of the discrete tilted generator.

    box: per-axis half-widths (p, q, r1, rn); the grid is symmetric about
    the origin with `resolution` points per axis.  The eigenvalue is found
    by an implicitly restarted Arnoldi iteration on the sparse operator;
    e(alpha) = -lambda_max with the convention e >= 0 on (0, 1).

    coarse_start: optional coarser resolution whose eigenvector, solved
    first and interpolated onto the fine grid, seeds the fine iteration
    (much cheaper than starting from the Gibbs-like guess).
    """
    if model.n != 1 or model.d != 1:
        raise ValueError("grid oracle is limited to n=1, d=1")
    if resolution < 17:
        raise ValueError("resolution per axis must be >= 17")
    if box is None:
        box = default_box(model)
    box = tuple(float(b) for b in box)
    axes = [np.linspace(-b, b, resolution) for b in box]
    a_op, shape = _tilted_grid_operator(model, alpha, axes)

    grids = np.meshgrid(*axes, indexing="ij")
    v0 = _gibbs_guess(model, grids)
    if coarse_start is not None:
        if not 17 <= coarse_start < resolution:
            raise ValueError("coarse_start must lie in [17, resolution)")
        caxes = [np.linspace(-b, b, coarse_start) for b in box]
        c_op, cshape = _tilted_grid_operator(model, alpha, caxes)
        cgrids = np.meshgrid(*caxes, indexing="ij")
        try:
            cw, cv = spla.eigs(c_op, k=1, which="LR",
                               v0=_gibbs_guess(model, cgrids),
                               ncv=ncv, tol=1e-4, maxiter=maxiter)
            vec = cv[:, 0].real.reshape(cshape)
            if vec.sum() < 0.0:
                vec = -vec
            interp = interpolate.RegularGridInterpolator(
                tuple(caxes), vec, bounds_error=False, fill_value=0.0)
            guess = interp(np.stack([g.ravel() for g in grids], axis=-1))
            if np.all(np.isfinite(guess)) and np.linalg.norm(guess) > 0.0:
                v0 = guess
        except spla.ArpackNoConvergence:
            pass  # fall back to the Gibbs-like guess

    try:
        w, vecs = spla.eigs(a_op, k=1, which="LR", v0=v0, ncv=ncv, tol=tol,
                            maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise NotConvergedError(f"Arnoldi iteration did not converge: {exc}")
    lam = float(w[0].real)
    if abs(w[0].imag) > 1e-8 * max(1.0, abs(lam)):
        raise NotConvergedError(
            f"rightmost eigenvalue came out complex: {w[0]}"
        )

    vv = np.abs(vecs[:, 0].real.reshape(shape))
    total = vv.sum()
    shell = total - vv[1:-1, 1:-1, 1:-1, 1:-1].sum()
    bmass = float(shell / total)
    if bmass > boundary_threshold:
        raise BoxTooSmallError(
            f"boundary mass {bmass:.2e} exceeds {boundary_threshold:.0e}"
        )
    return GridEigenResult(alpha=alpha, e=-lam, boundary_mass=bmass,
                           resolution=resolution, box=box)
