"""Potential recovery on a single edge from Cauchy data at one end.

Local coordinates: s = 0 is the *near* (measured) end, s = l the far end.
The data are the Dirichlet value a(t) and the outward normal derivative
d(t) = -u_s(0, t) at the near end over (0, T), together with the initial data
u0, u1 on the edge.  The far-end Dirichlet value b(t) is either known (the
far end is an external node) or estimated jointly with the potential.

The objective (all quadratures trapezoidal)

    J(p, b) = 1/2 |F(p, b) - d|^2_{L2(0,T)} + alpha/2 |p - p_prior|^2_{L2(0,l)}
              + gamma/2 |p'|^2_{L2(0,l)} + beta/2 |b'|^2_{L2(0,T)}   (b term only when b is free)

is minimized by projected Gauss-Newton with an Armijo backtracking search.
F is the outward derivative produced by the leapfrog scheme, so gradients
and Jacobians below are exact derivatives of the discrete objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from .errors import CFLError, NumericalError, ValidationError
from .fields import resample
from .traces import DIRICHLET, NEUMANN, TraceRecord, projected_noise_norm, rms

# outward derivative at s = 0 from samples u_0, u_1, u_2
_NEAR = np.array([3.0, -4.0, 1.0]) / 2.0


@dataclass(eq=False)
class EdgeInverseProblem:
    length: float
    near_dirichlet: TraceRecord
    near_neumann: TraceRecord
    u0: np.ndarray                      # uniform samples on [0, l], s from the near end
    u1: np.ndarray = None
    far_dirichlet: Optional[TraceRecord] = None
    r: float = None                     # lower bound |u0| >= r (checked when given)
    M: float = math.inf                 # admissible bound |p| <= M
    p_prior: np.ndarray = None
    check_horizon: bool = True
    _grid_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        a, d = self.near_dirichlet, self.near_neumann
        if a.count != d.count or not math.isclose(a.dt, d.dt, rel_tol=1e-12):
            raise ValidationError("near-end Dirichlet and Neumann traces are on different grids")
        if self.far_dirichlet is not None and self.far_dirichlet.count < a.count:
            raise ValidationError("far-end Dirichlet trace is shorter than the near-end data")
        self.u0 = np.asarray(self.u0, dtype=float)
        self.u1 = np.zeros_like(self.u0) if self.u1 is None else np.asarray(self.u1, dtype=float)
        if self.length <= 0:
            raise ValidationError("edge length must be positive")
        if self.check_horizon and not self.T > 2 * self.length:
            raise ValidationError(
                f"horizon T={self.T:.4g} must exceed twice the edge length ({2 * self.length:.4g})")
        if self.r is not None and np.min(np.abs(self.u0)) < self.r:
            raise ValidationError(f"|u0| drops below r={self.r} on the edge")

    @property
    def dt(self):
        return self.near_dirichlet.dt

    @property
    def nt(self):
        return self.near_dirichlet.count - 1

    @property
    def T(self):
        return self.nt * self.dt

    @property
    def far_known(self):
        return self.far_dirichlet is not None

    def resampled(self, dt):
        """Same problem with all traces moved onto the step ``dt``.

        Coarser steps use a least-squares spline fit (noise is averaged, not
        aliased); finer steps use cubic interpolation.
        """
        if math.isclose(dt, self.dt, rel_tol=1e-12):
            return self
        count = int(math.floor(self.T / dt + 1e-9)) + 1
        far = None if self.far_dirichlet is None else self.far_dirichlet.project(dt, count)
        return EdgeInverseProblem(self.length, self.near_dirichlet.project(dt, count),
                                  self.near_neumann.project(dt, count), self.u0, self.u1, far,
                                  self.r, self.M, self.p_prior, check_horizon=False)

    def on_grid(self, cells):
        """Initial data and prior on an inversion grid with ``cells`` cells.

        Cubic interpolation: the scheme differentiates u0 twice, so the kinks
        of piecewise-linear resampling would show up as O(1) errors.
        """
        key = cells
        if self._grid_cache.get("key") != key:
            s = np.linspace(0.0, self.length, cells + 1)
            prior = np.zeros(cells + 1) if self.p_prior is None else _smooth_resample(self.p_prior, self.length, s)
            self._grid_cache = {"key": key, "val": (_smooth_resample(self.u0, self.length, s),
                                                    _smooth_resample(self.u1, self.length, s), prior)}
        return self._grid_cache["val"]


@dataclass
class InverseConfig:
    alpha: Optional[float] = None       # None: 1e-3 * RMS(data)^2
    max_iters: int = 30
    grad_tol: float = 1e-9              # relative to the initial gradient norm
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    target_dx: Optional[float] = None   # None: l / cells_per_edge
    cells_per_edge: int = 40
    cfl: float = 1.0                    # inversion time step = cfl * dx
    beta: float = 1e-6                  # smoothing weight on a free far-end trace
    gamma: float = 0.0                  # H1 smoothing weight on p - p_prior
    noise_std: Optional[float] = None   # per-sample std: enables the discrepancy principle
    discrepancy_tau: float = 1.05
    alpha_decrease: float = 0.3
    max_alpha_trials: int = 12

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ValidationError("alpha must be non-negative")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if not 0 < self.cfl <= 1:
            raise ValidationError("inversion cfl must lie in (0, 1]")

    def cells(self, length):
        dx = self.target_dx if self.target_dx is not None else length / self.cells_per_edge
        return max(4, int(round(length / dx)))


def default_alpha(prob):
    return 1e-3 * rms(prob.near_neumann.values) ** 2


# ---------------------------------------------------------------------------
# discrete forward model

def _smooth_resample(samples, length, s):
    samples = np.asarray(samples, dtype=float)
    if samples.size == s.size:
        return samples.copy()
    if samples.size < 4:
        return resample(samples, length, s)
    return CubicSpline(np.linspace(0.0, length, samples.size), samples)(s)


def _trapz_w(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def edge_forward(p, length, dt, nt, u0, u1, left, right):
    """Leapfrog on one edge with Dirichlet data ``left``/``right`` (arrays of nt+1 values).

    Returns the full history, shape (nt + 1, m + 1).
    """
    m = p.size - 1
    dx = length / m
    r2 = (dt / dx) ** 2
    if dt > dx * (1 + 1e-12):
        raise CFLError(f"edge CFL number {dt / dx:.4f} exceeds 1")
    dt2 = dt * dt
    pin = p[1:-1]
    U = np.empty((nt + 1, m + 1))
    U[0] = u0
    U[0, 0], U[0, -1] = left[0], right[0]
    c = U[0]
    U[1, 1:-1] = c[1:-1] + dt * u1[1:-1] + 0.5 * (r2 * (c[2:] - 2 * c[1:-1] + c[:-2]) - dt2 * pin * c[1:-1])
    U[1, 0], U[1, -1] = left[1], right[1]
    coef = 2.0 - 2.0 * r2 - dt2 * pin
    for k in range(1, nt):
        c = U[k]
        U[k + 1, 1:-1] = coef * c[1:-1] + r2 * (c[2:] + c[:-2]) - U[k - 1, 1:-1]
        U[k + 1, 0] = left[k + 1]
        U[k + 1, -1] = right[k + 1]
    if not np.all(np.isfinite(U[-1])):
        raise NumericalError("edge forward solution became non-finite")
    return U


def near_flux(U, dx):
    """Outward normal derivative at s = 0 for every time level."""
    return U[:, :3] @ _NEAR / dx


def far_flux(U, dx):
    """Outward normal derivative at s = l (that is, +u_s)."""
    return U[:, ::-1][:, :3] @ _NEAR / dx


def _sensitivities(p, length, dt, U):
    """Jacobian of near_flux w.r.t. interior potential values, shape (nt + 1, m - 1)."""
    nt = U.shape[0] - 1
    m = p.size - 1
    dx = length / m
    r2 = (dt / dx) ** 2
    dt2 = dt * dt
    coef = (2.0 - 2.0 * r2 - dt2 * p[1:-1])[:, None]
    cols = np.arange(m - 1)
    J = np.zeros((nt + 1, m - 1))
    prev = np.zeros((m + 1, m - 1))
    cur = np.zeros((m + 1, m - 1))
    cur[cols + 1, cols] = -0.5 * dt2 * U[0, 1:-1]
    J[1] = (_NEAR[1] * cur[1] + _NEAR[2] * cur[2]) / dx
    nxt = np.zeros_like(cur)
    for k in range(1, nt):
        nxt[1:-1] = coef * cur[1:-1] + r2 * (cur[2:] + cur[:-2]) - prev[1:-1]
        nxt[cols + 1, cols] -= dt2 * U[k, 1:-1]
        J[k + 1] = (_NEAR[1] * nxt[1] + _NEAR[2] * nxt[2]) / dx
        prev, cur, nxt = cur, nxt, prev
    return J


def _far_impulse_response(p, length, dt, nt):
    """near_flux response to a unit far-end Dirichlet value at step 1 (others zero)."""
    m = p.size - 1
    right = np.zeros(nt + 1)
    right[1] = 1.0
    U = edge_forward(p, length, dt, nt, np.zeros(m + 1), np.zeros(m + 1), np.zeros(nt + 1), right)
    return near_flux(U, length / m)


def _far_jacobian(p, length, dt, nt):
    """Lower-triangular Toeplitz Jacobian of near_flux w.r.t. b_1..b_nt (time invariance)."""
    R = _far_impulse_response(p, length, dt, nt)
    return sla.toeplitz(R, np.zeros(nt))


class Misfit(NamedTuple):
    value: float
    grad: np.ndarray                    # d J / d p at every grid node (endpoints included)
    grad_far: Optional[np.ndarray]      # d J / d b_k, k = 1..nt (None when b is known)
    residual: np.ndarray                # F - d


def _problem_arrays(prob, cells):
    nt = prob.nt
    u0, u1, prior = prob.on_grid(cells)
    left = prob.near_dirichlet.values[: nt + 1]
    data = prob.near_neumann.values[: nt + 1]
    return u0, u1, prior, left, data


def _diff(m, dx):
    """First differences scaled so that |D q|^2 approximates int q'^2 dx."""
    return (np.eye(m, m + 1, k=1) - np.eye(m, m + 1)) / math.sqrt(dx)


def _objective(p, b, prob, alpha, beta, arrays, gamma=0.0):
    u0, u1, prior, left, data = arrays
    m = p.size - 1
    dx = prob.length / m
    U = edge_forward(p, prob.length, prob.dt, prob.nt, u0, u1, left, b)
    F = near_flux(U, dx)
    res = F - data
    wt = _trapz_w(prob.nt + 1, prob.dt)
    wx = _trapz_w(m + 1, dx)
    J = 0.5 * np.sum(wt * res ** 2) + 0.5 * alpha * np.sum(wx * (p - prior) ** 2)
    if gamma:
        J += 0.5 * gamma * np.sum((_diff(m, dx) @ (p - prior)) ** 2)
    if not prob.far_known:
        J += 0.5 * beta * np.sum(np.diff(b) ** 2) / prob.dt
    if not np.isfinite(J):
        raise NumericalError("misfit is not finite")
    return J, U, res


def _far_values(prob, far, u0):
    if prob.far_known:
        return prob.far_dirichlet.values[: prob.nt + 1]
    if far is None:
        return np.full(prob.nt + 1, u0[-1])
    far = np.asarray(far, dtype=float)
    if far.shape != (prob.nt + 1,):
        raise ValidationError(f"far-end trace must have {prob.nt + 1} samples")
    far = far.copy()
    far[0] = u0[-1]
    return far


def edge_misfit(p, prob: EdgeInverseProblem, alpha=0.0, far=None, beta=None, gamma=0.0) -> Misfit:
    """Objective and its exact gradient by the discrete adjoint.

    ``p`` holds potential samples on the inversion grid (its length fixes the
    grid).  ``far`` is the candidate far-end Dirichlet trace when the problem
    does not know it.  The data part of the gradient is the discrete form of
    -int_0^T u(s, t) lambda(s, t) dt, with lambda the adjoint field.
    """
    p = np.asarray(p, dtype=float)
    m = p.size - 1
    if m < 4:
        raise ValidationError("inversion grid needs at least 4 cells")
    beta = InverseConfig.beta if beta is None else beta
    arrays = _problem_arrays(prob, m)
    b = _far_values(prob, far, arrays[0])
    J, U, res = _objective(p, b, prob, alpha, beta, arrays, gamma)
    grad, grad_far = _adjoint_gradient(p, prob, U, res)
    dx = prob.length / m
    grad = grad + alpha * _trapz_w(m + 1, dx) * (p - arrays[2])
    if gamma:
        D = _diff(m, dx)
        grad = grad + gamma * (D.T @ (D @ (p - arrays[2])))
    if prob.far_known:
        grad_far = None
    else:
        db = np.diff(b) / prob.dt
        reg = np.zeros(prob.nt + 1)
        reg[1:] += db
        reg[:-1] -= db
        grad_far = grad_far + beta * reg[1:]
    return Misfit(J, grad, grad_far, res)


def _adjoint_gradient(p, prob, U, res):
    nt = prob.nt
    m = p.size - 1
    dx = prob.length / m
    dt = prob.dt
    r2 = (dt / dx) ** 2
    dt2 = dt * dt
    wt = _trapz_w(nt + 1, dt)
    Z = np.zeros((nt + 1, m + 1))
    Z[:, :3] += np.outer(wt * res, _NEAR / dx)
    coef = 2.0 - 2.0 * r2 - dt2 * p[1:-1]
    gp = np.zeros(m + 1)
    for k in range(nt, 1, -1):
        z = Z[k, 1:-1]
        Z[k - 1, 1:-1] += coef * z
        Z[k - 1, 2:] += r2 * z
        Z[k - 1, :-2] += r2 * z
        Z[k - 2, 1:-1] -= z
        gp[1:-1] -= dt2 * U[k - 1, 1:-1] * z
    gp[1:-1] -= 0.5 * dt2 * U[0, 1:-1] * Z[1, 1:-1]
    return gp, Z[1:, -1].copy()


# ---------------------------------------------------------------------------
# recovery

@dataclass
class EdgeRecovery:
    p: np.ndarray                       # recovered samples on the inversion grid
    far_dirichlet: np.ndarray           # far-end Dirichlet used/estimated (nt + 1 values)
    J: float
    iterations: int
    grad_norm: float
    converged: bool
    alpha: float
    history: list = field(default_factory=list)     # (iter, J, grad_norm, step)
    message: str = ""
    dt: float = None                    # time step of the inversion grid
    gamma: float = 0.0

    @property
    def cells(self):
        return self.p.size - 1


def extension_matrix(m, far_known=True):
    """Map from free parameters to the m + 1 nodal potential values.

    The end values never enter the leapfrog update, so they are linearly
    extrapolated from their neighbours.  With a free far-end trace the last
    interior value is extrapolated as well: the far Dirichlet value enters only
    the update of that node, additively next to dt^2 p u, so the two cannot be
    told apart on the grid.
    """
    lo, hi = 1, (m - 1 if far_known else m - 2)
    n = hi - lo + 1
    E = np.zeros((m + 1, n))
    E[lo:hi + 1] = np.eye(n)
    E[0] = 2 * E[1] - E[2]
    for i in range(hi + 1, m + 1):
        E[i] = 2 * E[i - 1] - E[i - 2]
    return E, slice(lo, hi + 1)


def _gauss_newton(prob, cfg, alpha, cells, p_start, b_start):
    arrays = _problem_arrays(prob, cells)
    u0 = arrays[0]
    dx = prob.length / cells
    nt, dt = prob.nt, prob.dt
    beta, gamma = cfg.beta, cfg.gamma
    free_b = not prob.far_known
    wt = _trapz_w(nt + 1, dt)
    M = prob.M
    E, free = extension_matrix(cells, not free_b)
    n_p = E.shape[1]

    theta = np.clip(np.asarray(p_start, dtype=float)[free], -M, M)
    b = _far_values(prob, b_start, u0)

    reg_p = alpha * (E.T * _trapz_w(cells + 1, dx)) @ E
    if gamma:
        DE = _diff(cells, dx) @ E
        reg_p += gamma * DE.T @ DE
    if free_b:
        # b_0 is pinned by compatibility; penalize beta/2 |b'|^2
        Db = np.eye(nt) - np.eye(nt, k=-1)
        reg_b = beta / dt * (Db.T @ Db)

    def evaluate(th, bb):
        full = np.clip(E @ th, -M, M)
        mis = edge_misfit(full, prob, alpha=alpha, far=bb if free_b else None, beta=beta, gamma=gamma)
        g = E.T @ mis.grad
        if free_b:
            g = np.concatenate([g, mis.grad_far])
        return full, mis, g

    full, mis, g = evaluate(theta, b)
    J = mis.value
    # Riesz weights so the reported gradient norm approximates an L2 norm
    wg = np.concatenate([1.0 / np.full(n_p, dx), np.full(nt if free_b else 0, 1.0 / dt)])

    def gnorm(gv):
        return math.sqrt(float(np.sum(wg * gv ** 2)))

    g0 = gnorm(g)
    history = [(0, J, g0, 0.0)]
    converged = g0 == 0.0
    message = "zero gradient at start" if converged else ""
    it = 0
    while not converged and it < cfg.max_iters:
        it += 1
        U = edge_forward(full, prob.length, dt, nt, u0, arrays[1], arrays[3], b)
        Jac = _sensitivities(full, prob.length, dt, U) @ E[1:-1]
        if free_b:
            Jac = np.hstack([Jac, _far_jacobian(full, prob.length, dt, nt)])
        H = Jac.T @ (Jac * wt[:, None])
        H[:n_p, :n_p] += reg_p
        if free_b:
            H[n_p:, n_p:] += reg_b
        # light Levenberg damping keeps the step defined when alpha = 0
        H[np.diag_indices_from(H)] += 1e-12 * np.trace(H) / H.shape[0]
        try:
            step = -sla.solve(H, g, assume_a="pos")
        except (sla.LinAlgError, ValueError):
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        if g @ step >= 0:
            step = -g
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand_th = theta + t * step[:n_p]
            cand_b = b.copy()
            if free_b:
                cand_b[1:] += t * step[n_p:]
            moved = np.concatenate([cand_th - theta, cand_b[1:] - b[1:]]) if free_b else cand_th - theta
            try:
                cand = evaluate(cand_th, cand_b)
            except NumericalError:
                t *= cfg.backtrack
                continue
            if cand[1].value <= J + cfg.armijo_c * float(g @ moved):
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            message = "no descent after maximum backtracks"
            it -= 1
            break
        theta, b = cand_th, cand_b
        full, mis, g = cand
        J_old, J = J, mis.value
        gn = gnorm(g)
        history.append((it, J, gn, t))
        if gn <= cfg.grad_tol * g0:
            converged, message = True, "gradient tolerance reached"
        elif J_old - J <= 1e-13 * J_old:
            converged, message = True, "objective stalled"
    if not message:
        message = "maximum iterations reached"
    return EdgeRecovery(full, b, J, it, gnorm(g), converged, alpha, history, message, gamma=gamma)


def inversion_grid(prob: EdgeInverseProblem, cfg: InverseConfig):
    """(cells, problem resampled to the inversion time step cfl * dx)."""
    cells = cfg.cells(prob.length)
    return cells, prob.resampled(cfg.cfl * prob.length / cells)


def recover_edge_potential(prob: EdgeInverseProblem, cfg: InverseConfig = None):
    """Recover the potential on the edge; returns ``(p_hat, EdgeRecovery)``.

    ``p_hat`` holds samples on the inversion grid (``cfg.cells(length) + 1``
    points, s measured from the near end).  The data are interpolated onto the
    time step cfl * dx; at cfl = 1 the leapfrog stencil is symmetric in x and
    t, which keeps the far end of the edge well determined.

    With ``cfg.noise_std`` (per-sample noise std of the Neumann data) set, the
    regularization follows the discrepancy principle: alpha and gamma are
    decreased together until the residual on the inversion grid drops below
    tau times the expected norm of the projected noise.
    """
    cfg = cfg or InverseConfig()
    cells, sub = inversion_grid(prob, cfg)
    start = np.zeros(cells + 1)
    alpha = default_alpha(prob) if cfg.alpha is None else cfg.alpha
    if cfg.noise_std is None:
        rec = _gauss_newton(sub, cfg, alpha, cells, start, None)
        rec.dt = sub.dt
        return rec.p, rec
    noise = projected_noise_norm(prob.near_neumann, sub.dt, sub.nt + 1, cfg.noise_std)
    target = cfg.discrepancy_tau * noise
    gamma, b_start = cfg.gamma, None
    for _ in range(cfg.max_alpha_trials):
        rec = _gauss_newton(sub, replace(cfg, gamma=gamma), alpha, cells, start, b_start)
        far = None if sub.far_known else rec.far_dirichlet
        res = edge_misfit(rec.p, sub, 0.0, far).residual
        resid = math.sqrt(np.sum(_trapz_w(res.size, sub.dt) * res ** 2))
        rec.message += f"; discrepancy {resid:.4g} vs target {target:.4g}"
        rec.gamma = gamma
        if resid <= target:
            break
        start, b_start = rec.p, far
        alpha *= cfg.alpha_decrease
        gamma *= cfg.alpha_decrease
    rec.dt = sub.dt
    return rec.p, rec


def fit_far_dirichlet(p, prob: EdgeInverseProblem, beta=None):
    """Far-end Dirichlet trace minimizing the data misfit for a fixed potential.

    The problem is linear in the trace, so one regularized least-squares solve
    suffices.  ``prob`` must already be on the time step matching ``p``'s grid.
    """
    beta = InverseConfig.beta if beta is None else beta
    p = np.asarray(p, dtype=float)
    m = p.size - 1
    u0, u1, _, left, data = _problem_arrays(prob, m)
    nt, dt = prob.nt, prob.dt
    b = np.full(nt + 1, u0[-1])
    U = edge_forward(p, prob.length, dt, nt, u0, u1, left, b)
    res = near_flux(U, prob.length / m) - data
    Jb = _far_jacobian(p, prob.length, dt, nt)
    wt = _trapz_w(nt + 1, dt)
    D = np.eye(nt) - np.eye(nt, k=-1)
    H = Jb.T @ (Jb * wt[:, None]) + beta / dt * (D.T @ D)
    b[1:] += sla.solve(H, -(Jb.T @ (wt * res)), assume_a="pos")
    return b


def edge_transfer(p_hat, prob: EdgeInverseProblem, far_node: str = None, far_dirichlet=None,
                  edge: str = None, cfl: float = 1.0):
    """Cauchy data (Dirichlet, outward Neumann) at the far end implied by ``p_hat``.

    The edge is re-solved on ``p_hat``'s grid with time step cfl * dx.  The
    far-end Dirichlet trace is taken from ``far_dirichlet`` (a TraceRecord or
    an array on that time grid), else from the problem, else fitted with the
    potential held fixed.  When it is not known data, the traces are cut to
    the horizon T - l: later far-end values never reach the near end.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    m = p_hat.size - 1
    sub = prob.resampled(cfl * prob.length / m)
    u0, u1, _, left, _ = _problem_arrays(sub, m)
    nt, dt = sub.nt, sub.dt
    if isinstance(far_dirichlet, TraceRecord):
        far_dirichlet = far_dirichlet.resample(dt, nt + 1).values
    if far_dirichlet is not None:
        b = np.asarray(far_dirichlet, dtype=float)[: nt + 1]
        if b.size != nt + 1:
            raise ValidationError(f"far-end trace has {b.size} samples, need {nt + 1}")
    elif sub.far_known:
        b = sub.far_dirichlet.values[: nt + 1]
    else:
        b = fit_far_dirichlet(p_hat, sub)
    U = edge_forward(p_hat, sub.length, dt, nt, u0, u1, left, b)
    neu = far_flux(U, sub.length / m)
    count = nt + 1 if sub.far_known else valid_far_count(sub.T, sub.length, dt)
    node = far_node or "far"
    return (TraceRecord(node, edge, DIRICHLET, dt, np.array(b[:count])),
            TraceRecord(node, edge, NEUMANN, dt, neu[:count]))


FAR_MARGIN = 8


def valid_far_count(T, length, dt, margin=FAR_MARGIN):
    """Number of samples of far-end data determined by near-end data on (0, T).

    The last samples before T - length are only weakly constrained, so
    ``margin`` more steps are dropped.
    """
    return max(1, int(math.floor((T - length) / dt + 1e-9)) + 1 - margin)
