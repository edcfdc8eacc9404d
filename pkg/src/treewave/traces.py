"""Time traces at nodes: records, norms, noise, CSV export and the
wave-to-heat (Reznitzkaya) transform."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

DIRICHLET = "dirichlet"
NEUMANN = "neumann-outward"


@dataclass(frozen=True, eq=False)
class TraceRecord:
    node: str
    edge: str | None
    kind: str
    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1:
            raise ValidationError("trace values must be one-dimensional")
        if not self.dt > 0:
            raise ValidationError("trace dt must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def count(self):
        return self.values.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.count)

    @property
    def T(self):
        return self.dt * (self.count - 1)

    def with_values(self, values, **kw):
        return replace(self, values=np.asarray(values), **kw)

    def truncate(self, count):
        return self.with_values(self.values[:count])

    def __sub__(self, other):
        _check_aligned(self, other)
        return self.with_values(self.values - other.values)

    def __add__(self, other):
        _check_aligned(self, other)
        return self.with_values(self.values + other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def resample(self, dt, count):
        """Cubic interpolation onto a new uniform grid starting at t0."""
        from scipy.interpolate import CubicSpline
        t_new = self.t0 + dt * np.arange(count)
        if t_new[-1] > self.times[-1] + 1e-9 * max(1.0, self.T):
            raise ValidationError(
                f"cannot resample trace at {self.node!r} beyond its horizon {self.T:.6g}")
        t_new = np.minimum(t_new, self.times[-1])
        if self.count < 4:
            vals = np.interp(t_new, self.times, self.values)
        else:
            vals = CubicSpline(self.times, self.values)(t_new)
        return replace(self, dt=dt, values=vals)

    def project(self, dt, count):
        """Least-squares cubic spline with knots on the new grid, sampled there.

        For downsampling: every original sample contributes, so additive noise
        is averaged instead of aliased.  Falls back to interpolation when the
        new grid is not coarser.
        """
        from scipy.interpolate import make_lsq_spline
        if dt <= self.dt * (1 + 1e-12) or count < 4 or np.iscomplexobj(self.values):
            return self.resample(dt, count)
        t_new = self.t0 + dt * np.arange(count)
        if t_new[-1] > self.times[-1] + 1e-9 * max(1.0, self.T):
            raise ValidationError(
                f"cannot resample trace at {self.node!r} beyond its horizon {self.T:.6g}")
        t_new[-1] = min(t_new[-1], self.times[-1])
        x, y = _fit_points(self.times, self.values, t_new[-1])
        if x.size < 2 * (count + 2):
            return self.resample(dt, count)
        knots = np.r_[[t_new[0]] * 3, t_new, [t_new[-1]] * 3]
        spl = make_lsq_spline(x, y, knots, k=3)
        return replace(self, dt=dt, values=spl(t_new))


def projected_noise_norm(tr: TraceRecord, dt, count, sigma):
    """Expected L2(0, T) norm of white noise (std ``sigma`` per sample of ``tr``)
    after :meth:`TraceRecord.project` onto ``count`` samples of step ``dt``.

    The projection is linear, n -> B_c G^-1 B_f^T n with B-spline design
    matrices B_f (data times), B_c (new times) and G = B_f^T B_f, so the
    expectation is sigma^2 trace(W B_c G^-1 B_c^T) with W the trapezoid weights.
    """
    from scipy.interpolate import BSpline
    if dt <= tr.dt * (1 + 1e-12) or count < 4:
        return sigma * math.sqrt(dt * (count - 1))
    t_new = tr.t0 + dt * np.arange(count)
    knots = np.r_[[t_new[0]] * 3, t_new, [t_new[-1]] * 3]
    x, _ = _fit_points(tr.times, tr.values, t_new[-1])
    if x.size < 2 * (count + 2):
        return sigma * math.sqrt(dt * (count - 1))
    Bf = BSpline.design_matrix(x, knots, 3).toarray()
    Bc = BSpline.design_matrix(t_new, knots, 3).toarray()
    G = Bf.T @ Bf
    W = _trapz_weights(count, dt)
    return sigma * math.sqrt(np.trace(np.linalg.solve(G, (Bc * W[:, None]).T @ Bc)))


def _fit_points(times, values, t_end):
    """Samples strictly inside [t0, t_end) plus an interpolated sample at t_end."""
    from scipy.interpolate import CubicSpline
    tol = 1e-9 * (times[1] - times[0])
    inside = times < t_end - tol
    x, y = times[inside], values[inside]
    y_end = values[-1] if times[-1] <= t_end + tol else CubicSpline(times, values)(t_end)
    return np.r_[x, t_end], np.r_[y, y_end]


def _check_aligned(a, b):
    if a.count != b.count or not math.isclose(a.dt, b.dt, rel_tol=1e-12):
        raise ValidationError("trace records are on different time grids")


def _trapz_weights(n, dt):
    w = np.full(n, dt)
    if n > 1:
        w[0] = w[-1] = dt / 2
    else:
        w[:] = 0.0
    return w


def norm_L2_time(tr: TraceRecord) -> float:
    """Trapezoid-rule L2(0, T) norm."""
    w = _trapz_weights(tr.count, tr.dt)
    return float(np.sqrt(np.sum(w * np.abs(tr.values) ** 2)))


def time_derivative(tr: TraceRecord) -> np.ndarray:
    # centered inside, second-order one-sided at both ends
    if tr.count < 3:
        return np.gradient(tr.values, tr.dt)
    return np.gradient(tr.values, tr.dt, edge_order=2)


def norm_H1_time(tr: TraceRecord) -> float:
    """sqrt(|f|_L2^2 + |f'|_L2^2) with f' from centered differences."""
    if tr.count < 2:
        raise ValidationError("H1 norm needs at least two samples")
    w = _trapz_weights(tr.count, tr.dt)
    d = time_derivative(tr)
    return float(np.sqrt(np.sum(w * (np.abs(tr.values) ** 2 + np.abs(d) ** 2))))


def norm_L2_space(f, g=None) -> float:
    """Edge-wise trapezoid L2(Lambda) norm of a NetworkField (``g`` is accepted for symmetry)."""
    total = 0.0
    for e in f.grid.tree.edges:
        v = np.abs(np.asarray(f.values[e.id])) ** 2
        h = e.length / (v.size - 1)
        total += h * (v.sum() - 0.5 * (v[0] + v[-1]))
    return math.sqrt(total)


def norm_H1_space(f) -> float:
    """|| d/dx f ||_L2(Lambda), the H1_0 norm (derivatives by second-order differences)."""
    total = 0.0
    for e in f.grid.tree.edges:
        v = np.asarray(f.values[e.id])
        h = e.length / (v.size - 1)
        d = np.abs(np.gradient(v, h, edge_order=2)) ** 2
        total += h * (d.sum() - 0.5 * (d[0] + d[-1]))
    return math.sqrt(total)


@dataclass(frozen=True)
class NoiseSpec:
    level: float = 0.0
    seed: int = 0
    model: str = "additive-gaussian"

    def __post_init__(self):
        if self.level < 0:
            raise ValidationError("noise level must be non-negative")
        if self.model != "additive-gaussian":
            raise ValidationError(f"unsupported noise model {self.model!r}")


def rms(values):
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


def add_noise(tr: TraceRecord, spec: NoiseSpec) -> TraceRecord:
    """Additive zero-mean Gaussian noise with std = level * RMS(trace)."""
    if spec.level == 0:
        return tr.with_values(tr.values.copy())
    rng = np.random.default_rng(spec.seed)
    std = spec.level * rms(tr.values)
    if np.iscomplexobj(tr.values):
        noise = (rng.standard_normal(tr.count) + 1j * rng.standard_normal(tr.count)) * std / math.sqrt(2)
    else:
        noise = rng.standard_normal(tr.count) * std
    return tr.with_values(tr.values + noise)


TAIL_TOL = 1e-12


def required_tau_max(t_max, tail_tol=TAIL_TOL):
    """Smallest tau_max with exp(-tau_max^2 / (4 t)) <= tail_tol for all t <= t_max."""
    return math.sqrt(4.0 * t_max * math.log(1.0 / tail_tol))


def reznitzkaya(w: TraceRecord, t, tail_tol=TAIL_TOL) -> TraceRecord:
    """Heat-time trace from a wave-time trace:

        u(t) = 1 / (2 sqrt(pi t^3)) * int_0^inf tau exp(-tau^2 / (4 t)) w(tau) dtau

    evaluated by the trapezoid rule on ``w``'s grid.  ``t`` is a uniform grid
    (array) of positive times; the returned record starts at ``t[0]``.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0):
        raise ValidationError("heat times must be a non-empty array of positive values")
    need = required_tau_max(float(t.max()), tail_tol)
    tau = w.times
    if tau[-1] < need:
        raise ValidationError(
            f"wave trace ends at tau={tau[-1]:.4g}; need tau_max >= {need:.4g} for t <= {t.max():.4g}")
    wt = _trapz_weights(w.count, w.dt)
    kernel = tau[None, :] * np.exp(-tau[None, :] ** 2 / (4 * t[:, None]))
    vals = (kernel * (wt * w.values)[None, :]).sum(axis=1) / (2 * np.sqrt(np.pi * t ** 3))
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return TraceRecord(w.node, w.edge, w.kind, dt, vals, t0=float(t[0]))


# ---------------------------------------------------------------------------
# CSV

def format_float(x):
    return f"{x:.17g}"


def write_traces_csv(path, traces, names=None):
    """One column per trace, time in the first column; 17 significant digits."""
    traces = list(traces)
    if not traces:
        raise ValidationError("nothing to write")
    base = traces[0]
    for tr in traces[1:]:
        _check_aligned(base, tr)
    if names is None:
        names = [trace_name(tr) for tr in traces]
    is_c = any(np.iscomplexobj(tr.values) for tr in traces)
    header = ["t"]
    for n in names:
        header += [f"{n}.re", f"{n}.im"] if is_c else [n]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k, t in enumerate(base.times):
            row = [format_float(t)]
            for tr in traces:
                v = tr.values[k]
                row += [format_float(v.real), format_float(v.imag)] if is_c else [format_float(v)]
            wr.writerow(row)


def trace_name(tr):
    return f"{tr.node}:{tr.edge}:{tr.kind}" if tr.edge else f"{tr.node}:{tr.kind}"


def read_traces_csv(path, kind=None):
    """Inverse of :func:`write_traces_csv` for real-valued files.

    Column names of the form ``node:edge:kind`` are split back; a bare column
    name is taken as a node id with ``kind`` (argument) and no edge.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValidationError(f"{path}: first column must be 't'")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if data.shape[0] < 2:
        raise ValidationError(f"{path}: need at least two time samples")
    t = data[:, 0]
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise ValidationError(f"{path}: time column is not uniform")
    out = []
    for j, name in enumerate(header[1:], start=1):
        parts = name.split(":")
        if len(parts) == 3:
            node, edge, k = parts
        elif len(parts) == 2:
            node, k = parts
            edge = None
        else:
            node, edge, k = name, None, kind
        out.append(TraceRecord(node, edge or None, k, dt, data[:, j].copy(), t0=float(t[0])))
    return out
