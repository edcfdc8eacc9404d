"""Leaf-to-root recovery of the potential on a whole tree.

Stage by stage: every current leaf edge is inverted from the Cauchy data at
its leaf, its far-end data are computed, and once a node has all but one edge
recovered, continuity and the Kirchhoff law give the Cauchy data for the last
edge.  Each transfer shortens the usable horizon by the edge length.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._pool import pmap
from .edge_inverse import EdgeInverseProblem, InverseConfig, edge_transfer, recover_edge_potential
from .errors import ValidationError
from .fields import NetworkField, NetworkGrid, as_field, discretize
from .graph import MetricTree, PeelPlan, peel_schedule, require_valid
from .traces import (DIRICHLET, NEUMANN, TraceRecord, format_float, norm_H1_time, norm_L2_time,
                     read_traces_csv, write_traces_csv)
from .wave import solve_wave
from .diagnostics import extract_trace


class InconsistentDataError(ValidationError):
    pass


@dataclass
class Measurements:
    """Outward Neumann traces at the measured external nodes, the Dirichlet
    input at every external node and the initial data (fields on any grid of
    the same tree)."""
    neumann: dict            # node -> TraceRecord, every external node but the excluded one
    dirichlet: dict          # node -> TraceRecord, every external node
    u0: NetworkField
    u1: NetworkField = None

    def check(self, g: MetricTree, excluded: str):
        ext = set(g.external_nodes)
        if excluded not in ext:
            raise ValidationError(f"excluded node {excluded!r} is not an external node")
        missing = sorted(ext - {excluded} - set(self.neumann))
        if missing:
            raise ValidationError(f"missing Neumann measurements at {missing}")
        missing = sorted(ext - set(self.dirichlet))
        if missing:
            raise ValidationError(f"missing Dirichlet data at {missing}")
        recs = list(self.neumann.values()) + list(self.dirichlet.values())
        dt = recs[0].dt
        if any(not math.isclose(r.dt, dt, rel_tol=1e-9) for r in recs):
            raise ValidationError("measurement traces are on different time grids")
        if self.u0.grid.tree.edge_ids != g.edge_ids:
            raise ValidationError("initial data live on a different tree")

    @property
    def T(self):
        return min(r.T for r in list(self.neumann.values()) + list(self.dirichlet.values()))

    def edge_initial(self, edge, from_end=False):
        """(u0, u1) samples along ``edge``, reversed when measured from its end node."""
        u0 = np.asarray(self.u0.values[edge], dtype=float)
        u1 = np.zeros_like(u0) if self.u1 is None else np.asarray(self.u1.values[edge], dtype=float)
        if from_end:
            return u0[::-1].copy(), u1[::-1].copy()
        return u0, u1


@dataclass
class NodeData:
    """Cauchy data known at a node: Dirichlet value and the outward normal
    derivative along the edge still to be recovered."""
    dirichlet: TraceRecord
    neumann: TraceRecord
    low_confidence: bool = False
    discrepancy: float = 0.0           # max pairwise gap between Dirichlet estimates

    @property
    def horizon(self):
        return self.dirichlet.T


@dataclass
class EdgeResult:
    edge: str
    stage: int
    near: str
    far: str
    p: np.ndarray                      # samples in edge orientation (start -> end)
    horizon: float
    iterations: int
    converged: bool
    J: float
    grad_norm: float
    low_confidence: bool
    message: str = ""
    error: float = None                # relative L2 error vs truth, when supplied
    history: list = field(default_factory=list)   # (iter, J, grad_norm, step)


@dataclass
class PeelState:
    tree: MetricTree
    remaining: set                     # edges of the reduced graph
    known: dict                        # node -> NodeData
    recovered: dict = field(default_factory=dict)     # edge -> EdgeResult
    transfers: dict = field(default_factory=dict)     # node -> {edge: (Dirichlet, Neumann, low_conf)}
    stage: int = 0

    def check(self):
        for e in self.tree.edge_ids:
            if (e in self.remaining) == (e in self.recovered):
                raise AssertionError(f"edge {e!r} is both or neither recovered and remaining")


@dataclass
class PeelReport:
    excluded: str
    T: float
    stages: list                       # list of lists of edge ids
    edges: dict                        # edge -> EdgeResult
    nodes: dict                        # node -> NodeData (transferred)
    stage_horizons: list
    total_error: float = None

    def lines(self):
        out = [f"excluded: {self.excluded}", f"T: {self.T:.17g}", f"stages: {len(self.stages)}"]
        for k, (st, hz) in enumerate(zip(self.stages, self.stage_horizons), start=1):
            out.append(f"stage {k}: edges={','.join(st)} min-horizon={hz:.6g}")
        for e in sorted(self.edges):
            r = self.edges[e]
            err = "" if r.error is None else f" rel-error={r.error:.6g}"
            out.append(f"edge {e}: stage={r.stage} near={r.near} far={r.far} horizon={r.horizon:.6g} "
                       f"iters={r.iterations} converged={r.converged} J={r.J:.6g} "
                       f"low-confidence={r.low_confidence}{err}")
        for n in sorted(self.nodes):
            d = self.nodes[n]
            out.append(f"node {n}: horizon={d.horizon:.6g} dirichlet-discrepancy={d.discrepancy:.6g} "
                       f"low-confidence={d.low_confidence}")
        if self.total_error is not None:
            out.append(f"total rel-error: {self.total_error:.6g}")
        return out


def initial_state(g: MetricTree, meas: Measurements, excluded: str) -> PeelState:
    known = {}
    for q in g.external_nodes:
        if q == excluded:
            continue
        known[q] = NodeData(meas.dirichlet[q], meas.neumann[q])
    return PeelState(g, set(g.edge_ids), known)


def node_transfer(state: PeelState, P: str, tol: float = None) -> NodeData:
    """Cauchy data for the one unrecovered edge at internal node ``P``.

    Dirichlet: mean of the far-end values of the recovered edges (continuity),
    Neumann: minus the sum of their outward derivatives (Kirchhoff).  All
    traces are brought to the finest of their time steps and cut to the
    shortest horizon.
    """
    inc = [e.id for e in state.tree.incident(P)]
    open_edges = [e for e in inc if e in state.remaining]
    if len(open_edges) != 1:
        raise AssertionError(f"node {P!r} has {len(open_edges)} unrecovered edges; expected exactly one")
    known = state.transfers.get(P, {})
    missing = [e for e in inc if e not in open_edges and e not in known]
    if missing:
        raise AssertionError(f"node {P!r}: no transferred data from edges {missing}")
    recs = [known[e] for e in sorted(known) if e in inc]
    dt = min(d.dt for d, _, _ in recs)
    T = min(min(d.T, n.T) for d, n, _ in recs)
    count = int(math.floor(T / dt + 1e-9)) + 1
    dirs = np.array([d.resample(dt, count).values for d, _, _ in recs])
    neus = np.array([n.resample(dt, count).values for _, n, _ in recs])
    gap = float(np.max(np.abs(dirs[:, None, :] - dirs[None, :, :]))) if len(recs) > 1 else 0.0
    if tol is not None and gap > tol:
        raise InconsistentDataError(f"node {P!r}: Dirichlet estimates differ by {gap:.3g} > {tol:.3g}")
    low = any(lc for _, _, lc in recs)
    e_next = open_edges[0]
    return NodeData(TraceRecord(P, e_next, DIRICHLET, dt, dirs.mean(axis=0)),
                    TraceRecord(P, e_next, NEUMANN, dt, -neus.sum(axis=0)),
                    low_confidence=low, discrepancy=gap)


def _invert_step(state, meas, step, excluded, cfg, M):
    g = state.tree
    e = g.edge(step.edge)
    from_end = step.leaf == e.end
    data = state.known[step.leaf]
    u0, u1 = meas.edge_initial(e.id, from_end)
    far = meas.dirichlet[excluded] if step.interior == excluded else None
    count = data.dirichlet.count
    if far is not None:
        far = far.resample(data.dirichlet.dt, count) if not math.isclose(
            far.dt, data.dirichlet.dt, rel_tol=1e-12) else far.truncate(count)
    prob = EdgeInverseProblem(e.length, data.dirichlet, data.neumann.truncate(count), u0, u1,
                              far_dirichlet=far, M=M, check_horizon=False)
    if not prob.T > 2 * e.length:
        raise ValidationError(f"edge {e.id!r}: horizon {prob.T:.4g} left at {step.leaf!r} "
                              f"does not exceed 2 * length = {2 * e.length:.4g}")
    p_loc, rec = recover_edge_potential(prob, cfg)
    dir_far, neu_far = edge_transfer(p_loc, prob, step.interior, edge=e.id, cfl=cfg.cfl)
    p_edge = p_loc[::-1].copy() if from_end else p_loc
    low = data.low_confidence or not rec.converged
    res = EdgeResult(e.id, state.stage, step.leaf, step.interior, p_edge, prob.T, rec.iterations,
                     rec.converged, rec.J, rec.grad_norm, low, rec.message, history=list(rec.history))
    return res, (dir_far, neu_far, low)


def peel_tree(g: MetricTree, meas: Measurements, excluded: str, cfg: InverseConfig = None,
              truth=None, M: float = math.inf, consistency_tol: float = None, step_fn=None):
    """Recover the potential on every edge; returns ``(p_hat, PeelReport)``.

    ``p_hat`` is a NetworkField on a grid whose cell counts are the inversion
    grids of the edges.  ``truth`` (a NetworkField or ``{edge: samples}``)
    only feeds the error columns of the report.  ``step_fn`` replaces the
    per-edge inversion (same signature as ``_invert_step``); tests use it to
    exercise the orchestration on large trees without the numerics.
    """
    cfg = cfg or InverseConfig()
    require_valid(g)
    meas.check(g, excluded)
    plan: PeelPlan = peel_schedule(g, excluded)
    state = initial_state(g, meas, excluded)
    horizons = []
    for k, stage in enumerate(plan.stages, start=1):
        state.stage = k
        if not stage:
            raise AssertionError("stage with no recoverable edge: the graph contains a cycle")
        horizons.append(min(state.known[s.leaf].horizon for s in stage))
        step_fn = step_fn or _invert_step
        results = pmap(lambda s: step_fn(state, meas, s, excluded, cfg, M), stage)
        for step, (res, transfer) in sorted(zip(stage, results), key=lambda r: r[0].edge):
            state.recovered[step.edge] = res
            state.remaining.discard(step.edge)
            state.transfers.setdefault(step.interior, {})[step.edge] = transfer
        state.check()
        # nodes that just became determinable
        for P in sorted({s.interior for s in stage}):
            if P == excluded or g.node(P).kind != "internal":
                continue
            open_edges = [e.id for e in g.incident(P) if e.id in state.remaining]
            if len(open_edges) == 1 and P not in state.known:
                state.known[P] = node_transfer(state, P, consistency_tol)
    if state.remaining:
        raise AssertionError(f"edges left after the last stage: {sorted(state.remaining)}")

    cells = {e: state.recovered[e].p.size - 1 for e in g.edge_ids}
    grid = NetworkGrid(g, cells, 1.0, 1)
    p_hat = NetworkField(grid, {e: state.recovered[e].p for e in g.edge_ids})
    total = None
    if truth is not None:
        total = _attach_errors(state, grid, truth)
    nodes = {n: d for n, d in state.known.items() if g.node(n).kind == "internal"}
    report = PeelReport(excluded, meas.T, [[s.edge for s in st] for st in plan.stages],
                        state.recovered, nodes, horizons, total)
    return p_hat, report


def _attach_errors(state, grid, truth):
    if isinstance(truth, NetworkField):
        truth = truth.values
    num = den = 0.0
    for e in grid.tree.edges:
        x = grid.x(e.id)
        xs = np.linspace(0, e.length, len(truth[e.id]))
        tv = np.interp(x, xs, truth[e.id])
        w = np.full(x.size, grid.dx(e.id))
        w[0] = w[-1] = grid.dx(e.id) / 2
        d = np.sum(w * (state.recovered[e.id].p - tv) ** 2)
        n = np.sum(w * tv ** 2)
        state.recovered[e.id].error = math.sqrt(d / n) if n > 0 else math.sqrt(d)
        num += d
        den += n
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


# ---------------------------------------------------------------------------
# synthetic data and a posteriori checks

def synthesize_measurements(g: MetricTree, p, u0, u1=None, h=None, T=None, excluded=None,
                            target_dx=None, cfl=0.5):
    """Forward-solve on a fine grid and record what the peeling algorithm may use.

    Returns ``(Measurements, SolutionField)``.  ``h`` follows
    :func:`treewave.wave.boundary_series`; by default it holds u0 at each
    external node constant in time.
    """
    grid = discretize(g, target_dx, cfl, T)
    u0f = as_field(grid, u0, "u0")
    u1f = as_field(grid, u1, "u1")
    if h is None:
        h = {q: float(_node_value(u0f, q)) for q in g.external_nodes}
    sol = solve_wave(grid, p, u0f, u1f, h)
    return measurements_from_solution(sol, excluded, u1f), sol


def _node_value(f: NetworkField, node):
    e = f.grid.tree.incident(node)[0]
    return f.values[e.id][0] if e.start == node else f.values[e.id][-1]


def measurements_from_solution(sol, excluded=None, u1=None):
    g = sol.grid.tree
    neumann = {q: extract_trace(sol, q, NEUMANN) for q in g.external_nodes if q != excluded}
    dirichlet = {q: extract_trace(sol, q, DIRICHLET) for q in g.external_nodes}
    return Measurements(neumann, dirichlet, sol.snapshot(0), u1)


@dataclass
class Certificate:
    nodes: dict                        # node -> dict(L2, H1, rel_L2, rel_H1)
    max_rel_L2: float
    uninformative: bool

    def lines(self):
        out = [f"max rel-L2 mismatch: {self.max_rel_L2:.6g}", f"uninformative: {self.uninformative}"]
        for n in sorted(self.nodes):
            d = self.nodes[n]
            out.append(f"node {n}: " + " ".join(f"{k}={v:.6g}" for k, v in d.items()))
        return out


def residual_certificate(g: MetricTree, p_hat: NetworkField, meas: Measurements, target_dx=None,
                         cfl=0.5) -> Certificate:
    """Forward-solve with ``p_hat`` and compare the Neumann traces at the measured nodes."""
    T = meas.T
    grid = discretize(g, target_dx, cfl, T)
    p = NetworkField.from_samples(grid, p_hat.values)
    u0 = NetworkField.from_samples(grid, meas.u0.values)
    u1 = None if meas.u1 is None else NetworkField.from_samples(grid, meas.u1.values)
    h = {q: meas.dirichlet[q] for q in g.external_nodes}
    sol = solve_wave(grid, p, u0, u1, _series_on(grid, h))
    nodes = {}
    worst = 0.0
    scale = 0.0
    for q, tr in sorted(meas.neumann.items()):
        sim = extract_trace(sol, q, NEUMANN).resample(tr.dt, tr.count) if not math.isclose(
            sol.grid.dt, tr.dt, rel_tol=1e-12) else extract_trace(sol, q, NEUMANN)
        sim = sim.truncate(tr.count)
        diff = sim - tr
        l2, h1 = norm_L2_time(diff), norm_H1_time(diff)
        ref = norm_L2_time(tr)
        scale = max(scale, ref)
        rel = l2 / ref if ref > 1e-12 else (0.0 if l2 <= 1e-12 else math.inf)
        ref1 = norm_H1_time(tr)
        nodes[q] = {"L2": l2, "H1": h1, "rel_L2": rel,
                    "rel_H1": h1 / ref1 if ref1 > 1e-12 else (0.0 if h1 <= 1e-12 else math.inf)}
        worst = max(worst, rel)
    return Certificate(nodes, worst, scale <= 1e-12)


def _series_on(grid, h):
    """Boundary data given as TraceRecords, interpolated onto the grid's time axis."""
    from scipy.interpolate import CubicSpline
    return {q: CubicSpline(tr.times, tr.values)(grid.times) if isinstance(tr, TraceRecord) else tr
            for q, tr in h.items()}


# ---------------------------------------------------------------------------
# measurement directories: traces.csv + initial.txt

TRACES_FILE = "traces.csv"
INITIAL_FILE = "initial.txt"


def write_measurements(meas: Measurements, out_dir):
    """``traces.csv``: Dirichlet columns for every external node, Neumann for
    the measured ones.  ``initial.txt``: ``u0|u1 <edge> <n> <v0> ... <v(n-1)>``
    lines (uniform samples, endpoints included)."""
    os.makedirs(out_dir, exist_ok=True)
    recs = [meas.dirichlet[q] for q in sorted(meas.dirichlet)]
    recs += [meas.neumann[q] for q in sorted(meas.neumann)]
    write_traces_csv(os.path.join(out_dir, TRACES_FILE), recs)
    with open(os.path.join(out_dir, INITIAL_FILE), "w") as fh:
        for name, f in (("u0", meas.u0), ("u1", meas.u1)):
            if f is None:
                continue
            for e in f.grid.tree.edge_ids:
                v = np.asarray(f.values[e], dtype=float)
                fh.write(f"{name} {e} {v.size} " + " ".join(format_float(x) for x in v) + "\n")


def read_measurements(g: MetricTree, in_dir) -> Measurements:
    recs = read_traces_csv(os.path.join(in_dir, TRACES_FILE))
    dirichlet, neumann = {}, {}
    for r in recs:
        if r.kind == DIRICHLET:
            dirichlet[r.node] = r
        elif r.kind == NEUMANN:
            neumann[r.node] = r
        else:
            raise ValidationError(f"{TRACES_FILE}: unknown trace kind {r.kind!r} at {r.node!r}")
    samples = {"u0": {}, "u1": {}}
    path = os.path.join(in_dir, INITIAL_FILE)
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] not in samples or len(parts) < 3:
                raise ValidationError(f"{path}:{lineno}: expected 'u0|u1 <edge> <n> values...'")
            try:
                n = int(parts[2])
                vals = np.array([float(x) for x in parts[3:]])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if n < 2 or vals.size != n:
                raise ValidationError(f"{path}:{lineno}: declared {n} samples, found {vals.size}")
            samples[parts[0]][parts[1]] = vals
    missing = sorted(set(g.edge_ids) - set(samples["u0"]))
    if missing:
        raise ValidationError(f"{path}: no u0 samples for edges {missing}")

    def field_of(d):
        cells = {e: d[e].size - 1 for e in g.edge_ids}
        return NetworkField(NetworkGrid(g, cells, 1.0, 1), {e: d[e] for e in g.edge_ids})

    u1 = None
    if samples["u1"]:
        absent = sorted(set(g.edge_ids) - set(samples["u1"]))
        if absent:
            raise ValidationError(f"{path}: no u1 samples for edges {absent}")
        u1 = field_of(samples["u1"])
    return Measurements(neumann, dirichlet, field_of(samples["u0"]), u1)
