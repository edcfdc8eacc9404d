"""Tree-shaped metric networks: model, text format, validation, peel schedule.

Edges are oriented from ``start`` (the initial node I(e)) to ``end`` (the
terminal node T(e)); the arclength coordinate ``s`` on an edge runs from 0 at
``start`` to ``length`` at ``end``.
"""
from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import NetworkFormatError, ValidationError

INTERNAL = "internal"
EXTERNAL = "external"


@dataclass(frozen=True)
class Node:
    id: str
    kind: str


@dataclass(frozen=True)
class Edge:
    id: str
    start: str
    end: str
    length: float

    def other(self, node_id):
        if node_id == self.start:
            return self.end
        if node_id == self.end:
            return self.start
        raise ValidationError(f"node {node_id!r} is not an endpoint of edge {self.id!r}")


@dataclass(frozen=True)
class MetricTree:
    nodes: tuple
    edges: tuple
    # edge id -> tuple of uniform samples on [0, length], endpoints included
    potentials: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(
            self, "potentials",
            {k: tuple(float(v) for v in vals) for k, vals in self.potentials.items()})

    def __hash__(self):
        return hash((self.nodes, self.edges, tuple(sorted(self.potentials.items()))))

    # lookups ------------------------------------------------------------
    def node(self, node_id) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def edge(self, edge_id) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    @property
    def node_ids(self):
        return [n.id for n in self.nodes]

    @property
    def edge_ids(self):
        return [e.id for e in self.edges]

    @property
    def internal_nodes(self):
        return [n.id for n in self.nodes if n.kind == INTERNAL]

    @property
    def external_nodes(self):
        return [n.id for n in self.nodes if n.kind == EXTERNAL]

    def incident(self, node_id):
        """Edges touching ``node_id``, in declaration order."""
        return [e for e in self.edges if node_id in (e.start, e.end)]

    def degree(self, node_id):
        return sum((e.start == node_id) + (e.end == node_id) for e in self.edges)

    @property
    def N(self):
        """Index of the last edge: the tree has N+1 edges."""
        return len(self.edges) - 1

    @property
    def N1(self):
        return len(self.internal_nodes)

    @property
    def N2(self):
        return len(self.external_nodes)

    @property
    def total_length(self):
        return math.fsum(e.length for e in self.edges)

    def digest(self):
        return hashlib.sha256(serialize_network(self).encode()).hexdigest()[:16]

    def with_potentials(self, potentials):
        return MetricTree(self.nodes, self.edges, dict(potentials))

    def distances_from(self, node_id):
        """Metric distance from ``node_id`` to every node (tree assumed)."""
        dist = {node_id: 0.0}
        stack = [node_id]
        while stack:
            cur = stack.pop()
            for e in self.incident(cur):
                nxt = e.other(cur)
                if nxt not in dist:
                    dist[nxt] = dist[cur] + e.length
                    stack.append(nxt)
        return dist


# ---------------------------------------------------------------------------
# text format

def parse_network(text: str) -> MetricTree:
    """Parse the line-oriented network format.

    Grammar (``#`` starts a comment)::

        node <id> internal|external
        edge <id> <from-id> <to-id> <length>
        potential <edge-id> <n> <v0> ... <v(n-1)>
    """
    nodes, edges, potentials = [], [], {}
    node_ids, edge_ids = set(), set()
    pending_pot = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        if key == "node":
            if len(tok) != 3 or tok[2] not in (INTERNAL, EXTERNAL):
                raise NetworkFormatError("expected 'node <id> internal|external'", lineno)
            if tok[1] in node_ids:
                raise NetworkFormatError(f"duplicate node id {tok[1]!r}", lineno)
            node_ids.add(tok[1])
            nodes.append(Node(tok[1], tok[2]))
        elif key == "edge":
            if len(tok) != 5:
                raise NetworkFormatError("expected 'edge <id> <from> <to> <length>'", lineno)
            if tok[1] in edge_ids:
                raise NetworkFormatError(f"duplicate edge id {tok[1]!r}", lineno)
            length = _parse_float(tok[4], lineno)
            if not (math.isfinite(length) and length > 0):
                raise NetworkFormatError(f"edge {tok[1]!r} has non-positive length {tok[4]}", lineno)
            edge_ids.add(tok[1])
            edges.append((Edge(tok[1], tok[2], tok[3], length), lineno))
        elif key == "potential":
            if len(tok) < 3:
                raise NetworkFormatError("expected 'potential <edge-id> <n> <values...>'", lineno)
            try:
                n = int(tok[2])
            except ValueError:
                raise NetworkFormatError(f"bad sample count {tok[2]!r}", lineno) from None
            if n < 2 or len(tok) != 3 + n:
                raise NetworkFormatError(
                    f"potential needs n >= 2 and exactly n values (n={n}, got {len(tok) - 3})",
                    lineno)
            if tok[1] in potentials:
                raise NetworkFormatError(f"duplicate potential for edge {tok[1]!r}", lineno)
            potentials[tok[1]] = [_parse_float(v, lineno) for v in tok[3:]]
            pending_pot.append((tok[1], lineno))
        else:
            raise NetworkFormatError(f"unknown keyword {key!r}", lineno)
    for e, lineno in edges:
        for end in (e.start, e.end):
            if end not in node_ids:
                raise NetworkFormatError(f"edge {e.id!r} references unknown node {end!r}", lineno)
    for eid, lineno in pending_pot:
        if eid not in edge_ids:
            raise NetworkFormatError(f"potential for unknown edge {eid!r}", lineno)
    return MetricTree(tuple(nodes), tuple(e for e, _ in edges), potentials)


def _parse_float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise NetworkFormatError(f"cannot parse number {tok!r}", lineno) from None


def serialize_network(g: MetricTree) -> str:
    out = []
    for n in g.nodes:
        out.append(f"node {n.id} {n.kind}")
    for e in g.edges:
        out.append(f"edge {e.id} {e.start} {e.end} {e.length!r}")
    for e in g.edges:
        if e.id in g.potentials:
            vals = g.potentials[e.id]
            out.append(f"potential {e.id} {len(vals)} " + " ".join(repr(float(v)) for v in vals))
    return "\n".join(out) + "\n"


def read_network(path) -> MetricTree:
    with open(path) as fh:
        return parse_network(fh.read())


def write_network(g: MetricTree, path):
    with open(path, "w") as fh:
        fh.write(serialize_network(g))


# ---------------------------------------------------------------------------
# validation

def validate_tree(g: MetricTree) -> list:
    """Return a list of human-readable violations; empty means ``g`` is a valid tree."""
    problems = []
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        problems.append("duplicate node ids")
    eids = [e.id for e in g.edges]
    if len(set(eids)) != len(eids):
        problems.append("duplicate edge ids")
    known = set(ids)
    for n in g.nodes:
        if n.kind not in (INTERNAL, EXTERNAL):
            problems.append(f"node {n.id}: unknown kind {n.kind!r}")
    good_edges = []
    for e in g.edges:
        if e.start not in known or e.end not in known:
            problems.append(f"edge {e.id}: dangling endpoint")
            continue
        if not (math.isfinite(e.length) and e.length > 0):
            problems.append(f"edge {e.id}: non-positive length {e.length}")
        if e.start == e.end:
            problems.append(f"cycle detected: self-loop {e.id}")
            continue
        good_edges.append(e)
    if not g.nodes:
        problems.append("empty network")
        return problems

    # union-find over nodes; an edge joining one component twice closes a cycle
    parent = {i: i for i in ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    forest = defaultdict(list)
    for e in good_edges:
        ra, rb = find(e.start), find(e.end)
        if ra == rb:
            cyc = _forest_path(forest, e.start, e.end) + [e.id]
            problems.append("cycle detected: " + " ".join(sorted(cyc)))
        else:
            parent[ra] = rb
            forest[e.start].append((e.end, e.id))
            forest[e.end].append((e.start, e.id))
    roots = {find(i) for i in ids}
    if len(roots) > 1:
        problems.append(f"not connected ({len(roots)} components)")
    if len(g.edges) != len(g.nodes) - 1 and not any(p.startswith("cycle") for p in problems) \
            and len(roots) == 1:
        problems.append("edge count is not node count - 1")

    deg = defaultdict(int)
    for e in g.edges:
        deg[e.start] += 1
        deg[e.end] += 1
    for n in g.nodes:
        d = deg[n.id]
        if n.kind == EXTERNAL and d != 1:
            problems.append(f"external node {n.id} has degree {d} (expected 1)")
        if n.kind == INTERNAL and d < 2:
            problems.append(f"internal node {n.id} has degree {d} (expected >= 2)")
    for eid, vals in g.potentials.items():
        if eid not in set(eids):
            problems.append(f"potential for unknown edge {eid}")
        elif len(vals) < 2:
            problems.append(f"potential for edge {eid} has fewer than 2 samples")
    return problems


def _forest_path(forest, a, b):
    """Edge ids on the unique forest path a -> b."""
    prev = {a: None}
    stack = [a]
    while stack:
        cur = stack.pop()
        if cur == b:
            break
        for nxt, eid in forest[cur]:
            if nxt not in prev:
                prev[nxt] = (cur, eid)
                stack.append(nxt)
    path = []
    cur = b
    while prev.get(cur) is not None:
        cur, eid = prev[cur]
        path.append(eid)
    return path


def require_valid(g: MetricTree):
    problems = validate_tree(g)
    if problems:
        raise ValidationError("invalid tree: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# peel schedule

@dataclass(frozen=True)
class PeelStep:
    edge: str
    leaf: str       # endpoint that is external in the current reduced graph
    interior: str   # the other endpoint, where data gets transferred


@dataclass(frozen=True)
class PeelPlan:
    excluded: str
    stages: tuple   # tuple of tuples of PeelStep

    @property
    def n_stages(self):
        return len(self.stages)

    def edges(self):
        return [s.edge for stage in self.stages for s in stage]


def peel_schedule(g: MetricTree, excluded: str) -> PeelPlan:
    """Stage the leaf-removal of ``g`` starting from every external node but ``excluded``.

    Each stage removes, all at once, the edges whose endpoint has degree one
    in the current reduced graph (that endpoint not being ``excluded``).
    """
    require_valid(g)
    if excluded not in g.external_nodes:
        raise ValidationError(f"excluded node {excluded!r} is not an external node")
    remaining = {e.id: e for e in g.edges}
    deg = defaultdict(int)
    for e in g.edges:
        deg[e.start] += 1
        deg[e.end] += 1
    stages = []
    while remaining:
        stage = []
        for eid in sorted(remaining):
            e = remaining[eid]
            leaves = [v for v in (e.start, e.end) if deg[v] == 1 and v != excluded]
            if not leaves:
                continue
            if len(leaves) == 2:
                # a lone edge not containing the excluded node: impossible on a connected tree
                raise ValidationError(f"edge {eid} is disconnected from {excluded!r}")
            stage.append(PeelStep(eid, leaves[0], e.other(leaves[0])))
        if not stage:
            raise ValidationError("remaining edges form a closed cycle: "
                                  + " ".join(sorted(remaining)))
        for s in stage:
            del remaining[s.edge]
            deg[s.leaf] -= 1
            deg[s.interior] -= 1
        stages.append(tuple(stage))
    return PeelPlan(excluded, tuple(stages))


# ---------------------------------------------------------------------------
# stock networks

def tree_from_edges(edge_list, potentials=None) -> MetricTree:
    """Build a tree from ``(id, start, end, length)`` tuples; node kinds follow degrees."""
    deg = defaultdict(int)
    order = []
    for _, a, b, _ in edge_list:
        for v in (a, b):
            if v not in deg:
                order.append(v)
            deg[v] += 1
    nodes = tuple(Node(v, EXTERNAL if deg[v] == 1 else INTERNAL) for v in order)
    edges = tuple(Edge(eid, a, b, float(ln)) for eid, a, b, ln in edge_list)
    return MetricTree(nodes, edges, potentials or {})


def single_edge(length=1.0) -> MetricTree:
    return tree_from_edges([("e0", "A", "B", length)])


def star_tree(lengths=(1.0, 1.0, 1.0), center="P") -> MetricTree:
    """Star with edges oriented from the center to leaves Q1, Q2, ..."""
    return tree_from_edges([(f"e{i + 1}", center, f"Q{i + 1}", ln)
                            for i, ln in enumerate(lengths)])


# Lengths are a quarter of the Euclidean segment lengths in the usual drawing
# of the ten-edge, four-junction, seven-leaf example network.
FIGURE1_EDGES = (
    ("e0", "Q7", "P1", 0.25 * math.hypot(2, 1)),
    ("e1", "P1", "P2", 0.25 * math.hypot(1, 1)),
    ("e2", "P2", "Q1", 0.25 * 2.0),
    ("e3", "P2", "Q2", 0.25 * math.hypot(1, 2)),
    ("e4", "P2", "Q3", 0.25 * math.hypot(2, 1)),
    ("e5", "P1", "P3", 0.25 * 2.0),
    ("e6", "P3", "Q4", 0.25 * math.hypot(2.5, 3)),
    ("e7", "P3", "P4", 0.25 * math.hypot(2, 1)),
    ("e8", "P4", "Q5", 0.25 * math.hypot(1, 1)),
    ("e9", "P4", "Q6", 0.25 * math.hypot(0.98, 0.36)),
)


def figure1_tree(lengths=None) -> MetricTree:
    """The 10-edge example network: N=9, N1=4 (P1..P4), N2=7 (Q1..Q7)."""
    rows = FIGURE1_EDGES
    if lengths is not None:
        rows = tuple((eid, a, b, lengths[i]) for i, (eid, a, b, _) in enumerate(rows))
    return tree_from_edges(rows)


def random_tree(n_edges, rng=None, min_length=0.5, max_length=1.5) -> MetricTree:
    """Random recursive tree; every new vertex hangs off a uniformly chosen older one.

    Edge orientations are randomized so orientation handling gets exercised.
    """
    rng = np.random.default_rng(rng)
    rows = []
    for k in range(1, n_edges + 1):
        parent = int(rng.integers(0, k))
        a, b = f"v{parent}", f"v{k}"
        if rng.random() < 0.5:
            a, b = b, a
        rows.append((f"e{k - 1:03d}", a, b, float(rng.uniform(min_length, max_length))))
    return tree_from_edges(rows)


def relabel(g: MetricTree, node_map, edge_map) -> MetricTree:
    nodes = tuple(Node(node_map[n.id], n.kind) for n in g.nodes)
    edges = tuple(Edge(edge_map[e.id], node_map[e.start], node_map[e.end], e.length)
                  for e in g.edges)
    pots = {edge_map[k]: v for k, v in g.potentials.items()}
    return MetricTree(nodes, edges, pots)


def add_edge(g: MetricTree, edge_id, start, end, length) -> MetricTree:
    """Copy of ``g`` with one more edge between existing nodes (test helper for cycles)."""
    return MetricTree(g.nodes, g.edges + (Edge(edge_id, start, end, length),), g.potentials)
