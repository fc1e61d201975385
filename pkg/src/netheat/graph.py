"""Metric graphs: data model, shortest-path metric, rooting, exhaustions,
regular trees and structural assumption checks.

A point on the graph is either a vertex id or a pair ``(edge_id, x)`` with
``0 <= x <= l_e``; ``x = 0`` is the initial vertex ``i(e)`` and ``x = l_e``
the final vertex ``j(e)``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

Vertex = Hashable


class GraphError(ValueError):
    """Invalid input to a graph operation."""


@dataclass(frozen=True)
class Edge:
    id: Hashable
    i: Vertex
    j: Vertex
    length: float

    def other(self, v: Vertex) -> Vertex:
        return self.j if v == self.i else self.i

    def flipped(self) -> "Edge":
        return Edge(self.id, self.j, self.i, self.length)


@dataclass(frozen=True)
class MetricGraph:
    """A metric graph ``(E, V, i, j)`` with finite edge lengths.

    Parameters
    ----------
    edges : sequence of Edge
        Directed edges; the direction only fixes the edge coordinate.
    vertices : sequence of vertex ids, optional
        Extra (possibly isolated) vertices. Endpoints of edges are always
        included.
    root : vertex id, optional
        Distinguished vertex (tree root / exhaustion center).
    truncation : iterable of vertex ids
        Artificial boundary left over from cutting an infinite graph. These
        vertices have degree one but are not part of the physical boundary.

    Construction does not validate; call :func:`validate_graph`.
    """

    edges: tuple[Edge, ...]
    vertices: tuple[Vertex, ...] = ()
    root: Vertex | None = None
    truncation: frozenset = frozenset()
    _incident: dict = field(init=False, repr=False, compare=False)
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = tuple(self.edges)
        seen = list(self.vertices)
        known = set(seen)
        for e in edges:
            for v in (e.i, e.j):
                if v not in known:
                    known.add(v)
                    seen.append(v)
        incident: dict = {v: [] for v in seen}
        for e in edges:
            incident[e.i].append(e)
            if e.j != e.i:
                incident[e.j].append(e)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "vertices", tuple(seen))
        object.__setattr__(self, "truncation", frozenset(self.truncation))
        object.__setattr__(self, "_incident", incident)
        object.__setattr__(self, "_by_id", {e.id: e for e in edges})

    @classmethod
    def from_edges(cls, triples: Iterable[tuple], **kwargs) -> "MetricGraph":
        """Build from ``(id, i, j, length)`` tuples."""
        return cls(tuple(Edge(*t) for t in triples), **kwargs)

    def edge(self, eid) -> Edge:
        try:
            return self._by_id[eid]
        except KeyError:
            raise GraphError(f"unknown edge {eid!r}") from None

    def incident(self, v: Vertex) -> list[Edge]:
        return list(self._incident[v])

    def degree(self, v: Vertex) -> int:
        return len(self._incident[v])

    def in_degree(self, v: Vertex) -> int:
        """Number of edges with ``j(e) = v``."""
        return sum(1 for e in self._incident[v] if e.j == v)

    def out_degree(self, v: Vertex) -> int:
        """Number of edges with ``i(e) = v``."""
        return sum(1 for e in self._incident[v] if e.i == v)

    @property
    def leaves(self) -> frozenset:
        """All degree-one vertices, physical or artificial."""
        return frozenset(v for v in self.vertices if self.degree(v) == 1)

    @property
    def boundary(self) -> frozenset:
        """Physical boundary: degree-one vertices that are not truncation leaves."""
        return self.leaves - self.truncation

    @property
    def interior(self) -> frozenset:
        return frozenset(self.vertices) - self.leaves

    def subgraph(self, vertices: Iterable[Vertex], edge_ids: Iterable,
                 truncation: Iterable[Vertex] = ()) -> "MetricGraph":
        """Restriction to the given vertices/edges.

        Vertices that lose incident edges become truncation vertices unless
        they belong to the physical boundary of ``self``.
        """
        vs = [v for v in self.vertices if v in set(vertices)]
        keep = set(edge_ids)
        es = tuple(e for e in self.edges if e.id in keep)
        sub = MetricGraph(es, tuple(vs), root=self.root)
        cut = {v for v in vs if sub.degree(v) < self.degree(v)}
        trunc = (cut | set(truncation) | (self.truncation & set(vs))) - self.boundary
        return MetricGraph(es, tuple(vs), root=self.root, truncation=frozenset(trunc))


def validate_graph(G: MetricGraph) -> list[str]:
    """Check the standing structural assumptions; returns a list of violations."""
    problems = []
    ids = [e.id for e in G.edges]
    if len(set(ids)) != len(ids):
        problems.append("duplicate edge ids")
    for e in G.edges:
        if e.i == e.j:
            problems.append(f"loop at edge {e.id!r}")
        if not (e.length > 0 and math.isfinite(e.length)):
            problems.append(f"non-positive or infinite length at edge {e.id!r}")
    for v in G.vertices:
        if G.degree(v) == 0:
            problems.append(f"isolated vertex {v!r}")
    if not G.vertices:
        problems.append("empty graph")
    elif len(_reachable(G, G.vertices[0])) != len(G.vertices):
        problems.append("not connected")
    return problems


def _reachable(G: MetricGraph, start: Vertex) -> set:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for e in G._incident[v]:
            w = e.other(v)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def _dijkstra(G: MetricGraph, sources: dict, target: Vertex | None = None,
              cutoff: float = math.inf) -> dict:
    """Shortest distances from weighted sources ``{vertex: offset}``."""
    dist = {}
    heap = [(d, n, v) for n, (v, d) in enumerate(sources.items())]
    heapq.heapify(heap)
    counter = len(heap)
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in dist:
            continue
        dist[v] = d
        if v == target or d > cutoff:
            break
        for e in G._incident[v]:
            w = e.other(v)
            if w not in dist:
                counter += 1
                heapq.heappush(heap, (d + e.length, counter, w))
    return dist


def _anchors(G: MetricGraph, p) -> tuple[dict, tuple | None]:
    """Distances from point ``p`` to the vertices bounding it."""
    if isinstance(p, tuple) and len(p) == 2 and p[0] in G._by_id:
        e = G.edge(p[0])
        x = float(p[1])
        if not (0.0 <= x <= e.length):
            raise GraphError(f"coordinate {x} outside [0, {e.length}] on edge {e.id!r}")
        src = {e.i: x}
        src[e.j] = min(src.get(e.j, math.inf), e.length - x)
        return src, (e.id, x)
    if p in G._incident:
        return {p: 0.0}, None
    raise GraphError(f"not a point of the graph: {p!r}")


def distance(G: MetricGraph, x, y) -> float:
    """Shortest-path distance between two points of ``G``."""
    sx, ex = _anchors(G, x)
    sy, ey = _anchors(G, y)
    best = math.inf
    if ex is not None and ey is not None and ex[0] == ey[0]:
        best = abs(ex[1] - ey[1])
    dist = _dijkstra(G, sx)
    for v, off in sy.items():
        if v in dist:
            best = min(best, dist[v] + off)
    return best


def vertex_distances(G: MetricGraph, v0: Vertex) -> dict:
    return _dijkstra(G, {v0: 0.0})


@dataclass(frozen=True)
class RootedMetrics:
    root: Vertex
    r: dict
    jump_size: float

    def point_radius(self, G: MetricGraph, eid, x: float) -> float:
        e = G.edge(eid)
        return min(self.r[e.i] + x, self.r[e.j] + e.length - x)


def orient_by_root(G: MetricGraph, v0: Vertex) -> tuple[MetricGraph, RootedMetrics]:
    """Orient every edge so that ``r(i(e)) <= r(j(e))`` with ``r = d(., v0)``."""
    if v0 not in G._incident:
        raise GraphError(f"unknown root {v0!r}")
    r = vertex_distances(G, v0)
    edges = tuple(e.flipped() if r[e.i] > r[e.j] else e for e in G.edges)
    oriented = MetricGraph(edges, G.vertices, root=v0, truncation=G.truncation)
    s = 0.0
    for e in edges:
        d = _dijkstra(G, {e.i: 0.0}, target=e.j, cutoff=e.length).get(e.j, e.length)
        s = max(s, min(d, e.length))
    return oriented, RootedMetrics(v0, r, s)


@dataclass(frozen=True)
class Level:
    radius: float
    vertices: frozenset
    sphere: frozenset
    edges: frozenset
    interior_violations: tuple = ()


@dataclass(frozen=True)
class Exhaustion:
    radii: tuple[float, ...]
    levels: tuple[Level, ...]
    c0: float

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, n) -> Level:
        return self.levels[n]

    def subgraph(self, G: MetricGraph, n: int) -> MetricGraph:
        """``G_n`` with the sphere ``S_n`` (minus the physical boundary) marked as truncation."""
        lvl = self.levels[n]
        return G.subgraph(lvl.vertices, lvl.edges, truncation=lvl.sphere - G.boundary)


def exhaust(G: MetricGraph, metrics: RootedMetrics, radii: Sequence[float],
            c0: float = 2.0) -> Exhaustion:
    """Nested subgraphs ``G_n = (V_n, E_n)`` with spheres ``S_n`` at radii ``R_n``."""
    if c0 <= 1:
        raise GraphError("c0 must exceed 1")
    radii = tuple(float(R) for R in radii)
    for a, b in zip(radii, radii[1:]):
        gap = b - a
        if not (1.0 / c0 <= gap <= c0):
            raise GraphError(f"radii spacing R={a} -> R={b} violates 1/c0 <= gap <= c0 (c0={c0})")
    levels = []
    for R in radii:
        tol = 1e-9 * R
        V = frozenset(v for v in G.vertices if metrics.r[v] <= R + tol)
        S = frozenset(v for v in V if abs(metrics.r[v] - R) <= tol)
        E = frozenset(e.id for e in G.edges if e.i in V and e.j in V)
        bad = tuple(
            (v, e.id)
            for v in G.vertices if v in V and v not in S
            for e in G.incident(v) if e.id not in E
        )
        levels.append(Level(R, V, S, E, bad))
    return Exhaustion(radii, tuple(levels), c0)


@dataclass
class H2Report:
    part_i: bool
    part_i_witnesses: list
    level_sums: list
    level_bounds: list
    part_ii: bool
    fitted_theta: float

    @property
    def passed(self) -> bool:
        return self.part_i and self.part_ii


def check_H2(G: MetricGraph, ex: Exhaustion, C: float, theta: float,
             beta_exp: float) -> H2Report:
    """Check in-degree dominance and the growth bound on sphere in-degrees.

    Part (i) is checked at non-leaf vertices. Truncation leaves are an
    artefact of materializing a finite piece of an infinite graph, and at a
    physical boundary leaf the inequality is replaced by the boundary
    condition.
    """
    if not 0 <= beta_exp <= 2:
        raise GraphError("beta_exp must lie in [0, 2]")
    witnesses = [v for v in G.vertices
                 if G.degree(v) > 1 and G.in_degree(v) > G.out_degree(v)]
    sums, bounds = [], []
    fitted = -math.inf
    for lvl in ex.levels:
        s = sum(G.in_degree(v) for v in lvl.sphere)
        Rb = lvl.radius ** beta_exp
        sums.append(s)
        bounds.append(C * math.exp(theta * Rb))
        if s > 0 and Rb > 0:
            fitted = max(fitted, math.log(s / C) / Rb)
    part_ii = all(s <= b * (1 + 1e-12) for s, b in zip(sums, bounds))
    return H2Report(not witnesses, witnesses, sums, bounds, part_ii, fitted)


@dataclass(frozen=True)
class RegularTreeSpec:
    """Generating sequences of a regular tree.

    ``branching[n]`` is the number of edges leaving a generation-``n`` vertex
    and ``radii[n]`` the distance of generation ``n`` from the root.
    """

    branching: tuple[int, ...]
    radii: tuple[float, ...]
    depth: int | None = None

    def __post_init__(self):
        b = tuple(int(x) for x in self.branching)
        rho = tuple(float(x) for x in self.radii)
        depth = len(rho) - 1 if self.depth is None else int(self.depth)
        object.__setattr__(self, "branching", b)
        object.__setattr__(self, "radii", rho)
        object.__setattr__(self, "depth", depth)
        if depth < 1:
            raise GraphError("tree depth must be at least 1")
        if len(rho) < depth + 1 or len(b) < depth:
            raise GraphError("generating sequences shorter than the requested depth")
        if rho[0] != 0.0 or any(q <= p for p, q in zip(rho, rho[1:])):
            raise GraphError("radii must start at 0 and increase strictly")
        if b[0] != 1 or any(x < 2 for x in b[1:]):
            raise GraphError("branching must satisfy b_0 = 1 and b_n >= 2")

    @classmethod
    def homogeneous(cls, b: int, r: float, depth: int) -> "RegularTreeSpec":
        return cls((1,) + (b,) * depth, tuple(n * r for n in range(depth + 1)), depth)

    def generation_size(self, n: int) -> int:
        """Number of vertices of generation ``n`` (``b_0 ... b_{n-1}``)."""
        return math.prod(self.branching[:n])


def tree_vertex(n: int, k: int) -> str:
    return "O" if n == 0 else f"v{n}.{k}"


def tree_edge(n: int, k: int) -> str:
    return f"e{n}.{k}"


def build_regular_tree(spec: RegularTreeSpec) -> MetricGraph:
    """Materialize generations ``0..depth`` of a regular tree, oriented away from the root.

    Generation-``n`` edge ``k`` joins parent ``k // b_{n-1}`` to vertex ``k``.
    The deepest generation is recorded as truncation.
    """
    edges = []
    for n in range(1, spec.depth + 1):
        length = spec.radii[n] - spec.radii[n - 1]
        b_prev = spec.branching[n - 1]
        for k in range(spec.generation_size(n)):
            edges.append(Edge(tree_edge(n, k), tree_vertex(n - 1, k // b_prev),
                              tree_vertex(n, k), length))
    leaves = frozenset(tree_vertex(spec.depth, k)
                       for k in range(spec.generation_size(spec.depth)))
    return MetricGraph(tuple(edges), ("O",), root="O", truncation=leaves)


def branching_function(spec: RegularTreeSpec, rho: float) -> int:
    """Number of tree points at distance ``rho`` from the root (left-continuous)."""
    if not 0 < rho <= spec.radii[spec.depth]:
        raise GraphError(f"rho={rho} outside (0, {spec.radii[spec.depth]}]")
    for n in range(1, spec.depth + 1):
        if rho <= spec.radii[n]:
            return spec.generation_size(n)
    raise AssertionError("unreachable")


def branching_jump(spec: RegularTreeSpec, n: int) -> int:
    """Jump of the branching function at ``rho_n``."""
    if not 1 <= n < len(spec.branching):
        raise GraphError(f"b_{n} unknown")
    return spec.generation_size(n) * (spec.branching[n] - 1)
