"""Piecewise-linear finite elements on metric graphs.

Every edge carries a uniform 1D mesh. Vertex nodes are shared between the
incident edges, so fields are continuous at vertices and the Kirchhoff
condition comes out as the natural condition of the energy form. Vertices in
the Dirichlet set own no degree of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .graph import GraphError, MetricGraph, RootedMetrics, Vertex

PINNED = -1


@dataclass(frozen=True)
class EdgeMesh:
    cells: int
    h: float
    dofs: np.ndarray  # global index per local node, PINNED where the vertex is Dirichlet


class GraphGrid:
    """Per-edge meshes plus the global DOF table.

    DOFs are numbered vertices first (in graph order), then interior nodes
    edge by edge.
    """

    def __init__(self, graph: MetricGraph, cells: Mapping, dirichlet: Iterable[Vertex] = ()):
        self.graph = graph
        self.dirichlet = frozenset(dirichlet)
        unknown = self.dirichlet - set(graph.vertices)
        if unknown:
            raise GraphError(f"Dirichlet vertices not in graph: {sorted(map(str, unknown))}")
        self.vertex_dof: dict = {}
        n = 0
        for v in graph.vertices:
            if v in self.dirichlet:
                self.vertex_dof[v] = PINNED
            else:
                self.vertex_dof[v] = n
                n += 1
        self.meshes: dict = {}
        for e in graph.edges:
            ne = int(cells[e.id])
            if ne < 1:
                raise GraphError(f"edge {e.id!r} needs at least one cell")
            dofs = np.empty(ne + 1, dtype=np.int64)
            dofs[0] = self.vertex_dof[e.i]
            dofs[-1] = self.vertex_dof[e.j]
            dofs[1:-1] = np.arange(n, n + ne - 1)
            n += ne - 1
            self.meshes[e.id] = EdgeMesh(ne, e.length / ne, dofs)
        self.size = n

    def __repr__(self):
        return (f"GraphGrid({len(self.graph.edges)} edges, {self.size} dofs, "
                f"{len(self.dirichlet)} pinned)")

    def compatible(self, other: "GraphGrid") -> bool:
        return self is other or (
            self.size == other.size
            and self.dirichlet == other.dirichlet
            and self.graph.edges == other.graph.edges
            and all(self.meshes[k].cells == other.meshes[k].cells for k in self.meshes)
        )

    @property
    def max_h(self) -> float:
        return max(m.h for m in self.meshes.values())

    def edge_coordinates(self, eid) -> np.ndarray:
        m = self.meshes[eid]
        return np.linspace(0.0, self.graph.edge(eid).length, m.cells + 1)

    def edge_values(self, values: np.ndarray, eid) -> np.ndarray:
        """Nodal values along an edge, zeros at pinned vertices."""
        dofs = self.meshes[eid].dofs
        out = np.zeros(dofs.shape, dtype=float)
        mask = dofs != PINNED
        out[mask] = values[dofs[mask]]
        return out

    def vertex_value(self, values: np.ndarray, v: Vertex) -> float:
        k = self.vertex_dof[v]
        return 0.0 if k == PINNED else float(values[k])

    def sample(self, fn: Callable[[object, np.ndarray], np.ndarray]) -> np.ndarray:
        """Interpolate ``fn(edge_id, x)`` at the DOFs; pinned nodes are skipped."""
        out = np.zeros(self.size)
        for e in self.graph.edges:
            x = self.edge_coordinates(e.id)
            vals = np.broadcast_to(np.asarray(fn(e.id, x), dtype=float), x.shape)
            dofs = self.meshes[e.id].dofs
            mask = dofs != PINNED
            out[dofs[mask]] = vals[mask]
        return out

    def radii(self, metrics: RootedMetrics) -> np.ndarray:
        """Distance from the root of every DOF."""
        g = self.graph
        return self.sample(lambda eid, x: np.minimum(
            metrics.r[g.edge(eid).i] + x, metrics.r[g.edge(eid).j] + g.edge(eid).length - x))

    def dof_labels(self) -> list[str]:
        """Human-readable location of every DOF."""
        labels = [""] * self.size
        for v, k in self.vertex_dof.items():
            if k != PINNED:
                labels[k] = f"vertex {v}"
        for eid, m in self.meshes.items():
            for loc in range(1, m.cells):
                labels[m.dofs[loc]] = f"edge {eid} x={loc * m.h:.6g}"
        return labels


def build_grid(G: MetricGraph, target_h: float, dirichlet: Iterable[Vertex] = (),
               cells: Mapping | None = None) -> GraphGrid:
    """Mesh every edge with ``max(1, round(l_e / target_h))`` cells unless ``cells`` overrides."""
    if target_h <= 0:
        raise GraphError("target_h must be positive")
    counts = {e.id: max(1, int(round(e.length / target_h))) for e in G.edges}
    if cells:
        counts.update(cells)
    return GraphGrid(G, counts, dirichlet)


def dirichlet_set(G: MetricGraph, bc: str, truncation: str = "flux") -> frozenset:
    """Pinned vertices for a boundary condition name.

    ``truncation`` decides what happens at artificial leaves: ``"flux"``
    leaves them free (zero flux), ``"zero"`` pins them.
    """
    if bc not in ("neumann", "dirichlet"):
        raise GraphError(f"unknown boundary condition {bc!r}")
    if truncation not in ("flux", "zero"):
        raise GraphError(f"unknown truncation treatment {truncation!r}")
    pinned = set(G.boundary) if bc == "dirichlet" else set()
    if truncation == "zero":
        pinned |= G.truncation
    return frozenset(pinned)


@dataclass(frozen=True)
class OperatorPair:
    M: sp.csr_matrix
    K: sp.csr_matrix
    lumped: bool = False

    @property
    def size(self) -> int:
        return self.M.shape[0]


def assemble(grid: GraphGrid, lumped: bool = False,
             weights: Mapping | None = None) -> OperatorPair:
    """Mass and stiffness matrices of the (optionally edge-weighted) energy form.

    ``weights`` maps edge ids to a constant factor multiplying both forms on
    that edge. Contributions are accumulated edge by edge, cell by cell, so the
    result does not depend on anything but the grid.
    """
    rows, cols, kv, mv = [], [], [], []
    for e in grid.graph.edges:
        m = grid.meshes[e.id]
        w = 1.0 if weights is None else float(weights[e.id])
        a, b = m.dofs[:-1], m.dofs[1:]
        k_diag, k_off = w / m.h, -w / m.h
        if lumped:
            m_diag, m_off = w * m.h / 2.0, 0.0
        else:
            m_diag, m_off = w * m.h / 3.0, w * m.h / 6.0
        for p, q, kval, mval in ((a, a, k_diag, m_diag), (b, b, k_diag, m_diag),
                                 (a, b, k_off, m_off), (b, a, k_off, m_off)):
            keep = (p != PINNED) & (q != PINNED)
            rows.append(p[keep])
            cols.append(q[keep])
            kv.append(np.full(keep.sum(), kval))
            mv.append(np.full(keep.sum(), mval))
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    n = grid.size
    K = sp.coo_matrix((np.concatenate(kv), (r, c)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((np.concatenate(mv), (r, c)), shape=(n, n)).tocsr()
    M.eliminate_zeros()
    return OperatorPair(M, K, lumped)


class GraphField:
    """Nodal values of a continuous piecewise-linear function on a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GraphGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} values, got shape {values.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid: GraphGrid, c: float) -> "GraphField":
        return cls(grid, np.full(grid.size, float(c)))

    @classmethod
    def from_function(cls, grid: GraphGrid, fn) -> "GraphField":
        return cls(grid, grid.sample(fn))

    @classmethod
    def from_radial(cls, grid: GraphGrid, metrics: RootedMetrics, fn) -> "GraphField":
        return cls(grid, np.asarray(fn(grid.radii(metrics)), dtype=float))

    def edge_values(self, eid) -> np.ndarray:
        return self.grid.edge_values(self.values, eid)

    def at_vertex(self, v) -> float:
        return self.grid.vertex_value(self.values, v)

    def copy(self) -> "GraphField":
        return GraphField(self.grid, self.values.copy())

    def __repr__(self):
        return f"GraphField(n={self.grid.size}, min={self.values.min():.4g}, max={self.values.max():.4g})"


def _outer_derivatives(grid: GraphGrid, values: np.ndarray, v: Vertex):
    """One-sided second-order outer derivatives of every edge at ``v``."""
    out = []
    for e in grid.graph.incident(v):
        m = grid.meshes[e.id]
        if m.cells < 2:
            raise GraphError(f"edge {e.id!r} has {m.cells} cell(s); the flux stencil needs 2")
        u = grid.edge_values(values, e.id)
        if e.j == v:
            out.append((e, (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * m.h)))
        if e.i == v:
            out.append((e, -(-3 * u[0] + 4 * u[1] - u[2]) / (2 * m.h)))
    return out


def flux_sum(u: GraphField, v: Vertex) -> float:
    """Sum over incident edges of the outer derivative at ``v``.

    Equals the inbound derivatives at ``j(e)`` minus the outbound derivatives
    at ``i(e)``; zero is the Kirchhoff condition.
    """
    return float(sum(d for _, d in _outer_derivatives(u.grid, u.values, v)))


def kirchhoff_residual(u: GraphField) -> float:
    """Largest Kirchhoff defect over interior, non-truncation, unpinned vertices."""
    g = u.grid.graph
    worst = 0.0
    for v in g.interior:
        if v in g.truncation or v in u.grid.dirichlet:
            continue
        worst = max(worst, abs(flux_sum(u, v)))
    return worst


def integral(u: GraphField, ops: OperatorPair) -> float:
    """``∫_G u dμ`` as ``1ᵀ M u``."""
    return float(np.sum(ops.M @ u.values))
