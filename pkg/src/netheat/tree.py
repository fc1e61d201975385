"""Radial reduction of problems on regular trees to a weighted problem on a line.

A symmetric function on a regular tree depends only on the distance ``ρ``
from the root. Its profile ``z(ρ)`` solves a one-dimensional problem whose
energy forms carry the branching function ``β``. With ``β`` constant on each
generation interval, the natural interface condition of the weighted form is
``z'(ρ_n⁻) = b_n z'(ρ_n⁺)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import Nonlinearity, Trajectory, evolve
from .fem import (PINNED, GraphField, GraphGrid, OperatorPair, _outer_derivatives, assemble,
                  dirichlet_set)
from .graph import (Edge, GraphError, MetricGraph, RegularTreeSpec, build_regular_tree,
                    tree_edge, tree_vertex)
from .order import OrderReport, _Worst, default_tolerance


class SymmetryError(ValueError):
    """A field on a tree is not radially symmetric."""


def interval_edge(n: int) -> str:
    return f"I{n}"


def breakpoint_vertex(n: int) -> str:
    return f"r{n}"


class ReducedGrid(GraphGrid):
    """Mesh of ``[0, ρ_depth]`` with a node at every ``ρ_n``.

    Internally a path graph with edges ``I1..IN`` (``I_n = (ρ_{n-1}, ρ_n)``)
    carrying weights ``β_n = b_0 ... b_{n-1}``. ``root_bc`` selects Neumann or
    Dirichlet at ``ρ = 0``; ``truncation`` treats the far end ``ρ_N`` like a
    truncation leaf (``"flux"``: zero weighted flux, ``"zero"``: pinned).
    """

    def __init__(self, spec: RegularTreeSpec, cells, root_bc: str = "neumann",
                 truncation: str = "flux"):
        N = spec.depth
        if isinstance(cells, (int, np.integer)):
            cells = (int(cells),) * N
        cells = tuple(int(c) for c in cells)
        if len(cells) != N:
            raise GraphError(f"expected {N} per-interval cell counts, got {len(cells)}")
        rho = spec.radii[:N + 1]
        edges = tuple(Edge(interval_edge(n), breakpoint_vertex(n - 1), breakpoint_vertex(n),
                           rho[n] - rho[n - 1]) for n in range(1, N + 1))
        path = MetricGraph(edges, (breakpoint_vertex(0),), root=breakpoint_vertex(0),
                           truncation=frozenset({breakpoint_vertex(N)}))
        super().__init__(path, {interval_edge(n): cells[n - 1] for n in range(1, N + 1)},
                         dirichlet_set(path, root_bc, truncation))
        self.spec = spec
        self.root_bc = root_bc
        self.truncation_mode = truncation
        self.cells = cells
        self.breakpoints = np.array(rho)
        self.betas = np.array([spec.generation_size(n) for n in range(1, N + 1)], dtype=float)
        self.weights = {interval_edge(n): self.betas[n - 1] for n in range(1, N + 1)}

    @property
    def depth(self) -> int:
        return self.spec.depth

    def nodes(self) -> list[tuple[float, int, float]]:
        """``(ρ, dof, β(ρ))`` for every mesh node in increasing ``ρ``; β is left-continuous."""
        out = [(0.0, self.vertex_dof[breakpoint_vertex(0)], 1.0)]
        for n in range(1, self.depth + 1):
            m = self.meshes[interval_edge(n)]
            x = self.edge_coordinates(interval_edge(n)) + self.breakpoints[n - 1]
            x[-1] = self.breakpoints[n]
            for loc in range(1, m.cells + 1):
                out.append((float(x[loc]), int(m.dofs[loc]), float(self.betas[n - 1])))
        return out

    def rho(self) -> np.ndarray:
        """``ρ`` at every DOF."""
        out = np.zeros(self.size)
        for r, k, _ in self.nodes():
            if k != PINNED:
                out[k] = r
        return out

    def beta(self) -> np.ndarray:
        """``β(ρ)`` at every DOF."""
        out = np.zeros(self.size)
        for _, k, b in self.nodes():
            if k != PINNED:
                out[k] = b
        return out


class ReducedField(GraphField):
    """Profile ``z`` of a symmetric function, continuous across the breakpoints."""

    __slots__ = ()

    def __init__(self, grid: ReducedGrid, values):
        if not isinstance(grid, ReducedGrid):
            raise TypeError("a reduced field needs a ReducedGrid")
        super().__init__(grid, values)

    @classmethod
    def from_profile(cls, grid: ReducedGrid, fn) -> "ReducedField":
        """Interpolate ``fn(ρ)`` at the DOFs."""
        return cls(grid, np.asarray(fn(grid.rho()), dtype=float) + np.zeros(grid.size))


def assemble_weighted(grid: ReducedGrid, lumped: bool = False) -> OperatorPair:
    """Forms ``∫ z'φ' β dρ`` and ``∫ zφ β dρ`` with ``β`` constant per interval."""
    return assemble(grid, lumped=lumped, weights=grid.weights)


def full_grid(grid: ReducedGrid) -> GraphGrid:
    """Mesh of the materialized tree matching ``grid`` edge for edge."""
    tree = build_regular_tree(grid.spec)
    cells = {}
    for n in range(1, grid.depth + 1):
        for k in range(grid.spec.generation_size(n)):
            cells[tree_edge(n, k)] = grid.cells[n - 1]
    pinned = set()
    if grid.root_bc == "dirichlet":
        pinned.add(tree_vertex(0, 0))
    if grid.truncation_mode == "zero":
        pinned |= tree.truncation
    return GraphGrid(tree, cells, pinned)


class TreeReduction:
    """Correspondence between a reduced grid and a matched full-tree grid.

    ``P`` is the 0/1 lift matrix sending reduced DOFs to full DOFs; on matched
    meshes ``Pᵀ K P`` and ``Pᵀ M P`` are the weighted matrices.
    """

    def __init__(self, reduced: ReducedGrid, full: GraphGrid | None = None):
        self.reduced = reduced
        self.full = full_grid(reduced) if full is None else full
        spec = reduced.spec
        g = self.full.graph
        expected = {tree_edge(n, k) for n in range(1, spec.depth + 1)
                    for k in range(spec.generation_size(n))}
        if {e.id for e in g.edges} != expected:
            raise GraphError("full grid is not the regular tree of the reduced grid")
        owner = np.full(self.full.size, -1, dtype=np.int64)

        def bind(full_dof, red_dof, where):
            if (full_dof == PINNED) != (red_dof == PINNED):
                raise GraphError(f"mesh mismatch: pinned status differs at {where}")
            if full_dof != PINNED:
                owner[full_dof] = red_dof

        bind(self.full.vertex_dof[tree_vertex(0, 0)],
             reduced.vertex_dof[breakpoint_vertex(0)], "the root")
        for n in range(1, spec.depth + 1):
            rm = reduced.meshes[interval_edge(n)]
            for k in range(spec.generation_size(n)):
                eid = tree_edge(n, k)
                fm = self.full.meshes[eid]
                if fm.cells != rm.cells or abs(fm.h - rm.h) > 1e-12 * rm.h:
                    raise GraphError(f"mesh mismatch on edge {eid}: {fm.cells} cells "
                                     f"vs {rm.cells} on interval {interval_edge(n)}")
                for loc in range(1, fm.cells + 1):
                    bind(fm.dofs[loc], rm.dofs[loc], f"edge {eid} node {loc}")
        if np.any(owner < 0):
            raise GraphError("full grid has DOFs outside the tree")
        self.owner = owner
        self.P = sp.csr_matrix((np.ones(self.full.size), (np.arange(self.full.size), owner)),
                               shape=(self.full.size, reduced.size))
        order = np.argsort(owner, kind="stable")
        bounds = np.searchsorted(owner[order], np.arange(reduced.size + 1))
        self.groups = [order[bounds[i]:bounds[i + 1]] for i in range(reduced.size)]

    def lift(self, z: GraphField) -> GraphField:
        if not z.grid.compatible(self.reduced):
            raise GraphError("reduced field lives on a different grid")
        return GraphField(self.full, z.values[self.owner])

    def reduce(self, u: GraphField, tol_sym: float = 1e-10) -> ReducedField:
        """Common value of ``u`` on every sphere ``{ρ(x) = ρ}``.

        Raises :class:`SymmetryError` naming the worst offending pair when
        values on a sphere spread by more than ``tol_sym``.
        """
        if not u.grid.compatible(self.full):
            raise GraphError("field lives on a different grid")
        vals = u.values
        worst, pair = 0.0, None
        for grp in self.groups:
            g = vals[grp]
            lo, hi = int(np.argmin(g)), int(np.argmax(g))
            if g[hi] - g[lo] > worst:
                worst, pair = float(g[hi] - g[lo]), (grp[lo], grp[hi])
        if worst > tol_sym:
            labels = self.full.dof_labels()
            raise SymmetryError(f"field is not symmetric: {labels[pair[0]]} and "
                                f"{labels[pair[1]]} differ by {worst:.3g}")
        first = np.array([grp[0] for grp in self.groups], dtype=np.int64)
        return ReducedField(self.reduced, vals[first] if first.size else np.zeros(0))

    def sum_identity_defect(self, u: GraphField, z: GraphField | None = None) -> float:
        """``max_ρ |Σ_{ρ(x)=ρ} u(x) - z(ρ) β(ρ)|``, sums taken exactly rounded."""
        z = self.reduce(u, math.inf) if z is None else z
        counts = np.array([len(g) for g in self.groups], dtype=float)
        worst = 0.0
        for i, grp in enumerate(self.groups):
            s = math.fsum(u.values[grp])
            worst = max(worst, abs(s - z.values[i] * counts[i]))
        return worst


def reduce(u: GraphField, grid: ReducedGrid, tol_sym: float = 1e-10) -> ReducedField:
    return TreeReduction(grid, u.grid).reduce(u, tol_sym)


def lift(z: GraphField, full: GraphGrid | None = None) -> GraphField:
    return TreeReduction(z.grid, full).lift(z)


@dataclass
class TreeComparison:
    reduction: TreeReduction
    reduced: Trajectory
    full: Trajectory
    max_deviation: float


def evolve_reduced_and_compare(spec: RegularTreeSpec, f: Nonlinearity, u0: ReducedField,
                               T: float, dt: float, scheme: str = "euler",
                               lumped: bool = False, full: GraphGrid | None = None,
                               stride: int | None = None) -> TreeComparison:
    """Run the weighted problem and the full-tree problem from ``lift(u0)``.

    On matched meshes the two discrete systems are congruent through the lift
    matrix, so the deviation is at the level of the linear solver.
    """
    grid = u0.grid
    if grid.spec != spec:
        raise GraphError("initial profile lives on a grid for a different tree")
    red = TreeReduction(grid, full)
    zt = evolve(u0, T, dt, f, assemble_weighted(grid, lumped), scheme, stride)
    ut = evolve(red.lift(u0), T, dt, f, assemble(red.full, lumped), scheme, stride)
    dev = float(np.max(np.abs(ut.values - zt.values[:, red.owner]))) if red.full.size else 0.0
    return TreeComparison(red, zt, ut, dev)


def check_symmetric_conditions(candidate, kind: str, f: Nonlinearity,
                               stationary: bool | None = None, tol: float | None = None,
                               initial: GraphField | None = None) -> OrderReport:
    """Sub- or supersolution inequalities for a profile on a :class:`ReducedGrid`.

    Conditions: ``interior`` (second differences inside each interval),
    ``initial``, ``jump`` (``z'(ρ_n⁻) - b_n z'(ρ_n⁺) >= 0`` for a
    supersolution, with one-sided three-point derivatives), ``root`` (Neumann:
    ``z'(0⁺) <= 0`` for a supersolution; Dirichlet: sign of the value) and
    ``truncation`` (the far end, treated like a truncation leaf). A
    subsolution reverses every inequality.
    """
    if kind not in ("sub", "super"):
        raise ValueError("kind must be 'sub' or 'super'")
    is_traj = isinstance(candidate, Trajectory)
    if stationary is None:
        stationary = not is_traj
    if stationary == is_traj:
        raise ValueError("stationary checks take a field, time-dependent checks a trajectory")
    grid = candidate.grid
    if not isinstance(grid, ReducedGrid):
        raise TypeError("candidate must live on a ReducedGrid")
    sign = 1.0 if kind == "sub" else -1.0
    if stationary:
        states, rates, reaction, times, dt = ([candidate.values], [np.zeros(grid.size)],
                                              [f(candidate.values)], [0.0], 0.0)
    else:
        vals = candidate.values
        if len(candidate.times) < 2:
            raise ValueError("trajectory needs at least two samples")
        steps = np.diff(candidate.times)
        states = list(vals[1:])
        rates = [(vals[k + 1] - vals[k]) / steps[k] for k in range(len(steps))]
        reaction = [f(vals[k]) for k in range(len(steps))]
        times = list(candidate.times[1:])
        dt = float(np.max(steps))
    if tol is None:
        tol = default_tolerance(grid, np.concatenate(states), f, dt)

    interior, init = _Worst("interior", tol), _Worst("initial", tol)
    jump, root, trunc = _Worst("jump", tol), _Worst("root", tol), _Worst("truncation", tol)
    N = grid.depth
    for z, zt, fz, t in zip(states, rates, reaction, times):
        tag = "" if stationary else f" t={t:.6g}"
        for n in range(1, N + 1):
            m = grid.meshes[interval_edge(n)]
            if m.cells < 2:
                raise ValueError(f"interval I{n} needs at least 2 cells")
            ze = grid.edge_values(z, interval_edge(n))
            d2 = (ze[:-2] - 2 * ze[1:-1] + ze[2:]) / m.h ** 2
            dofs = m.dofs[1:-1]
            res = sign * (zt[dofs] - d2 - fz[dofs])
            start = grid.breakpoints[n - 1]
            interior.offer(np.maximum(res, 0.0),
                           lambda k, m=m, s=start: f"rho={s + (k + 1) * m.h:.6g}{tag}")
        for n in range(N + 1):
            v = breakpoint_vertex(n)
            target = root if n == 0 else trunc if n == N else jump
            if v in grid.dirichlet:
                target.offer(np.array([max(sign * grid.vertex_value(z, v), 0.0)]),
                             f"rho={grid.breakpoints[n]:.6g}{tag}")
                continue
            # outer derivatives weighted by β_e / β(ρ_n⁻): the outbound one gets b_n
            ref = grid.betas[max(n, 1) - 1]
            s = sum(d * grid.weights[e.id] / ref for e, d in _outer_derivatives(grid, z, v))
            target.offer(np.array([max(sign * s, 0.0)]), f"rho={grid.breakpoints[n]:.6g}{tag}")

    if initial is not None:
        if stationary:
            raise ValueError("initial data only applies to trajectories")
        res = sign * (candidate.values[0] - initial.values)
        rho = grid.rho()
        init.offer(np.maximum(res, 0.0), lambda k: f"rho={rho[k]:.6g}")

    conds = [interior.result(), init.result(), jump.result(), root.result(), trunc.result()]
    meta = {"root_bc": grid.root_bc, "truncation": grid.truncation_mode,
            "jump_direction": ("supersolution inequality as stated" if kind == "super"
                               else "reversed supersolution inequality")}
    return OrderReport(kind, stationary, conds, tol, meta)


@dataclass
class DominationResult:
    report: OrderReport
    solution: Trajectory
    upper: Trajectory
    lower_defect: float  # max(-u)
    upper_defect: float  # max(u - û)

    @property
    def passed(self) -> bool:
        return self.report.passed


def symmetric_domination(Q: ReducedField, u0: GraphField, f: Nonlinearity, T: float,
                         dt: float, lumped: bool = True, stride: int | None = None,
                         tol: float | None = None) -> DominationResult:
    """Solve from ``u0`` and from ``Q∘ρ`` on the full tree and measure ``0 <= u <= û``.

    ``Q`` is first checked as a stationary symmetric supersolution. Lumped
    mass keeps the discrete flow order preserving.
    """
    red = TreeReduction(Q.grid, u0.grid)
    report = check_symmetric_conditions(Q, "super", f, stationary=True, tol=tol)
    ops = assemble(red.full, lumped=lumped)
    u = evolve(u0, T, dt, f, ops, "euler", stride)
    up = evolve(red.lift(Q), T, dt, f, ops, "euler", stride)
    if u.values.size:
        low = float(np.max(-u.values))
        high = float(np.max(u.values - up.values))
    else:
        low = high = 0.0
    return DominationResult(report, u, up, low, high)


def tree_and_reduction(spec: RegularTreeSpec, cells: int | Sequence[int],
                       root_bc: str = "neumann", truncation: str = "flux") -> TreeReduction:
    """Reduced grid, matched full grid and lift map in one call."""
    return TreeReduction(ReducedGrid(spec, cells, root_bc, truncation))
