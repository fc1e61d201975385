"""Sub/supersolution checks, comparison, monotone iteration and stationary solves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .dynamics import ImexStepper, Nonlinearity, Trajectory, default_stride
from .fem import GraphField, GraphGrid, OperatorPair, assemble, _outer_derivatives

CONDITIONS = ("interior", "initial", "vertex_flux", "boundary")


class PreconditionError(ValueError):
    def __init__(self, message: str, report: "OrderReport | None" = None):
        super().__init__(message if report is None else f"{message}\n{report.to_text()}")
        self.report = report


class OrderViolation(AssertionError):
    """A property that the discrete order structure guarantees was violated."""


class StationarySolveError(RuntimeError):
    pass


@dataclass
class ConditionResult:
    name: str
    worst: float
    location: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


@dataclass
class OrderReport:
    kind: str
    stationary: bool
    conditions: list
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"# {'stationary ' if self.stationary else ''}{self.kind}solution check, "
                 f"tol={self.tol:.17g}"]
        for k, v in self.meta.items():
            lines.append(f"# {k}: {v}")
        for c in self.conditions:
            lines.append(f"{c.name} {c.worst:.17g} {c.location or '-'} "
                         f"{'pass' if c.passed else 'fail'}")
        lines.append(f"verdict {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "worst_residual", "location", "tolerance", "status"])
        for c in self.conditions:
            w.writerow([c.name, f"{c.worst:.17g}", c.location, f"{c.tol:.17g}",
                        "pass" if c.passed else "fail"])
        return buf.getvalue()


class _Worst:
    def __init__(self, name, tol):
        self.name, self.tol = name, tol
        self.value, self.where = 0.0, ""

    def offer(self, residuals: np.ndarray, where):
        if residuals.size == 0:
            return
        k = int(np.argmax(residuals))
        if residuals.flat[k] > self.value:
            self.value = float(residuals.flat[k])
            self.where = where(k) if callable(where) else where

    def result(self):
        return ConditionResult(self.name, self.value, self.where, self.tol)


def default_tolerance(grid: GraphGrid, values: np.ndarray, f: Nonlinearity, dt: float = 0.0) -> float:
    """``10 (h² + Δt)(1 + max|f(u)|)``."""
    scale = float(np.max(np.abs(f(values)))) if values.size else 0.0
    return 10.0 * (grid.max_h ** 2 + dt) * (1.0 + scale)


def check_order_conditions(candidate, kind: str, f: Nonlinearity, bc: str = "neumann",
                           stationary: bool | None = None, tol: float | None = None,
                           initial: GraphField | None = None) -> OrderReport:
    """Worst residuals of the sub- (``kind="sub"``) or supersolution inequalities.

    The candidate is a :class:`GraphField` (stationary) or a :class:`Trajectory`.
    Second differences give ``u_xx`` at mesh-interior nodes; the time derivative
    is a backward difference with the reaction taken at the previous sample,
    which is exactly the IMEX step. At vertices the one-sided three-point outer
    derivatives are summed; a subsolution needs that sum ``<= 0``. Vertices that
    are pinned in the grid, or physical boundary vertices when
    ``bc="dirichlet"``, are checked by sign instead (``u <= 0`` for a
    subsolution). Supersolutions reverse every inequality.
    """
    if kind not in ("sub", "super"):
        raise ValueError("kind must be 'sub' or 'super'")
    if bc not in ("neumann", "dirichlet"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    is_traj = isinstance(candidate, Trajectory)
    if stationary is None:
        stationary = not is_traj
    if stationary and is_traj:
        raise ValueError("a stationary check needs a single field, not a trajectory")
    if not stationary and not is_traj:
        raise ValueError("a time-dependent check needs a trajectory")

    grid = candidate.grid
    sign = 1.0 if kind == "sub" else -1.0
    if stationary:
        states = [candidate.values]
        rates = [np.zeros(grid.size)]
        reaction = [f(candidate.values)]
        times = [0.0]
        dt = 0.0
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

    g = grid.graph
    pinned_check = set(grid.dirichlet)
    if bc == "dirichlet":
        pinned_check |= g.boundary
    interior = _Worst("interior", tol)
    init = _Worst("initial", tol)
    flux = _Worst("vertex_flux", tol)
    bnd = _Worst("boundary", tol)

    for u, ut, fu, t in zip(states, rates, reaction, times):
        tag = "" if stationary else f" t={t:.6g}"
        for e in g.edges:
            m = grid.meshes[e.id]
            if m.cells < 2:
                raise ValueError(f"edge {e.id!r} needs at least 2 cells")
            ue = grid.edge_values(u, e.id)
            d2 = (ue[:-2] - 2 * ue[1:-1] + ue[2:]) / m.h ** 2
            dofs = m.dofs[1:-1]
            # sub: u_t - u_xx - f <= 0
            res = sign * (ut[dofs] - d2 - fu[dofs])
            interior.offer(np.maximum(res, 0.0),
                           lambda k, e=e, m=m: f"edge={e.id}:x={(k + 1) * m.h:.6g}{tag}")
        for v in g.vertices:
            if v in pinned_check:
                val = grid.vertex_value(u, v)
                bnd.offer(np.array([max(sign * val, 0.0)]), f"vertex={v}{tag}")
                continue
            s = sum(d for _, d in _outer_derivatives(grid, u, v))
            target = bnd if g.degree(v) == 1 else flux
            target.offer(np.array([max(sign * s, 0.0)]), f"vertex={v}{tag}")

    if initial is not None:
        if stationary:
            raise ValueError("initial data only applies to trajectories")
        if not initial.grid.compatible(grid):
            raise ValueError("initial data on a different grid")
        res = sign * (candidate.values[0] - initial.values)
        labels = grid.dof_labels()
        init.offer(np.maximum(res, 0.0), lambda k: labels[k])

    conds = [interior.result(), init.result(), flux.result(), bnd.result()]
    return OrderReport(kind, stationary, conds, tol, {"bc": bc})


def compare(sub, sup) -> float:
    """``min(ū - u̲)`` over all shared samples and DOFs."""
    if isinstance(sub, GraphField) and isinstance(sup, GraphField):
        if not sub.grid.compatible(sup.grid):
            raise ValueError("fields live on different grids")
        return float(np.min(sup.values - sub.values)) if sub.values.size else 0.0
    if not (isinstance(sub, Trajectory) and isinstance(sup, Trajectory)):
        raise TypeError("compare needs two fields or two trajectories")
    if not sub.grid.compatible(sup.grid):
        raise ValueError("trajectories live on different grids")
    if sub.times.shape != sup.times.shape or not np.allclose(sub.times, sup.times):
        raise ValueError("trajectories are sampled at different times")
    return float(np.min(sup.values - sub.values)) if sub.values.size else 0.0


@dataclass
class MonotoneResult:
    u1: GraphField
    u2: GraphField
    traj1: Trajectory
    traj2: Trajectory
    converged1: bool
    converged2: bool
    t_final: float
    steps: int
    monotonicity_defect: float
    sandwich_defect: float

    @property
    def converged(self) -> bool:
        return self.converged1 and self.converged2


def monotone_iterate(q_sub: GraphField, q_sup: GraphField, f: Nonlinearity, dt: float,
                     eps_stat: float = 1e-8, t_max: float = 100.0, bc: str = "neumann",
                     ops: OperatorPair | None = None, tol: float | None = None,
                     monotone_tol: float = 1e-10, sandwich_tol: float = 1e-8) -> MonotoneResult:
    """Flow from an ordered stationary sub/supersolution pair towards the
    minimal and maximal stationary solutions in between.

    ``ops`` defaults to lumped mass, for which the step map is order preserving
    whenever ``1 + dt f' >= 0`` on the range of the data.
    """
    grid = q_sub.grid
    if not grid.compatible(q_sup.grid):
        raise PreconditionError("sub- and supersolution live on different grids")
    r_sub = check_order_conditions(q_sub, "sub", f, bc, stationary=True, tol=tol)
    if not r_sub.passed:
        raise PreconditionError("lower datum is not a stationary subsolution", r_sub)
    r_sup = check_order_conditions(q_sup, "super", f, bc, stationary=True, tol=tol)
    if not r_sup.passed:
        raise PreconditionError("upper datum is not a stationary supersolution", r_sup)
    if np.any(q_sub.values > q_sup.values):
        raise PreconditionError("sub- and supersolution are not ordered")

    ops = assemble(grid, lumped=True) if ops is None else ops
    stepper = ImexStepper(ops, dt, "euler")
    lo, hi = q_sub.values, q_sup.values
    u1, u2 = lo.copy(), hi.copy()
    n_max = max(1, int(math.ceil(t_max / dt - 1e-9)))
    stride = default_stride(n_max)
    t1, s1, s2 = [0.0], [u1.copy()], [u2.copy()]
    mono = sand = 0.0
    conv1 = conv2 = False
    k = 0
    while k < n_max:
        k += 1
        n1, n2 = stepper.step(u1, f), stepper.step(u2, f)
        if u1.size:
            mono = max(mono, float(np.max(u1 - n1)), float(np.max(n2 - u2)))
            sand = max(sand, float(np.max(lo - n1)), float(np.max(n1 - n2)),
                       float(np.max(n2 - hi)))
            conv1 = float(np.max(np.abs(n1 - u1))) < eps_stat * dt
            conv2 = float(np.max(np.abs(n2 - u2))) < eps_stat * dt
        else:
            conv1 = conv2 = True
        u1, u2 = n1, n2
        done = conv1 and conv2
        if k % stride == 0 or done or k == n_max:
            t1.append(k * dt)
            s1.append(u1.copy())
            s2.append(u2.copy())
        if done:
            break
    if mono > monotone_tol:
        raise OrderViolation(f"flows not monotone in time: defect {mono:.3g}")
    if sand > sandwich_tol:
        raise OrderViolation(f"sandwich q_sub <= u1 <= u2 <= q_sup broken by {sand:.3g}")
    times = np.array(t1)
    tr1 = Trajectory(grid, times, np.array(s1), dt, "euler", {"start": "sub"})
    tr2 = Trajectory(grid, times.copy(), np.array(s2), dt, "euler", {"start": "super"})
    return MonotoneResult(GraphField(grid, u1), GraphField(grid, u2), tr1, tr2,
                          conv1, conv2, k * dt, k, mono, sand)


def solve_stationary(u_init: GraphField, f: Nonlinearity, ops: OperatorPair | None = None,
                     newton_tol: float = 1e-10, max_iters: int = 50,
                     pivot_tol: float = 1e-10) -> GraphField:
    """Newton's method for ``K q - M f(q) = 0``.

    Raises :class:`StationarySolveError` when the Jacobian ``K - M diag(f'(q))``
    is numerically singular or when the iteration fails to converge.
    ``ops`` defaults to lumped mass (the discretization used by
    :func:`monotone_iterate`).
    """
    grid = u_init.grid
    ops = assemble(grid, lumped=True) if ops is None else ops
    q = u_init.values.copy()
    if not q.size:
        return GraphField(grid, q)
    for _ in range(max_iters + 1):
        F = ops.K @ q - ops.M @ f(q)
        J = (ops.K - ops.M @ diags(f.derivative(q))).tocsc()
        try:
            lu = splu(J)
        except RuntimeError as exc:
            raise StationarySolveError(f"degenerate linearization: {exc}") from exc
        piv = np.abs(lu.U.diagonal())
        if piv.min() <= pivot_tol * piv.max():
            raise StationarySolveError(
                f"degenerate linearization: pivot ratio {piv.min() / piv.max():.3g}")
        if np.max(np.abs(F)) <= newton_tol:
            return GraphField(grid, q)
        q = q - lu.solve(F)
        if not np.all(np.isfinite(q)):
            break
    raise StationarySolveError(f"Newton did not converge in {max_iters} iterations")
