"""Time integration of ``u_t = Δu + f(u)`` and the backward dual problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial
from scipy.sparse.linalg import splu

from .fem import GraphField, GraphGrid, OperatorPair

DEFAULT_CAP = 1e6


class BlowUpError(RuntimeError):
    """Raised when the sup-norm of a solution exceeds the configured cap."""

    def __init__(self, t: float, state: GraphField, cap: float):
        super().__init__(f"|u|_inf exceeded {cap:g} after t={t:g}")
        self.t = t
        self.state = state


class Nonlinearity:
    """Polynomial reaction term with ``f(0) = 0``.

    Kinds: ``zero``; ``linear`` (``λu``, params ``(λ,)``); ``logistic``
    (``u(1-u)``); ``bistable`` (``u(1-u)(u-a)``, params ``(a,)``);
    ``polynomial`` (params are the coefficients of ``u, u², ...``).
    """

    KINDS = ("zero", "linear", "logistic", "bistable", "polynomial")

    def __init__(self, kind: str, params: Sequence[float] = ()):
        params = tuple(float(p) for p in params)
        if kind == "zero":
            coef = [0.0]
        elif kind == "linear":
            (lam,) = params or (1.0,)
            coef = [0.0, lam]
        elif kind == "logistic":
            coef = [0.0, 1.0, -1.0]
        elif kind == "bistable":
            (a,) = params or (0.5,)
            # u(1-u)(u-a) = -a u + (1+a) u² - u³
            coef = [0.0, -a, 1.0 + a, -1.0]
        elif kind == "polynomial":
            if not params:
                raise ValueError("polynomial needs at least one coefficient")
            coef = [0.0, *params]
        else:
            raise ValueError(f"unknown nonlinearity {kind!r}; expected one of {self.KINDS}")
        self.kind = kind
        self.params = params
        self.poly = Polynomial(coef)
        self.dpoly = self.poly.deriv()

    def __repr__(self):
        return f"Nonlinearity({self.kind!r}, {self.params})"

    def __call__(self, u):
        return self.poly(u)

    def derivative(self, u):
        return self.dpoly(u)

    def lipschitz(self, M: float) -> float:
        """Lipschitz constant of ``f`` on ``[-M, M]``: max of ``|f'|`` over
        the endpoints and the critical points of ``f'`` inside."""
        M = abs(float(M))
        pts = [-M, M]
        if self.dpoly.degree() >= 2:
            for z in self.dpoly.deriv().roots():
                if abs(z.imag) < 1e-12 and -M <= z.real <= M:
                    pts.append(z.real)
        return float(np.max(np.abs(self.dpoly(np.array(pts)))))


@dataclass
class Trajectory:
    grid: GraphGrid
    times: np.ndarray
    values: np.ndarray  # (samples, dofs)
    dt: float
    scheme: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def field(self, k: int) -> GraphField:
        return GraphField(self.grid, self.values[k])

    @property
    def final(self) -> GraphField:
        return self.field(-1)

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a sample time")
        return k


SCHEMES = ("euler", "cn")


class ImexStepper:
    """Factorized one-step map for ``M u_t + K u = M f(u)``.

    ``euler``: ``(M + dt K) u⁺ = M (u + dt f(u))``.
    ``cn``: ``(M + dt/2 K) u⁺ = (M - dt/2 K) u + dt M f(u)``.
    """

    def __init__(self, ops: OperatorPair, dt: float, scheme: str = "euler"):
        if dt <= 0:
            raise ValueError("time step must be positive")
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.ops, self.dt, self.scheme = ops, dt, scheme
        theta = 1.0 if scheme == "euler" else 0.5
        self._explicit = (ops.M - (1 - theta) * dt * ops.K).tocsr()
        if ops.size:
            A = (ops.M + theta * dt * ops.K).tocsc()
            try:
                self._lu = splu(A)
            except RuntimeError as exc:
                raise np.linalg.LinAlgError(f"singular step matrix: {exc}") from exc

    def step(self, u: np.ndarray, f: Nonlinearity | None = None,
             source: np.ndarray | None = None) -> np.ndarray:
        """Advance nodal values one step; ``source`` is an extra explicit term (pre-mass)."""
        if not self.ops.size:
            return u.copy()
        rhs = self._explicit @ u
        extra = np.zeros_like(u)
        if f is not None and f.kind != "zero":
            extra += f(u)
        if source is not None:
            extra += source
        if extra.any():
            rhs += self.dt * (self.ops.M @ extra)
        return self._lu.solve(rhs)


def step_imex(u: GraphField, dt: float, f: Nonlinearity, ops: OperatorPair,
              scheme: str = "euler") -> GraphField:
    """One IMEX step: implicit diffusion, explicit reaction."""
    return GraphField(u.grid, ImexStepper(ops, dt, scheme).step(u.values, f))


def _steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return n


def default_stride(n_steps: int) -> int:
    return 1 if n_steps <= 1000 else math.ceil(n_steps / 1000)


def evolve(u0: GraphField, T: float, dt: float, f: Nonlinearity, ops: OperatorPair,
           scheme: str = "euler", stride: int | None = None,
           cap: float = DEFAULT_CAP) -> Trajectory:
    """Integrate from ``u0`` up to ``T``; samples every ``stride`` steps plus the last one."""
    n = _steps(T, dt)
    stride = default_stride(n) if stride is None else max(1, int(stride))
    stepper = ImexStepper(ops, dt, scheme)
    u = u0.values.copy()
    times, samples = [0.0], [u.copy()]
    for k in range(1, n + 1):
        u = stepper.step(u, f)
        if not np.all(np.isfinite(u)) or (u.size and np.max(np.abs(u)) > cap):
            last = GraphField(u0.grid, samples[-1].copy())
            raise BlowUpError((k - 1) * dt, last, cap)
        if k % stride == 0 or k == n:
            times.append(k * dt)
            samples.append(u.copy())
    return Trajectory(u0.grid, np.array(times), np.array(samples), dt, scheme)


def heat_semigroup(u0: GraphField, t: float, ops: OperatorPair, substeps: int = 100,
                   scheme: str = "euler") -> GraphField:
    """Approximate ``e^{tΔ} u0`` with ``substeps`` implicit steps."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    stepper = ImexStepper(ops, t / substeps, scheme)
    u = u0.values.copy()
    for _ in range(substeps):
        u = stepper.step(u)
    return GraphField(u0.grid, u)


@dataclass
class DualCoefficient:
    """Zero-order coefficient of a backward dual problem.

    Either sampled values ``a(x, t)`` (``times`` × DOFs, piecewise constant in
    time) for ``φ_t = -Δφ - aφ``, or a constant ``lam`` for
    ``φ_t = -Δφ + λφ``.
    """

    times: np.ndarray | None = None
    values: np.ndarray | None = None
    lam: float | None = None

    def __post_init__(self):
        if (self.lam is None) == (self.values is None):
            raise ValueError("give either sampled values or lam")

    def growth(self, t: float) -> np.ndarray | float:
        """Coefficient ``c`` in the reversed-time equation ``φ_s = Δφ + cφ``."""
        if self.lam is not None:
            return -self.lam
        k = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.values[min(max(k, 0), len(self.times) - 1)]


def solve_backward_dual(zeta: GraphField, tau: float, coeff: DualCoefficient,
                        ops: OperatorPair, dt: float) -> Trajectory:
    """Solve the backward problem from ``φ(τ) = ζ`` down to ``t = 0``.

    Runs forward in ``s = τ - t`` with implicit diffusion and an explicit
    zero-order term. The grid of ``ζ`` fixes the domain: pinned vertices carry
    the zero condition (Dirichlet boundary or truncation sphere). Returned
    samples are ordered by increasing ``t``.
    """
    z = zeta.values
    if z.size and (z.min() < 0 or z.max() > 1):
        raise ValueError("terminal datum must take values in [0, 1]")
    n = _steps(tau, dt)
    stepper = ImexStepper(ops, dt, "euler")
    phi = z.copy()
    vals = [phi.copy()]
    for k in range(n):
        t = tau - k * dt
        c = coeff.growth(t)
        phi = stepper.step(phi, source=c * phi)
        vals.append(phi.copy())
    times = tau - dt * np.arange(n + 1)
    return Trajectory(zeta.grid, times[::-1].copy(), np.array(vals[::-1]), dt, "euler",
                      meta={"kind": "backward-dual"})


def difference_quotient(f: Nonlinearity, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """``(f(lower) - f(upper)) / (lower - upper)``, zero where the two agree."""
    w = lower - upper
    out = np.zeros_like(w)
    nz = w != 0
    out[nz] = (f(lower[nz]) - f(upper[nz])) / w[nz]
    return out


@dataclass
class DualityReport:
    gap: float
    zeta_l1: float
    max_coefficient: float
    lipschitz_bound: float
    coefficient: DualCoefficient

    @property
    def coefficient_bounded(self) -> bool:
        return self.max_coefficient <= self.lipschitz_bound * (1 + 1e-12) + 1e-12


def duality_gap(sub: Trajectory, sup: Trajectory, zeta: GraphField, tau: float,
                f: Nonlinearity, ops: OperatorPair) -> DualityReport:
    """``∫ (u̲ - ū)(τ) ζ dμ`` plus the linearized coefficient and its Lipschitz bound."""
    if not (sub.grid.compatible(sup.grid) and sub.grid.compatible(zeta.grid)):
        raise ValueError("trajectories and test function live on different grids")
    if sub.times.shape != sup.times.shape or not np.allclose(sub.times, sup.times):
        raise ValueError("trajectories are sampled at different times")
    k = sub.index_of(tau)
    w = sub.values[k] - sup.values[k]
    gap = float(zeta.values @ (ops.M @ w))
    a = difference_quotient(f, sub.values, sup.values)
    bound_M = max(np.max(np.abs(sub.values)), np.max(np.abs(sup.values)))
    l1 = float(np.sum(ops.M @ np.abs(zeta.values)))
    return DualityReport(gap, l1, float(np.max(np.abs(a))) if a.size else 0.0,
                         f.lipschitz(bound_M), DualCoefficient(sub.times.copy(), a))


def mass(u: np.ndarray, ops: OperatorPair) -> float:
    return float(np.sum(ops.M @ u))


def summary_rows(traj: Trajectory, ops: OperatorPair) -> list[tuple]:
    """``(t, min, max, l2, mass)`` per sample; ``l2`` is the M-norm."""
    rows = []
    for t, u in zip(traj.times, traj.values):
        if u.size:
            rows.append((t, u.min(), u.max(), math.sqrt(max(u @ (ops.M @ u), 0.0)), mass(u, ops)))
        else:
            rows.append((t, 0.0, 0.0, 0.0, 0.0))
    return rows


def m_norm(u: np.ndarray, ops: OperatorPair) -> float:
    return math.sqrt(max(float(u @ (ops.M @ u)), 0.0))


def lumped(ops: OperatorPair) -> OperatorPair:
    """Row-sum lumped copy of ``ops``."""
    if ops.lumped:
        return ops
    return OperatorPair(sp.diags(np.asarray(ops.M.sum(axis=1)).ravel()).tocsr(), ops.K, True)
