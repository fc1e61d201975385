"""Radial barrier ``η`` and linear cap ``h`` controlling the truncation fluxes
of backward dual problems on exhaustions of infinite graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Exhaustion, MetricGraph, RootedMetrics


@dataclass(frozen=True)
class BarrierParams:
    """Parameters of ``η(r, t) = σ exp{K (r + r0)^β / (t - τ - t0)}``.

    ``r0``, ``σ`` and ``t0`` are derived: ``r0 = max{(Kβ²)^{1/(2-β)} - R_{n0}, c0}``
    (``r0 = c0`` when ``β = 2``), ``σ = exp{2θ(R_{n0} + r0)^β}`` and
    ``t0 = K / (2θ)``.
    """

    beta_exp: float
    K: float
    theta: float
    c0: float
    R_n0: float
    tau: float

    def __post_init__(self):
        if not 0 <= self.beta_exp <= 2:
            raise ValueError("beta_exp must lie in [0, 2]")
        if self.K <= 0 or self.theta <= 0:
            raise ValueError("K and theta must be positive")
        if self.beta_exp == 2 and self.K >= 0.25:
            raise ValueError("beta_exp = 2 requires K < 1/4")
        if self.c0 <= 1:
            raise ValueError("c0 must exceed 1")
        if self.R_n0 < 0 or self.tau <= 0:
            raise ValueError("need R_n0 >= 0 and tau > 0")
        if self.tau >= self.t0:
            raise ValueError(f"tau={self.tau} must be below t0={self.t0}")

    @property
    def r0(self) -> float:
        b = self.beta_exp
        if b == 2:
            return self.c0
        return max((self.K * b * b) ** (1.0 / (2.0 - b)) - self.R_n0, self.c0)

    @property
    def sigma(self) -> float:
        return math.exp(2 * self.theta * (self.R_n0 + self.r0) ** self.beta_exp)

    @property
    def t0(self) -> float:
        return self.K / (2 * self.theta)

    def _d(self, t):
        return np.asarray(t, dtype=float) - self.tau - self.t0

    def eta(self, r, t):
        s = np.asarray(r, dtype=float) + self.r0
        return self.sigma * np.exp(self.K * s ** self.beta_exp / self._d(t))

    def log_eta_r(self, r, t):
        """``η_r / η``."""
        b, s, d = self.beta_exp, np.asarray(r, dtype=float) + self.r0, self._d(t)
        return self.K * b * s ** (b - 1) / d

    def log_eta_t(self, r, t):
        """``η_t / η``."""
        s, d = np.asarray(r, dtype=float) + self.r0, self._d(t)
        return -self.K * s ** self.beta_exp / d ** 2

    def eta_rr_terms(self, r, t):
        """The two summands of ``η_rr / η``: ``(η_r/η)²`` and ``Kβ(β-1)(r+r0)^{β-2}/(t-τ-t0)``."""
        b, s, d = self.beta_exp, np.asarray(r, dtype=float) + self.r0, self._d(t)
        return self.log_eta_r(r, t) ** 2, self.K * b * (b - 1) * s ** (b - 2) / d

    def eta_r(self, r, t):
        return self.log_eta_r(r, t) * self.eta(r, t)

    def eta_t(self, r, t):
        return self.log_eta_t(r, t) * self.eta(r, t)

    def eta_rr(self, r, t):
        a, c = self.eta_rr_terms(r, t)
        return (a + c) * self.eta(r, t)

    def cap_slope(self, R_prev: float, R_n: float) -> float:
        """Magnitude of ``h'`` on the annulus ``R_prev < r <= R_n``."""
        return float(self.eta(R_prev, 0.0)) / (R_n - R_prev)

    def cap(self, r, R_prev: float, R_n: float):
        return self.cap_slope(R_prev, R_n) * (R_n - np.asarray(r, dtype=float))


@dataclass
class BarrierReport:
    samples: int
    max_supersolution_residual: float  # max of η_t + η_rr
    max_scaled_residual: float  # max of (η_t + η_rr) / η, immune to underflow
    max_rel_error_t: float
    max_rel_error_r: float
    max_rel_error_rr: float
    cap_flux: list = field(default_factory=list)  # (level, vertex, flux, expected_sign, ok)
    eta_flux: list = field(default_factory=list)
    level_bounds: list = field(default_factory=list)  # (level, R_n, sum d+, weighted bound)

    @property
    def supersolution_ok(self) -> bool:
        return self.max_scaled_residual <= 0.0

    @property
    def derivatives_ok(self) -> bool:
        return max(self.max_rel_error_t, self.max_rel_error_r, self.max_rel_error_rr) <= 1e-6

    @property
    def signs_ok(self) -> bool:
        return all(row[-1] for row in self.cap_flux) and all(row[-1] for row in self.eta_flux)

    def decay_ratios(self) -> list[float]:
        w = [row[3] for row in self.level_bounds]
        return [b / a for a, b in zip(w, w[1:]) if a > 0]


def _rel(fd, cf, scale):
    return float(np.max(np.abs(fd - cf) / np.maximum(scale, 1e-300)))


def barrier_check(p: BarrierParams, r_samples, t_samples, step: float = 1e-4,
                  scaled_step: bool = True, graph: MetricGraph | None = None,
                  metrics: RootedMetrics | None = None,
                  exhaustion: Exhaustion | None = None, n0: int = 0,
                  t_flux: float | None = None) -> BarrierReport:
    """Sample the barrier inequality and its ingredients.

    On the ``r × t`` sample grid: ``max(η_t + η_rr)`` and the relative
    disagreement between closed-form derivatives and central differences. With
    ``scaled_step`` the difference step at each point is ``step`` times the
    shorter of the variation length of ``log η`` and the distance to the
    singular point; otherwise it is ``step`` itself. The
    reference magnitude for ``η_rr`` is the sum of the magnitudes of its two
    closed-form terms, which guards against cancellation between them.

    With a graph, its rooted metrics and an exhaustion, also reports the vertex
    flux signs of the cap ``h`` and of ``η`` on every level ``n > n0`` and the
    sphere bound ``(Σ_{S_n} d⁺) η(R_{n-1}, 0)/(R_n - R_{n-1})`` per level.
    """
    r = np.asarray(r_samples, dtype=float)[:, None]
    t = np.asarray(t_samples, dtype=float)[None, :]
    if np.any(r < 0):
        raise ValueError("r samples must be nonnegative")
    if np.any(t <= 0) or np.any(t > p.tau):
        raise ValueError("t samples must lie in (0, tau]")
    r, t = np.broadcast_arrays(r, t)
    a, c = p.eta_rr_terms(r, t)
    cf_t, cf_r = p.log_eta_t(r, t), p.log_eta_r(r, t)
    scaled = cf_t + a + c  # (η_t + η_rr) / η

    # Differences are taken of η/η(r, t), written through expm1/log1p so they
    # stay accurate where η itself underflows. Steps are scaled to the local
    # variation of log η, keeping the truncation error near step².
    K, b = p.K, p.beta_exp
    s, d = r + p.r0, p._d(t)
    if scaled_step:
        h_r = step * np.minimum(s, 1.0 / np.maximum(np.abs(cf_r), 1e-300))
        h_t = step * np.minimum(np.abs(d), 1.0 / np.maximum(np.abs(cf_t), 1e-300))
    else:
        h_r = h_t = np.full(r.shape, float(step))

    def shift_r(h):  # log η(r + h, t) - log η(r, t)
        return K * s ** b * np.expm1(b * np.log1p(h / s)) / d

    def shift_t(h):  # log η(r, t + h) - log η(r, t)
        return -K * s ** b * h / (d * (d + h))

    fd_t = (np.expm1(shift_t(h_t)) - np.expm1(shift_t(-h_t))) / (2 * h_t)
    up, dn = np.expm1(shift_r(h_r)), np.expm1(shift_r(-h_r))
    fd_r = (up - dn) / (2 * h_r)
    fd_rr = (up + dn) / h_r ** 2
    # derivatives that vanish identically (β = 0) have vanishing differences too
    err_r = 0.0 if b == 0 else _rel(fd_r, cf_r, np.abs(cf_r))
    err_rr = 0.0 if b == 0 else _rel(fd_rr, a + c, np.abs(a) + np.abs(c))
    report = BarrierReport(r.size, float(np.max(p.eta_t(r, t) + p.eta_rr(r, t))),
                           float(np.max(scaled)), _rel(fd_t, cf_t, np.abs(cf_t)), err_r, err_rr)

    if graph is not None and metrics is not None and exhaustion is not None:
        tf = 0.5 * p.tau if t_flux is None else t_flux
        for n in range(max(n0, 0) + 1, len(exhaustion)):
            _level_fluxes(p, graph, metrics, exhaustion, n, tf, report)
    return report


def _radial_slope(graph: MetricGraph, metrics: RootedMetrics, e, at_j: bool) -> float:
    """``dr/dx`` of the distance function at an end of edge ``e``."""
    if not at_j:
        return 1.0
    return 1.0 if metrics.r[e.j] >= metrics.r[e.i] + e.length - 1e-12 else -1.0


def _level_fluxes(p: BarrierParams, graph, metrics, ex: Exhaustion, n: int, t: float,
                  report: BarrierReport):
    lvl, prev = ex[n], ex[n - 1]
    R_n, R_prev = lvl.radius, prev.radius
    slope = p.cap_slope(R_prev, R_n)
    for v in sorted(lvl.vertices - prev.vertices, key=str):
        cap_sum = eta_sum = 0.0
        rv = metrics.r[v]
        deta = float(p.eta_r(rv, t))
        for e in graph.incident(v):
            if e.id not in lvl.edges:
                continue
            # outer derivative of a radial profile g(r): +g'(r) r'(l) at j(e), -g'(r) r'(0) at i(e)
            if e.j == v:
                dr = _radial_slope(graph, metrics, e, True)
                cap_sum += -slope * dr
                eta_sum += deta * dr
            if e.i == v:
                dr = _radial_slope(graph, metrics, e, False)
                cap_sum -= -slope * dr
                eta_sum -= deta * dr
        on_sphere = v in lvl.sphere
        if on_sphere:
            report.cap_flux.append((n, v, cap_sum, "<0", cap_sum < 0))
        else:
            report.cap_flux.append((n, v, cap_sum, ">=0", cap_sum >= -1e-12 * slope))
            report.eta_flux.append((n, v, eta_sum, ">=0", eta_sum >= -1e-12 * abs(deta)))
    dsum = sum(graph.in_degree(v) for v in lvl.sphere)
    report.level_bounds.append((n, R_n, dsum, dsum * slope))
