import math

import numpy as np
import pytest

from netheat.barrier import BarrierParams, barrier_check
from netheat.graph import RegularTreeSpec, build_regular_tree, exhaust, orient_by_root

BASE = dict(K=1.0, theta=0.25, c0=2.0, R_n0=2.0, tau=1.0)


def params(beta=1.0, **kw):
    return BarrierParams(beta_exp=beta, **{**BASE, **kw})


def complex_step(fn, x, h=1e-20):
    """Derivative of a real-analytic ``fn`` by the complex-step formula."""
    return np.imag(fn(x + 1j * h)) / h


def eta_complex(p, r, t):
    """``η`` written out independently, valid for complex arguments."""
    return p.sigma * np.exp(p.K * (r + p.r0) ** p.beta_exp / (t - p.tau - p.t0))


class TestParams:
    def test_derived_values(self):
        p = params()
        assert p.r0 == 2.0
        assert p.t0 == 2.0
        assert p.sigma == pytest.approx(math.e ** 2)

    def test_r0_uses_power_when_large(self):
        p = params(1.5, K=4.0, theta=1.0, R_n0=0.0, tau=0.5)
        assert p.r0 == pytest.approx((4.0 * 2.25) ** 2)

    def test_beta_two_uses_c0(self):
        p = params(2.0, K=0.2, theta=0.05, tau=0.5)
        assert p.r0 == 2.0

    @pytest.mark.parametrize("kw,match", [
        (dict(beta=2.5), "beta_exp"),
        (dict(beta=2.0, K=0.25), "K < 1/4"),
        (dict(K=-1.0), "positive"),
        (dict(theta=0.0), "positive"),
        (dict(c0=1.0), "c0"),
        (dict(R_n0=-1.0), "R_n0"),
        (dict(tau=2.0), "t0"),
        (dict(tau=3.0), "t0"),
    ])
    def test_rejects(self, kw, match):
        with pytest.raises(ValueError, match=match):
            params(**kw)


class TestClosedForms:
    def test_reference_point(self):
        p = params()
        t = p.tau + p.t0 - 3.0  # t - tau - t0 = -3
        eta = p.eta(0.0, t)
        assert eta == pytest.approx(math.exp(2 - 2 / 3))
        assert eta == pytest.approx(3.794, abs=5e-4)
        assert p.eta_t(0.0, t) == pytest.approx(-2 / 9 * eta)
        assert p.eta_rr(0.0, t) == pytest.approx(eta / 9)
        assert p.eta_t(0.0, t) + p.eta_rr(0.0, t) == pytest.approx(-eta / 9)
        assert -eta / 9 == pytest.approx(-0.4216, abs=1e-4)

    def test_beta_zero(self):
        p = params(0.0)
        r = np.linspace(0, 10, 11)
        np.testing.assert_allclose(p.eta(r, 0.5), p.eta(0.0, 0.5))
        np.testing.assert_array_equal(p.eta_rr(r, 0.5), 0.0)
        assert np.all(p.eta_t(r, 0.5) < 0)

    @pytest.mark.parametrize("beta,K,theta", [(0.0, 1.0, 0.25), (0.5, 1.0, 0.25),
                                              (1.0, 1.0, 0.25), (1.5, 1.0, 0.25),
                                              (2.0, 0.2, 0.05)])
    def test_against_complex_step(self, beta, K, theta):
        p = params(beta, K=K, theta=theta, tau=0.5 * K / (2 * theta))
        r = np.linspace(0.0, 6.0, 13)
        t = 0.3 * p.tau
        eta_r = complex_step(lambda x: eta_complex(p, x, t), r)
        eta_t = complex_step(lambda s: eta_complex(p, r, s), t)
        np.testing.assert_allclose(p.eta_r(r, t), eta_r, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(p.eta_t(r, t), eta_t, rtol=1e-12, atol=1e-300)
        # second derivative: complex step of the closed-form first derivative
        b, d = p.beta_exp, t - p.tau - p.t0
        eta_rr = complex_step(
            lambda x: p.sigma * np.exp(K * (x + p.r0) ** b / d) * K * b * (x + p.r0) ** (b - 1) / d,
            r)
        np.testing.assert_allclose(p.eta_rr(r, t), eta_rr, rtol=1e-12, atol=1e-300)

    def test_cap(self):
        p = params()
        assert p.cap(3.0, 1.0, 3.0) == 0.0
        assert p.cap(1.0, 1.0, 3.0) == pytest.approx(float(p.eta(1.0, 0.0)))
        assert p.cap_slope(1.0, 3.0) == pytest.approx(float(p.eta(1.0, 0.0)) / 2)


class TestBarrierCheck:
    @pytest.mark.parametrize("beta,K,theta", [(0.0, 1.0, 0.25), (1.0, 1.0, 0.25),
                                              (2.0, 0.2, 0.05), (2.0, 0.2, 0.5),
                                              (1.0, 1.0, math.log(2))])
    def test_matrix(self, beta, K, theta):
        p = params(beta, K=K, theta=theta, tau=0.5 * K / (2 * theta))
        rep = barrier_check(p, np.linspace(p.R_n0, p.R_n0 + 40, 60),
                            np.linspace(p.tau / 50, p.tau, 50))
        assert rep.samples == 3000
        assert rep.supersolution_ok
        assert rep.max_supersolution_residual <= 0.0
        assert rep.derivatives_ok

    def test_fixed_step_misses_tolerance(self):
        # an absolute step is too coarse where log η varies quickly
        p = params(2.0, K=0.2, theta=0.05, tau=1.0)
        r, t = np.linspace(2, 40, 20), np.linspace(0.1, 1.0, 10)
        assert not barrier_check(p, r, t, scaled_step=False).derivatives_ok
        assert barrier_check(p, r, t).derivatives_ok

    def test_sample_validation(self):
        p = params()
        with pytest.raises(ValueError):
            barrier_check(p, [-1.0], [0.5])
        with pytest.raises(ValueError):
            barrier_check(p, [1.0], [0.0])
        with pytest.raises(ValueError):
            barrier_check(p, [1.0], [p.tau * 1.01])


@pytest.fixture(scope="module")
def binary_tree():
    spec = RegularTreeSpec.homogeneous(2, 1.0, 10)
    G, m = orient_by_root(build_regular_tree(spec), "O")
    return spec, G, m


@pytest.fixture(scope="module")
def tree(binary_tree):
    spec, G, m = binary_tree
    return G, m, exhaust(G, m, spec.radii[1:], c0=2.0)


class TestTreeLevels:
    def report(self, tree, **kw):
        G, m, ex = tree
        p = params(**{"theta": math.log(2), "tau": 0.36, **kw})
        return barrier_check(p, [2.0], [0.1], graph=G, metrics=m, exhaustion=ex, n0=2)

    def test_flux_signs(self, tree):
        rep = self.report(tree)
        assert rep.cap_flux and rep.signs_ok
        assert all(row[3] == "<0" for row in rep.cap_flux)

    def test_flux_signs_inside_annulus(self, binary_tree):
        # radii two generations apart leave one generation strictly inside each annulus
        spec, G, m = binary_tree
        rep = self.report((G, m, exhaust(G, m, spec.radii[2::2], c0=2.0)))
        inner = [row for row in rep.cap_flux if row[3] == ">=0"]
        assert inner and rep.eta_flux
        assert rep.signs_ok

    def test_levels_reported(self, tree):
        rep = self.report(tree)
        levels = [row[0] for row in rep.level_bounds]
        assert levels == list(range(3, 10))
        # the sphere of level n holds 2^n vertices, each with one inbound edge
        assert [row[2] for row in rep.level_bounds] == [2 ** n for n in levels]

    def test_geometric_decay(self, tree):
        ratios = self.report(tree).decay_ratios()
        assert max(ratios) < 1.0
        # unit radii: each level doubles the sphere and shifts r by one
        t0 = 1.0 / (2 * math.log(2))
        np.testing.assert_allclose(ratios, 2 * math.exp(-1.0 / (0.36 + t0)), rtol=1e-9)

    def test_small_theta_does_not_decay(self, tree):
        ratios = self.report(tree, theta=0.25, tau=1.0).decay_ratios()
        assert min(ratios) > 1.0
