import math

import numpy as np
import pytest

from metawell import laplace
from metawell.errors import DegenerateHessian, ZeroDensity
from metawell.kramers import phi


def quad_1d(x0=0.0):
    f = lambda x: 0.5 * float(x[0] - x0) ** 2
    grad = lambda x: np.array([x[0] - x0])
    hess = lambda x: np.array([[1.0]])
    g = lambda x: 1.0
    return f, grad, hess, g


def cubic_1d():
    f = lambda x: 0.5 * float(x[0]) ** 2 + float(x[0]) ** 3 / 6.0
    grad = lambda x: np.array([x[0] + 0.5 * x[0] ** 2])
    hess = lambda x: np.array([[1.0 + x[0]]])
    g = lambda x: 1.0
    return f, grad, hess, g


def cubic_2d():
    f = lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2) + x[0] ** 3 / 6.0 + x[0] * x[1] ** 2 / 10.0
    grad = lambda x: np.array([x[0] + 0.5 * x[0] ** 2 + x[1] ** 2 / 10.0,
                               x[1] + x[0] * x[1] / 5.0])
    hess = lambda x: np.array([[1.0 + x[0], x[1] / 5.0],
                               [x[1] / 5.0, 1.0 + x[0] / 5.0]])
    g = lambda x: 1.0
    return f, grad, hess, g


LAMS = [10.0, 20.0, 40.0, 80.0, 160.0]


class TestLeadingTerm:
    def test_full_gaussian_integral(self):
        f, grad, hess, g = quad_1d()
        spec = laplace.MovingDomainSpec(1, (0.0,), (), ((-8.0, 8.0),))
        r = laplace.laplace_asymptotic(f, g, spec, 10.0, grad_f=grad, hess_f=hess)
        assert r.value == pytest.approx(math.sqrt(2 * math.pi / 10.0), rel=1e-14)
        assert r.gaussian_prob == 1.0 and r.method == "analytic"

    def test_half_space_standardization(self):
        f, grad, hess, g = quad_1d()
        spec = laplace.MovingDomainSpec(1, (0.0,),
                                        (laplace.HalfSpace((1.0,), 0.3),),
                                        ((-8.0, 8.0),))
        r = laplace.laplace_asymptotic(f, g, spec, 40.0, grad_f=grad, hess_f=hess)
        assert r.value == pytest.approx(math.sqrt(2 * math.pi / 40.0) * phi(0.3),
                                        rel=1e-13)
        oracle = laplace.laplace_oracle(f, g, spec, 40.0)
        assert abs(oracle - r.value) / oracle < 1e-12

    def test_2d_half_plane_symmetry(self):
        f = lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2)
        grad = lambda x: np.asarray(x, float)
        hess = lambda x: np.eye(2)
        g = lambda x: 1.0
        spec = laplace.MovingDomainSpec(2, (0.0, 0.0),
                                        (laplace.HalfSpace((1.0, 0.0), 0.0),),
                                        ((-6.0, 6.0), (-6.0, 6.0)))
        r = laplace.laplace_asymptotic(f, g, spec, 10.0, grad_f=grad, hess_f=hess)
        assert r.value == pytest.approx((2 * math.pi / 10.0) * 0.5, rel=1e-13)

    def test_qmc_quadrant(self):
        f = lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2)
        grad = lambda x: np.asarray(x, float)
        hess = lambda x: np.eye(2)
        g = lambda x: 1.0
        spec = laplace.MovingDomainSpec(
            2, (0.0, 0.0),
            (laplace.HalfSpace((1.0, 0.0), 0.0), laplace.HalfSpace((0.0, 1.0), 0.0)),
            ((-6.0, 6.0), (-6.0, 6.0)))
        r = laplace.laplace_asymptotic(f, g, spec, 10.0, grad_f=grad, hess_f=hess)
        assert r.method == "qmc"
        assert abs(r.gaussian_prob - 0.25) < max(3 * r.prob_stderr, 1e-4)

    def test_qmc_ball(self):
        f = lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2)
        grad = lambda x: np.asarray(x, float)
        hess = lambda x: np.eye(2)
        g = lambda x: 1.0
        spec = laplace.MovingDomainSpec(2, (0.0, 0.0),
                                        (laplace.Ball((0.0, 0.0), 1.0),),
                                        ((-6.0, 6.0), (-6.0, 6.0)))
        r = laplace.laplace_asymptotic(f, g, spec, 30.0, grad_f=grad, hess_f=hess)
        want = 1.0 - math.exp(-0.5)  # chi-square_2 inside the unit ball
        assert abs(r.gaussian_prob - want) < max(3 * r.prob_stderr, 1e-4)
        oracle = laplace.laplace_oracle(f, g, spec, 30.0, rel_tol=1e-9)
        assert abs(oracle - r.value) / oracle < 2e-2


class TestErrorOrders:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_symmetric_slope(self, dim):
        f, grad, hess, g = cubic_1d() if dim == 1 else cubic_2d()
        hull = ((-0.9, 1.8),) if dim == 1 else ((-0.9, 1.8), (-2.0, 2.0))
        spec = laplace.MovingDomainSpec(dim, (0.0,) * dim, (), hull)
        assert spec.is_symmetric() and spec.error_order == 2
        rows = laplace.compare_table(f, g, spec, LAMS, grad_f=grad, hess_f=hess,
                                     rel_tol=1e-9)
        slope = laplace.fitted_slope(LAMS, [r["rel_error"] for r in rows])
        assert abs(slope - (-1.0)) <= 0.3

    @pytest.mark.parametrize("dim", [1, 2])
    def test_half_space_slope(self, dim):
        f, grad, hess, g = cubic_1d() if dim == 1 else cubic_2d()
        hull = ((-0.9, 1.8),) if dim == 1 else ((-0.9, 1.8), (-2.0, 2.0))
        normal = (1.0,) if dim == 1 else (1.0, 0.0)
        spec = laplace.MovingDomainSpec(dim, (0.0,) * dim,
                                        (laplace.HalfSpace(normal, 0.3),), hull)
        assert not spec.is_symmetric() and spec.error_order == 1
        rows = laplace.compare_table(f, g, spec, LAMS, grad_f=grad, hess_f=hess,
                                     rel_tol=1e-9)
        slope = laplace.fitted_slope(LAMS, [r["rel_error"] for r in rows])
        assert abs(slope - (-0.5)) <= 0.3

    def test_moving_offset_error_tracks_quarter_power(self):
        # exactly quadratic f isolates the domain-motion error; the scaled
        # offset drifts as b_inf + 0.3 lam^(-1/4), so the relative error is
        # ~ phi(b) 0.3 lam^(-1/4) / Phi(b): slope -1/4 up to the
        # linearization of Phi (the amplitude must stay small against b_inf)
        f, grad, hess, g = quad_1d()
        drift = lambda lam: 0.4 + 0.3 * lam ** -0.25
        spec = laplace.MovingDomainSpec(1, (0.0,),
                                        (laplace.HalfSpace((1.0,), 0.4, drift),),
                                        ((-8.0, 8.0),))
        lams = [100.0, 400.0, 1600.0, 6400.0]
        errs = []
        for lam in lams:
            asym = laplace.laplace_asymptotic(f, g, spec, lam, grad_f=grad,
                                              hess_f=hess).value
            oracle = laplace.laplace_oracle(f, g, spec, lam)
            errs.append(abs(oracle - asym) / oracle)
        slope = laplace.fitted_slope(lams, errs)
        assert abs(slope - (-0.25)) < 0.05


class TestStructure:
    def test_symmetric_slab_detected(self):
        spec = laplace.MovingDomainSpec(
            1, (0.0,),
            (laplace.HalfSpace((1.0,), 0.7), laplace.HalfSpace((-1.0,), 0.7)),
            ((-5.0, 5.0),))
        assert spec.is_symmetric()

    def test_asymmetric_ball_detected(self):
        spec = laplace.MovingDomainSpec(2, (0.0, 0.0),
                                        (laplace.Ball((0.5, 0.0), 1.0),),
                                        ((-5.0, 5.0), (-5.0, 5.0)))
        assert not spec.is_symmetric()

    def test_gradient_must_vanish(self):
        f, grad, hess, g = quad_1d(x0=0.5)
        spec = laplace.MovingDomainSpec(1, (0.0,), (), ((-3.0, 3.0),))
        with pytest.raises(DegenerateHessian):
            laplace.laplace_asymptotic(f, g, spec, 10.0, grad_f=grad, hess_f=hess)

    def test_zero_density(self):
        f, grad, hess, _ = quad_1d()
        spec = laplace.MovingDomainSpec(1, (0.0,), (), ((-3.0, 3.0),))
        with pytest.raises(ZeroDensity):
            laplace.laplace_asymptotic(f, lambda x: 0.0, spec, 10.0,
                                       grad_f=grad, hess_f=hess)

    def test_fd_fallback_derivatives(self):
        f, _, _, g = cubic_1d()
        spec = laplace.MovingDomainSpec(1, (0.0,), (), ((-0.9, 1.8),))
        r = laplace.laplace_asymptotic(f, g, spec, 50.0)
        want = laplace.laplace_asymptotic(f, g, spec, 50.0,
                                          grad_f=cubic_1d()[1], hess_f=cubic_1d()[2])
        assert r.value == pytest.approx(want.value, rel=1e-6)

    def test_empty_domain_integral(self):
        f, grad, hess, g = quad_1d()
        spec = laplace.MovingDomainSpec(
            1, (0.0,),
            (laplace.HalfSpace((1.0,), -1.0), laplace.HalfSpace((-1.0,), -1.0)),
            ((-5.0, 5.0),))
        assert laplace.laplace_oracle(f, g, spec, 25.0) == 0.0
