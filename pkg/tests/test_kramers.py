import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr

from metawell import harmonic, kramers
from metawell.errors import NoSeparatingSaddle, PreconditionViolated
from metawell.potentials import CriticalCatalog, CriticalPoint


class TestPhi:
    def test_endpoints(self):
        assert kramers.phi(math.inf) == 1.0
        assert kramers.phi(-math.inf) == 0.0
        assert kramers.phi(0.0) == 0.5

    def test_minus_three_against_quadrature(self):
        # independent oracle: adaptive quadrature of the Gaussian density,
        # written as 1/2 minus the finite integral for a tight error estimate
        part, err = integrate.quad(
            lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), -3.0, 0.0)
        assert err < 1e-13
        assert abs(kramers.phi(-3.0) - (0.5 - part)) < 1e-12
        assert abs(kramers.phi(-3.0) - 1.3499e-3) < 1e-7

    def test_absolute_error_budget(self):
        xs = np.linspace(-12.0, 12.0, 2401)
        worst = max(abs(kramers.phi(float(x)) - float(ndtr(x))) for x in xs)
        assert worst <= 1e-12

    @pytest.mark.parametrize("x", [-10.0, -14.0, -20.0])
    def test_tail_asymptotic(self, x):
        product = kramers.phi(x) * abs(x) * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
        assert 1 - 1e-2 <= product <= 1 + 1e-2

    def test_tail_product_approaches_one(self):
        xs = [-8.0, -12.0, -16.0, -20.0]
        prods = [kramers.phi(x) * abs(x) * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
                 for x in xs]
        assert all(b > a for a, b in zip(prods, prods[1:]))
        assert all(p < 1 for p in prods)

    def test_symmetry(self):
        for x in (0.3, 1.7, 4.2):
            assert abs(kramers.phi(x) + kramers.phi(-x) - 1.0) < 1e-14

    def test_vectorized_matches_scalar(self):
        xs = np.array([[-3.0, 0.0], [2.5, math.inf]])
        got = kramers.phi_many(xs)
        assert got.shape == xs.shape
        for idx in np.ndindex(xs.shape):
            assert got[idx] == kramers.phi(float(xs[idx]))


class TestRate:
    def test_double_well_beta20(self, dw_catalog, dw_alpha_inf):
        rep = kramers.ek_rate(dw_catalog, dw_alpha_inf, 20.0)
        want = math.exp(-5.0) * math.sqrt(2.0) / (2 * math.pi)
        assert abs(rep.lambda1 - want) < 1e-6
        assert abs(rep.lambda1 - 1.5166e-3) < 1e-6
        assert rep.lambda2_h == 1.0
        assert rep.barrier == pytest.approx(0.25, abs=1e-12)

    def test_wall_at_saddle_doubles_prefactor(self, dw_catalog, dw_alpha_inf):
        n = len(dw_catalog.points)
        a0 = harmonic.AlphaVector.from_mapping(n, {0: "inf", 1: "excluded", 2: 0.0})
        rep0 = kramers.ek_rate(dw_catalog, a0, 20.0)
        repi = kramers.ek_rate(dw_catalog, dw_alpha_inf, 20.0)
        assert rep0.prefactor == pytest.approx(2.0 * repi.prefactor, rel=1e-14)

    def test_two_symmetric_saddles_double_the_rate(self):
        def catalog(n_saddles):
            pts = [CriticalPoint(np.zeros(1), 0.0, 0, np.array([2.0]), np.eye(1))]
            for k in range(n_saddles):
                pts.append(CriticalPoint(np.array([1.0 + k]), 1.0, 1,
                                         np.array([-1.0]), np.eye(1)))
            return CriticalCatalog(points=pts, z0=0,
                                   i_min=tuple(range(1, n_saddles + 1)), v_star=1.0)

        one = kramers.ek_rate(catalog(1), harmonic.AlphaVector.uniform(2, math.inf), 5.0)
        two = kramers.ek_rate(catalog(2), harmonic.AlphaVector.uniform(3, math.inf), 5.0)
        assert two.prefactor == 2.0 * one.prefactor
        assert two.prefactor == sum(t.value for t in two.terms)

    def test_log_rate_affine_in_beta(self, dw_catalog, dw_alpha_inf):
        betas = np.array([5.0, 10.0, 20.0, 40.0])
        logs = [math.log(kramers.ek_rate(dw_catalog, dw_alpha_inf, b).lambda1)
                for b in betas]
        slopes = np.diff(logs) / np.diff(betas)
        np.testing.assert_allclose(slopes, -0.25, rtol=1e-12)

    def test_prefactor_monotone_in_imin_alpha(self, dw_catalog):
        n = len(dw_catalog.points)
        values = []
        for a in (-1.0, 0.0, 1.0, math.inf):
            av = harmonic.AlphaVector.from_mapping(
                n, {0: "inf", 1: "excluded", 2: a if a != math.inf else "inf"})
            values.append(kramers.ek_rate(dw_catalog, av, 10.0,
                                          with_lambda2=False).prefactor)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_classical_reduction(self, dw_catalog, dw_alpha_inf):
        rep = kramers.ek_rate(dw_catalog, dw_alpha_inf, 10.0)
        term = rep.terms[0]
        assert term.phi_value == 1.0
        classical = term.nu1_abs / (2 * math.pi) * term.det_ratio_sqrt
        assert rep.prefactor == classical

    def test_separation_uses_assembled_lambda2(self, dw_catalog, dw_alpha_inf):
        rep = kramers.ek_rate(dw_catalog, dw_alpha_inf, 20.0)
        assert rep.separation == pytest.approx((rep.lambda2_h - rep.lambda1) / rep.lambda1)


class TestPreconditions:
    def test_two_far_minima_rejected(self, dw_catalog):
        av = harmonic.AlphaVector.uniform(len(dw_catalog.points), math.inf)
        with pytest.raises(PreconditionViolated) as err:
            kramers.ek_rate(dw_catalog, av, 10.0)
        assert err.value.hypothesis == "one_minimum"

    def test_z0_must_be_far(self, dw_catalog):
        av = harmonic.AlphaVector.from_mapping(
            len(dw_catalog.points), {0: 1.0, 1: "excluded", 2: "inf"})
        with pytest.raises(PreconditionViolated) as err:
            kramers.ek_rate(dw_catalog, av, 10.0)
        assert err.value.hypothesis == "one_minimum"

    def test_x_set_forced_far(self, basin_catalog):
        n = len(basin_catalog.points)
        mapping = {i: "excluded" if basin_catalog.points[i].index == 0
                   and i != basin_catalog.z0 else "inf" for i in range(n)}
        mapping[basin_catalog.x_set[0]] = 0.0
        av = harmonic.AlphaVector.from_mapping(n, mapping)
        with pytest.raises(PreconditionViolated) as err:
            kramers.ek_rate(basin_catalog, av, 10.0)
        assert err.value.hypothesis == "x_set_far"

    def test_unclassified_catalog_rejected(self):
        pts = [CriticalPoint(np.zeros(1), 0.0, 0, np.array([1.0]), np.eye(1))]
        cat = CriticalCatalog(points=pts)
        with pytest.raises(PreconditionViolated):
            kramers.ek_rate(cat, harmonic.AlphaVector.uniform(1, math.inf), 1.0)

    def test_empty_imin(self):
        pts = [CriticalPoint(np.zeros(1), 0.0, 0, np.array([1.0]), np.eye(1))]
        cat = CriticalCatalog(points=pts, z0=0, i_min=())
        with pytest.raises(NoSeparatingSaddle):
            kramers.ek_rate(cat, harmonic.AlphaVector.uniform(1, math.inf), 1.0)

    def test_basin_figure_rate_runs(self, basin_catalog):
        n = len(basin_catalog.points)
        mapping = {}
        for i in range(n):
            if basin_catalog.points[i].index == 0 and i != basin_catalog.z0:
                mapping[i] = "excluded"
            elif i in basin_catalog.i_min:
                mapping[i] = 0.0
            else:
                mapping[i] = "inf"
        av = harmonic.AlphaVector.from_mapping(n, mapping)
        rep = kramers.ek_rate(basin_catalog, av, 6.0)
        assert rep.lambda1 > 0
        assert len(rep.terms) == 3
        # symmetric saddles contribute identical terms
        vals = [t.value for t in rep.terms]
        assert max(vals) - min(vals) < 1e-9 * max(vals)
