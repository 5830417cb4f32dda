import math

import numpy as np
import pytest

import metawell as mw
from metawell import potentials
from metawell.errors import DegenerateHessian, NoSeparatingSaddle, NonConvergence


def fd_gradient(model, x, h=1e-6):
    g = np.zeros(model.dim)
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = h
        g[j] = (model.value(x + e) - model.value(x - e)) / (2 * h)
    return g


def fd_hessian(model, x, h=1e-5):
    hess = np.zeros((model.dim, model.dim))
    for j in range(model.dim):
        e = np.zeros(model.dim)
        e[j] = h
        hess[:, j] = (model.gradient(x + e) - model.gradient(x - e)) / (2 * h)
    return hess


ALL_MODELS = [
    mw.double_well(),
    mw.single_well(),
    mw.quartic_2d(),
    mw.potentials.basin_figure(),
    mw.PolynomialND([[0.3, 3, 1], [1.0, 2, 0], [0.7, 0, 4], [-0.2, 1, 2]],
                    ((-1.5, 1.5), (-1.5, 1.5)), name="mixed"),
]


class TestDerivativeConsistency:
    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_gradient_matches_differences(self, model):
        rng = np.random.default_rng(1)
        lo, hi = model.search_box[:, 0], model.search_box[:, 1]
        for _ in range(25):
            x = rng.uniform(lo + 0.05, hi - 0.05)
            g = model.gradient(x)
            ref = fd_gradient(model, x)
            scale = np.linalg.norm(ref) + 1.0
            assert np.linalg.norm(g - ref) <= 1e-6 * scale

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_hessian_matches_gradient_differences(self, model):
        rng = np.random.default_rng(2)
        lo, hi = model.search_box[:, 0], model.search_box[:, 1]
        for _ in range(15):
            x = rng.uniform(lo + 0.05, hi - 0.05)
            h = model.hessian(x)
            ref = fd_hessian(model, x)
            scale = np.linalg.norm(ref) + 1.0
            assert np.linalg.norm(h - ref) <= 1e-5 * scale

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_hessian_exactly_symmetric(self, model):
        rng = np.random.default_rng(3)
        lo, hi = model.search_box[:, 0], model.search_box[:, 1]
        for _ in range(10):
            h = model.hessian(rng.uniform(lo, hi))
            assert np.array_equal(h, h.T)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.name)
    def test_batch_matches_pointwise(self, model):
        rng = np.random.default_rng(4)
        lo, hi = model.search_box[:, 0], model.search_box[:, 1]
        pts = rng.uniform(lo, hi, size=(8, model.dim))
        np.testing.assert_allclose(model.value_many(pts),
                                   [model.value(p) for p in pts], rtol=1e-13)
        np.testing.assert_allclose(model.gradient_many(pts),
                                   [model.gradient(p) for p in pts], rtol=1e-13)


class TestCriticalSearch:
    def test_double_well_points(self, dw_model):
        cat = mw.find_critical_points(dw_model, seeds=21)
        # oracle: roots of V' = x^3 - x from the companion-matrix root finder
        roots = np.sort(np.roots([1.0, 0.0, -1.0, 0.0]).real)
        found = np.sort([p.position[0] for p in cat.points])
        np.testing.assert_allclose(found, roots, atol=1e-8)
        minima = [p for p in cat.points if p.index == 0]
        saddle = [p for p in cat.points if p.index == 1]
        assert len(minima) == 2 and len(saddle) == 1
        for p in minima:
            assert abs(p.energy + 0.25) < 1e-12
            assert abs(p.eigenvalues[0] - 2.0) < 1e-8
        assert abs(saddle[0].energy) < 1e-12
        assert abs(saddle[0].eigenvalues[0] + 1.0) < 1e-8

    def test_single_well_trivial(self):
        cat = mw.find_critical_points(mw.single_well(), seeds=11)
        assert len(cat.points) == 1
        p = cat.points[0]
        assert p.index == 0 and abs(p.position[0]) < 1e-10
        assert abs(p.eigenvalues[0] - 1.0) < 1e-10

    def test_quartic_2d_hessian(self):
        cat = mw.find_critical_points(mw.quartic_2d(), seeds=9)
        assert len(cat.points) == 3
        saddle = [p for p in cat.points if p.index == 1][0]
        np.testing.assert_allclose(saddle.position, [0, 0], atol=1e-9)
        np.testing.assert_allclose(saddle.eigenvalues, [-4.0, 2.0], atol=1e-8)
        assert abs(abs(saddle.v1[0]) - 1.0) < 1e-8  # unstable direction is e_x
        for p in cat.points:
            if p.index == 0:
                np.testing.assert_allclose(np.abs(p.position), [1, 0], atol=1e-9)

    def test_minima_enumerated_first(self, basin_catalog):
        indices = [p.index for p in basin_catalog.points]
        assert indices == sorted(indices)

    def test_diagonalization_invariant(self, dw_model):
        cat = mw.find_critical_points(dw_model, seeds=21)
        for p in cat.points:
            d = p.eigenvectors.T @ dw_model.hessian(p.position) @ p.eigenvectors
            assert np.max(np.abs(d - np.diag(p.eigenvalues))) < 1e-8

    def test_degenerate_hessian_fatal(self):
        flat_min = mw.Polynomial1D([0, 0, 0, 0, 1.0], [(-1.5, 1.5)])  # V = x^4
        with pytest.raises(DegenerateHessian):
            mw.find_critical_points(flat_min, seeds=9)

    def test_explicit_seed_list(self, dw_model):
        cat = mw.find_critical_points(dw_model, seeds=np.array([[0.9], [-0.9], [0.1]]))
        assert len(cat.points) == 3


class TestFlow:
    def test_left_basin(self, dw_model, dw_catalog):
        assert mw.flow_to_minimum(dw_model, [-0.3], dw_catalog) == 0

    def test_fixed_point(self, dw_model, dw_catalog):
        assert mw.flow_to_minimum(dw_model, [-1.0], dw_catalog) == 0

    def test_2d_basin(self, basin_model, basin_catalog):
        z0 = basin_catalog.z0
        assert mw.flow_to_minimum(basin_model, [0.25, -0.2], basin_catalog) == z0

    def test_not_converged_outside(self, dw_model, dw_catalog):
        steep = mw.Polynomial1D([0.0, -1.0], [(-1.0, 1.0)])  # V = -x: no minimum
        cat = potentials.CriticalCatalog(points=list(dw_catalog.points))
        with pytest.raises(NonConvergence):
            mw.flow_to_minimum(steep, [0.5], cat, t_max=5.0)

    def test_flow_invariance_under_short_flow(self, dw_model, dw_catalog):
        rng = np.random.default_rng(7)
        count = 0
        for _ in range(100):
            x = np.array([rng.uniform(-2.2, 2.2)])
            if abs(x[0]) < 0.05:  # skip the basin boundary neighborhood
                continue
            target = mw.flow_to_minimum(dw_model, x, dw_catalog)
            moved = potentials._rk4_step(dw_model, x, 1e-3)
            assert mw.flow_to_minimum(dw_model, moved, dw_catalog) == target
            count += 1
        assert count > 80

    def test_minima_interior(self, dw_model, dw_catalog):
        rng = np.random.default_rng(8)
        for i in dw_catalog.minima:
            z = dw_catalog.points[i].position
            for _ in range(5):
                x = z + 1e-3 * rng.normal(size=1)
                assert mw.flow_to_minimum(dw_model, x, dw_catalog) == i


class TestClassification:
    def test_double_well(self, dw_catalog):
        assert dw_catalog.z0 == 0
        assert dw_catalog.i_min == (2,)
        assert abs(dw_catalog.v_star) < 1e-12
        assert abs(dw_catalog.barrier() - 0.25) < 1e-12
        assert dw_catalog.x_set == ()

    def test_saddle_oriented_outward(self, dw_model, dw_catalog):
        saddle = dw_catalog.points[2]
        assert saddle.oriented
        # z0 = -1; the outward basin normal at the saddle points toward +1
        assert saddle.v1[0] > 0

    def test_single_well_raises(self):
        sw = mw.single_well()
        cat = mw.find_critical_points(sw, seeds=11)
        with pytest.raises(NoSeparatingSaddle):
            mw.classify_saddles(sw, cat, z0=0)

    def test_basin_figure_topology(self, basin_catalog):
        cat = basin_catalog
        # five minima, five index-1 saddles, one local maximum
        assert [p.index for p in cat.points].count(0) == 5
        assert [p.index for p in cat.points].count(1) == 5
        assert len(cat.i_min) == 3
        # the three lowest passes tie exactly (symmetric satellites)
        energies = [cat.points[i].energy for i in cat.i_min]
        assert max(energies) - min(energies) < 1e-9
        # one non-separating saddle below V*, in X
        assert len(cat.x_set) == 1
        xs = cat.points[cat.x_set[0]]
        assert xs.index == 1 and xs.energy < cat.v_star
        assert cat.probe_targets[cat.x_set[0]] == (cat.z0, cat.z0)
        # the bump maximum sits above V* and is therefore not in X
        maxima = [p for p in cat.points if p.index == 2]
        assert len(maxima) == 1 and maxima[0].energy > cat.v_star
        # the fourth pass separates but lies above V*
        separating_high = [i for i, t in cat.probe_targets.items()
                           if (t[0] == cat.z0) != (t[1] == cat.z0)
                           and i not in cat.i_min]
        assert len(separating_high) == 1
        assert cat.points[separating_high[0]].energy > cat.v_star

    def test_probe_size_stability(self, dw_model):
        raw = mw.find_critical_points(dw_model, seeds=21)
        a = mw.classify_saddles(dw_model, raw, z0=0, eps_rel=1e-4)
        b = mw.classify_saddles(dw_model, raw, z0=0, eps_rel=5e-5)
        assert a.i_min == b.i_min and a.x_set == b.x_set

    def test_x_override(self, dw_model):
        raw = mw.find_critical_points(dw_model, seeds=21)
        cat = mw.classify_saddles(dw_model, raw, z0=0, x_set_override=[1])
        assert cat.x_set == (1,)

    def test_post_classification_stationarity(self, dw_model, dw_catalog):
        dw_catalog.verify(dw_model, tol=1e-9)

    def test_basin_oracle(self, dw_catalog):
        assert dw_catalog.basin_oracle(np.array([-0.4])) == 0
        assert dw_catalog.basin_oracle(np.array([0.4])) == 1


class TestSerialization:
    def test_catalog_roundtrip(self, dw_catalog):
        d = dw_catalog.to_dict()
        back = potentials.CriticalCatalog.from_dict(d)
        assert back.z0 == dw_catalog.z0
        assert back.i_min == dw_catalog.i_min
        assert back.v_star == dw_catalog.v_star
        for p, q in zip(back.points, dw_catalog.points):
            np.testing.assert_array_equal(p.position, q.position)
            np.testing.assert_array_equal(p.eigenvalues, q.eigenvalues)
            np.testing.assert_array_equal(p.eigenvectors, q.eigenvectors)

    def test_model_config_roundtrip(self):
        for model in ALL_MODELS:
            back = potentials.from_config(model.to_config())
            x = model.search_box.mean(axis=1) * 0.3
            assert back.value(x) == model.value(x)
            np.testing.assert_array_equal(back.gradient(x), model.gradient(x))
