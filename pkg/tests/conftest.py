import numpy as np
import pytest

import metawell as mw
from metawell import harmonic


@pytest.fixture(scope="session")
def dw_model():
    return mw.double_well()


@pytest.fixture(scope="session")
def dw_catalog(dw_model):
    raw = mw.find_critical_points(dw_model, seeds=21)
    return mw.classify_saddles(dw_model, raw, z0=0)


@pytest.fixture(scope="session")
def dw_alpha_inf(dw_catalog):
    # z0 far from the boundary, the second minimum outside the domain
    return harmonic.AlphaVector.from_mapping(
        len(dw_catalog.points), {0: "inf", 1: "excluded", 2: "inf"})


@pytest.fixture(scope="session")
def basin_model():
    return mw.potentials.basin_figure()


@pytest.fixture(scope="session")
def basin_catalog(basin_model):
    raw = mw.find_critical_points(basin_model, seeds=29)
    z0 = min(raw.minima, key=lambda i: raw.points[i].energy)
    return mw.classify_saddles(basin_model, raw, z0=z0)


def random_synthetic_points(rng, n_points=None, dim=None):
    """Synthetic critical-point eigenvalue sets: index 0 first (reference
    minimum), then points with at least one unstable mode."""
    from metawell.potentials import CriticalPoint

    dim = dim or int(rng.integers(1, 4))
    n_points = n_points or int(rng.integers(2, 6))
    pts = []
    nu0 = np.sort(rng.uniform(0.3, 5.0, dim))
    pts.append(CriticalPoint(np.zeros(dim), 0.0, 0, nu0, np.eye(dim)))
    for _ in range(n_points - 1):
        nu = np.sort(rng.uniform(0.3, 5.0, dim))
        k = int(rng.integers(0, dim + 1))
        nu[:k] *= -1
        nu = np.sort(nu)
        pts.append(CriticalPoint(rng.normal(size=dim), float(rng.uniform(0, 2)),
                                 int(np.sum(nu < 0)), nu, np.eye(dim)))
    return pts


@pytest.fixture
def synthetic_points():
    return random_synthetic_points
