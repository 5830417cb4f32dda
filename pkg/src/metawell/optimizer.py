"""Asymptotically optimal boundary offsets for the timescale separation.

Maximizes F(alpha) = min{ell(z0), min_i lambda_i(alpha_i)} over the rate
prefactor, where i runs over the lowest separating saddles: the numerator is
the limiting relaxation rate, the denominator the exit-rate prefactor.  The
remaining offsets are then free below per-point thresholds alpha_i* solving
lambda_i(alpha_i*) = lambda*, so the optimal set is a product of half-lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import oscillator
from .errors import CapExceeded, PreconditionViolated
from .kramers import phi, phi_many

MAX_COUPLED_OFFSETS = 4
SEARCH_WINDOW = 10.0


def per_saddle_lambda(point, alpha_i: float, tol: float = 1e-9) -> float:
    """Lowest local harmonic level contributed by one critical point.

    |nu_1| mu_0(alpha sqrt(|nu_1|/2)) - nu_1/2 plus one full quantum for each
    additional unstable mode; strictly decreasing in alpha_i.
    """
    nu = np.asarray(getattr(point, "eigenvalues", point), dtype=float).ravel()
    value = oscillator.omega(float(nu[0]), 0, alpha_i, tol)
    return value + float(np.sum(np.abs(nu[1:]) * (nu[1:] < 0)))


def ell(catalog) -> float:
    """Upper bound on the limiting relaxation rate, over all admissible offsets.

    min of the reference minimum's smallest Hessian eigenvalue and, over the
    X set (points forced far from the boundary), the sum of unstable-mode
    magnitudes.
    """
    if catalog.z0 is None:
        raise PreconditionViolated("classified_catalog", "run classify_saddles first")
    best = float(np.min(catalog.points[catalog.z0].eigenvalues))
    for i in catalog.x_set:
        nu = catalog.points[i].eigenvalues
        best = min(best, float(np.sum(np.abs(nu) * (nu < 0))))
    return best


def _lambda_curve(nu: np.ndarray, alphas: np.ndarray, cache) -> np.ndarray:
    """Vectorized per_saddle_lambda over an alpha grid using the mu cache."""
    scale = math.sqrt(abs(nu[0]) / 2.0)
    shift = float(np.sum(np.abs(nu[1:]) * (nu[1:] < 0))) - 0.5 * nu[0]
    theta = np.where(np.isinf(alphas), np.inf, alphas * scale)
    return abs(nu[0]) * cache(theta) + shift


def _default_grid() -> np.ndarray:
    mag = np.logspace(-2, math.log10(SEARCH_WINDOW), 14)
    return np.concatenate([-mag[::-1], [0.0], mag, [math.inf]])


@dataclass
class OptimizationResult:
    """Optimal offsets for the reduced problem plus the free-offset structure."""

    alpha_star: dict          # I_min index -> optimal offset
    f_star: float
    lambda_star: float        # min{ell, lambda_i(alpha_i*)} at the optimum
    ell_value: float
    thresholds: dict          # other index -> largest admissible offset
    optimal_intervals: dict   # other index -> (-inf, threshold]
    maximizer_set: list       # grid-level maximizers within 1e-6 of the best
    diagnostics: dict = field(default_factory=dict)


def optimize_reduced(catalog, alpha=None, *, grid: np.ndarray | None = None,
                     tol: float = 1e-9, refine: bool = True) -> OptimizationResult:
    """Solve the reduced offset-optimization problem over the I_min saddles.

    Coordinate-wise logarithmic grid on [-10, 10] plus +inf, followed by
    Nelder-Mead refinement of the finite coordinates; if every saddle's
    unstable mode is at least ell(z0), +inf offsets are optimal outright.
    Thresholds for the remaining points come from monotone bisection of
    lambda_i(alpha) = lambda* (returning +inf when already admissible).

    alpha (an AlphaVector) is only consulted for exclusions; offsets being
    optimized are the I_min entries and threshold targets the rest.
    """
    if catalog.z0 is None or not catalog.i_min:
        raise PreconditionViolated("classified_catalog", "need z0 and a nonempty I_min")
    i_min = list(catalog.i_min)
    if len(i_min) > MAX_COUPLED_OFFSETS:
        raise CapExceeded(f"|I_min| = {len(i_min)} exceeds the dense-search cap "
                          f"{MAX_COUPLED_OFFSETS}")
    excluded = alpha.excluded if alpha is not None else frozenset()
    ell_value = ell(catalog)
    z0 = catalog.z0
    nu0 = catalog.points[z0].eigenvalues

    coeffs = []
    for i in i_min:
        p = catalog.points[i]
        det_sqrt = math.sqrt(float(np.prod(nu0)) / abs(float(np.prod(p.eigenvalues))))
        coeffs.append(abs(p.nu1) / (2.0 * math.pi) * det_sqrt)

    def objective(alphas) -> float:
        num = ell_value
        den = 0.0
        for i, a, c in zip(i_min, alphas, coeffs):
            num = min(num, per_saddle_lambda(catalog.points[i], a, tol))
            arg = math.inf if a == math.inf else math.sqrt(abs(catalog.points[i].nu1)) * a
            den += c / phi(arg)
        return num / den

    # short-circuit: sharp unstable modes make +inf offsets optimal
    if all(abs(catalog.points[i].nu1) >= ell_value for i in i_min):
        best_alphas = [math.inf] * len(i_min)
        f_star = objective(best_alphas)
        diag = {"short_circuit": True}
        grid_maximizers = [best_alphas]
    else:
        if grid is None:
            grid = _default_grid()
        cache = oscillator.shared_mu_cache()
        m = len(i_min)
        lam_axes = []
        inv_phi_axes = []
        for idx, i in enumerate(i_min):
            nu = catalog.points[i].eigenvalues
            lam = _lambda_curve(np.asarray(nu, dtype=float), grid, cache)
            args = np.where(np.isinf(grid), np.inf, math.sqrt(abs(nu[0])) * grid)
            inv_phi = 1.0 / phi_many(args)
            shape = [1] * m
            shape[idx] = grid.size
            lam_axes.append(lam.reshape(shape))
            inv_phi_axes.append(coeffs[idx] * inv_phi.reshape(shape))
        num = np.minimum.reduce([np.broadcast_to(a, (grid.size,) * m) for a in lam_axes])
        num = np.minimum(num, ell_value)
        den = np.zeros((grid.size,) * m)
        for a in inv_phi_axes:
            den = den + a
        f_grid = num / den
        best_flat = int(np.argmax(f_grid))
        best_idx = np.unravel_index(best_flat, f_grid.shape)
        best_alphas = [float(grid[j]) for j in best_idx]
        f_best_grid = float(f_grid[best_idx])
        near = np.argwhere(f_grid >= f_best_grid - 1e-6)
        grid_maximizers = [[float(grid[j]) for j in idx] for idx in near[:64]]
        diag = {"short_circuit": False, "grid_size": grid.size,
                "f_grid_max": f_best_grid}

        if refine and any(math.isfinite(a) for a in best_alphas):
            from scipy.optimize import minimize

            free = [k for k, a in enumerate(best_alphas) if math.isfinite(a)]

            def neg_f(x):
                trial = list(best_alphas)
                for k, v in zip(free, x):
                    trial[k] = float(np.clip(v, -SEARCH_WINDOW, SEARCH_WINDOW))
                return -objective(trial)

            x0 = np.array([best_alphas[k] for k in free])
            res = minimize(neg_f, x0, method="Nelder-Mead",
                           options={"xatol": 1e-7, "fatol": 1e-13, "maxiter": 400})
            refined = list(best_alphas)
            for k, v in zip(free, res.x):
                refined[k] = float(np.clip(v, -SEARCH_WINDOW, SEARCH_WINDOW))
            if -res.fun > objective(best_alphas):
                best_alphas = refined
            diag["refine_evaluations"] = int(res.nfev)
        f_star = objective(best_alphas)
        # the compactified candidate may still win at the boundary
        all_inf = [math.inf] * len(i_min)
        if objective(all_inf) >= f_star:
            best_alphas, f_star = all_inf, objective(all_inf)

    lambda_star = ell_value
    for i, a in zip(i_min, best_alphas):
        lambda_star = min(lambda_star, per_saddle_lambda(catalog.points[i], a, tol))

    thresholds = {}
    intervals = {}
    for i, p in enumerate(catalog.points):
        if i == z0 or i in catalog.i_min or i in catalog.x_set or i in excluded:
            continue
        thresholds[i] = _threshold(p, lambda_star, tol)
        intervals[i] = (-math.inf, thresholds[i])

    return OptimizationResult(
        alpha_star=dict(zip(i_min, best_alphas)),
        f_star=f_star,
        lambda_star=lambda_star,
        ell_value=ell_value,
        thresholds=thresholds,
        optimal_intervals=intervals,
        maximizer_set=[dict(zip(i_min, m)) for m in grid_maximizers],
        diagnostics=diag,
    )


def _threshold(point, lambda_star: float, tol: float, alpha_tol: float = 1e-8) -> float:
    """Largest offset keeping point's level at or above lambda_star.

    lambda_i is strictly decreasing from +inf (deep wall) to lambda_i(+inf),
    so the root is unique; returns +inf when lambda_i(+inf) >= lambda_star.
    """
    if per_saddle_lambda(point, math.inf, tol) >= lambda_star:
        return math.inf
    lo = -1.0
    while per_saddle_lambda(point, lo, tol) <= lambda_star:
        lo *= 2.0
        if lo < -1e6:
            raise PreconditionViolated("threshold_bracket", "no lower bracket found")
    hi = max(1.0, -lo)
    while per_saddle_lambda(point, hi, tol) >= lambda_star:
        hi *= 2.0
        if hi > 1e6:
            raise PreconditionViolated("threshold_bracket", "no upper bracket found")
    while hi - lo > alpha_tol:
        mid = 0.5 * (lo + hi)
        if per_saddle_lambda(point, mid, tol) >= lambda_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
