"""Laplace method on domains that move with the asymptotic parameter.

For integrals of exp(-lam f) g over sets A_lam that converge, in the
1/sqrt(lam) scaling around the minimizer x0 of f, to a limit region A_inf,
the leading term is the classical Laplace value times P(G in A_inf) with
G ~ N(0, hess f(x0)^{-1}).  The relative error is O(lam^{-1}) when A_inf is
symmetric and O(lam^{-1/2}) otherwise, plus the probability mass of the
symmetric difference between the scaled domain and its limit.

The companion oracle integrates the same quantity by adaptive quadrature
(d <= 2) with the domain resolved exactly through the constraint predicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import ConfigError, DegenerateHessian, ToleranceNotMet, ZeroDensity
from .kramers import phi


@dataclass(frozen=True)
class HalfSpace:
    """Scaled-frame constraint normal . y < offset(lam).

    offset is the limit value; drift, when given, maps lam to the
    scaled-frame offset at finite lam (it must tend to offset).
    """

    normal: tuple
    offset: float
    drift: object = None

    def scaled_offset(self, lam: float | None) -> float:
        if lam is None or self.drift is None:
            return self.offset
        return float(self.drift(lam))


@dataclass(frozen=True)
class Ball:
    """Scaled-frame constraint |y - center| < radius."""

    center: tuple
    radius: float


@dataclass(frozen=True)
class MovingDomainSpec:
    """A_lam = x0 + (scaled region)/sqrt(lam), clipped to a compact hull."""

    dim: int
    x0: tuple
    constraints: tuple = ()
    hull: tuple = ()  # ((lo, hi), ...) per axis

    def __post_init__(self):
        if len(self.x0) != self.dim or len(self.hull) != self.dim:
            raise ConfigError("x0/hull dimension mismatch")

    @property
    def halfspaces(self):
        return [c for c in self.constraints if isinstance(c, HalfSpace)]

    @property
    def balls(self):
        return [c for c in self.constraints if isinstance(c, Ball)]

    def scaled_contains(self, y: np.ndarray, lam: float | None = None) -> bool:
        for c in self.halfspaces:
            if float(np.dot(c.normal, y)) >= c.scaled_offset(lam):
                return False
        for c in self.balls:
            if float(np.linalg.norm(y - np.asarray(c.center))) >= c.radius:
                return False
        return True

    def physical_contains(self, x: np.ndarray, lam: float) -> bool:
        x = np.asarray(x, dtype=float)
        for j, (lo, hi) in enumerate(self.hull):
            if not lo < x[j] < hi:
                return False
        y = math.sqrt(lam) * (x - np.asarray(self.x0))
        return self.scaled_contains(y, lam)

    def is_symmetric(self) -> bool:
        """Structural check that the limit region satisfies A_inf = -A_inf."""
        for b in self.balls:
            if any(abs(c) > 1e-12 for c in b.center):
                return False
        hs = list(self.halfspaces)
        used = [False] * len(hs)
        for i, c in enumerate(hs):
            if used[i]:
                continue
            partner = None
            for j in range(i + 1, len(hs)):
                if used[j]:
                    continue
                if (np.allclose(np.asarray(hs[j].normal), -np.asarray(c.normal))
                        and abs(hs[j].offset - c.offset) < 1e-12):
                    partner = j
                    break
            if partner is None:
                return False
            used[i] = used[partner] = True
        return True

    @property
    def error_order(self) -> int:
        """r in the O(lam^(-r/2)) Taylor error: 2 if symmetric, else 1."""
        return 2 if self.is_symmetric() else 1


@dataclass
class LaplaceResult:
    value: float
    gaussian_prob: float
    prob_stderr: float
    method: str
    meta: dict = field(default_factory=dict)


def _fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    d = x.size
    hess = np.zeros((d, d))
    f0 = f(x)
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d); ei[i] = h
            ej = np.zeros(d); ej[j] = h
            if i == j:
                hess[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
            else:
                hess[i, j] = hess[j, i] = (
                    f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
                ) / (4 * h**2)
    return hess


def gaussian_region_prob(cov: np.ndarray, spec: MovingDomainSpec, *,
                         n_points: int = 1 << 17, n_reps: int = 8,
                         seed: int = 0) -> tuple[float, float, str]:
    """P(G in A_inf) for G ~ N(0, cov): analytic for at most one half-space,
    scrambled-Sobol quasi-Monte Carlo (>= 1e6 points total) otherwise."""
    d = spec.dim
    if not spec.constraints:
        return 1.0, 0.0, "analytic"
    if len(spec.balls) == 0 and len(spec.halfspaces) == 1:
        c = spec.halfspaces[0]
        a = np.asarray(c.normal, dtype=float)
        sigma = math.sqrt(float(a @ cov @ a))
        return phi(c.offset / sigma), 0.0, "analytic"
    chol = np.linalg.cholesky(cov)
    estimates = []
    for r in range(n_reps):
        sampler = qmc.Sobol(d, scramble=True, seed=seed + r)
        u = sampler.random(n_points)
        z = ndtri(np.clip(u, 1e-15, 1 - 1e-15))
        y = z @ chol.T
        inside = np.ones(len(y), dtype=bool)
        for c in spec.halfspaces:
            inside &= y @ np.asarray(c.normal) < c.offset
        for c in spec.balls:
            inside &= np.sum((y - np.asarray(c.center)) ** 2, axis=1) < c.radius**2
        estimates.append(float(np.mean(inside)))
    p = float(np.mean(estimates))
    stderr = float(np.std(estimates, ddof=1) / math.sqrt(n_reps))
    return p, stderr, "qmc"


def laplace_asymptotic(f, g, spec: MovingDomainSpec, lam: float, *,
                       grad_f=None, hess_f=None, seed: int = 0) -> LaplaceResult:
    """Leading Laplace term (2 pi / lam)^(d/2) e^(-lam f(x0)) det^(-1/2) g(x0) P.

    f must have a nondegenerate interior minimum at spec.x0 (checked through
    grad_f/hess_f or central differences); g(x0) must be nonzero.
    """
    x0 = np.asarray(spec.x0, dtype=float)
    d = spec.dim
    grad = np.asarray(grad_f(x0) if grad_f is not None else _fd_gradient(f, x0), dtype=float)
    if np.linalg.norm(grad) > 1e-6:
        raise DegenerateHessian(f"grad f(x0) = {grad} is not zero: x0 is not the minimizer")
    q = np.asarray(hess_f(x0) if hess_f is not None else _fd_hessian(f, x0), dtype=float)
    q = 0.5 * (q + q.T)
    eigs = np.linalg.eigvalsh(q)
    if np.min(eigs) <= 1e-10:
        raise DegenerateHessian(f"hess f(x0) has eigenvalues {eigs}; need positive definite")
    g0 = float(g(x0))
    if g0 == 0.0:
        raise ZeroDensity("g(x0) = 0: the leading order vanishes")

    prob, stderr, method = gaussian_region_prob(np.linalg.inv(q), spec, seed=seed)
    value = ((2.0 * math.pi / lam) ** (0.5 * d) * math.exp(-lam * float(f(x0)))
             * float(np.prod(eigs)) ** -0.5 * g0 * prob)
    return LaplaceResult(value, prob, stderr, method,
                         meta={"lam": lam, "det_hess": float(np.prod(eigs))})


def _interval_1d(spec: MovingDomainSpec, lam: float) -> tuple[float, float]:
    lo, hi = spec.hull[0]
    x0 = spec.x0[0]
    s = math.sqrt(lam)
    for c in spec.halfspaces:
        a = c.normal[0]
        b = c.scaled_offset(lam)
        # a * sqrt(lam) (x - x0) < b
        bound = x0 + b / (a * s)
        if a > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    for c in spec.balls:
        lo = max(lo, x0 + (c.center[0] - c.radius) / s)
        hi = min(hi, x0 + (c.center[0] + c.radius) / s)
    return lo, hi


def _slice_2d(spec: MovingDomainSpec, lam: float, x: float) -> tuple[float, float]:
    """Admissible physical y-interval of the domain at abscissa x."""
    (_, _), (ylo, yhi) = spec.hull
    x0, y0 = spec.x0
    s = math.sqrt(lam)
    u = s * (x - x0)
    for c in spec.halfspaces:
        a1, a2 = c.normal
        b = c.scaled_offset(lam)
        if abs(a2) < 1e-15:
            if a1 * u >= b:
                return 0.0, -1.0
            continue
        bound = y0 + (b - a1 * u) / (a2 * s)
        if a2 > 0:
            yhi = min(yhi, bound)
        else:
            ylo = max(ylo, bound)
    for c in spec.balls:
        du = u - c.center[0]
        disc = c.radius**2 - du * du
        if disc <= 0:
            return 0.0, -1.0
        half = math.sqrt(disc)
        ylo = max(ylo, y0 + (c.center[1] - half) / s)
        yhi = min(yhi, y0 + (c.center[1] + half) / s)
    return ylo, yhi


def _outer_range_2d(spec: MovingDomainSpec, lam: float) -> tuple[float, float]:
    lo, hi = spec.hull[0]
    x0 = spec.x0[0]
    s = math.sqrt(lam)
    for c in spec.halfspaces:
        a1, a2 = c.normal
        if abs(a2) < 1e-15:
            bound = x0 + c.scaled_offset(lam) / (a1 * s)
            if a1 > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
    for c in spec.balls:
        lo = max(lo, x0 + (c.center[0] - c.radius) / s)
        hi = min(hi, x0 + (c.center[0] + c.radius) / s)
    return lo, hi


def laplace_oracle(f, g, spec: MovingDomainSpec, lam: float,
                   rel_tol: float = 1e-10) -> float:
    """Adaptive quadrature of exp(-lam f) g over A_lam (dimension <= 2).

    Domain membership is resolved exactly by the half-space/ball predicates:
    constraints become integration limits slice by slice, so the integrand
    stays smooth inside each call.
    """
    if spec.dim == 1:
        lo, hi = _interval_1d(spec, lam)
        if hi <= lo:
            return 0.0
        pts = [spec.x0[0]] if lo < spec.x0[0] < hi else None
        val, err = integrate.quad(lambda x: math.exp(-lam * f(np.array([x]))) * g(np.array([x])),
                                  lo, hi, epsabs=0.0, epsrel=rel_tol * 0.1,
                                  limit=400, points=pts)
        if err > 50 * rel_tol * abs(val) + 1e-300:
            raise ToleranceNotMet(f"1d quadrature error {err:.2e} vs value {val:.2e}")
        return val

    if spec.dim != 2:
        raise ConfigError("laplace_oracle supports d <= 2")

    xlo, xhi = _outer_range_2d(spec, lam)
    if xhi <= xlo:
        return 0.0

    def inner(x: float) -> float:
        ylo, yhi = _slice_2d(spec, lam, x)
        if yhi <= ylo:
            return 0.0
        pts = [spec.x0[1]] if ylo < spec.x0[1] < yhi else None
        val, _ = integrate.quad(
            lambda y: math.exp(-lam * f(np.array([x, y]))) * g(np.array([x, y])),
            ylo, yhi, epsabs=0.0, epsrel=rel_tol * 0.02, limit=300, points=pts)
        return val

    pts = [spec.x0[0]] if xlo < spec.x0[0] < xhi else None
    val, err = integrate.quad(inner, xlo, xhi, epsabs=0.0, epsrel=rel_tol * 0.1,
                              limit=400, points=pts)
    if err > 50 * rel_tol * abs(val) + 1e-300:
        raise ToleranceNotMet(f"2d quadrature error {err:.2e} vs value {val:.2e}")
    return val


def compare_table(f, g, spec: MovingDomainSpec, lams, *, grad_f=None, hess_f=None,
                  rel_tol: float = 1e-10, seed: int = 0) -> list[dict]:
    """Rows of (lam, asymptotic, oracle, rel_error) for a lambda sweep."""
    rows = []
    for lam in lams:
        asym = laplace_asymptotic(f, g, spec, lam, grad_f=grad_f, hess_f=hess_f,
                                  seed=seed)
        oracle = laplace_oracle(f, g, spec, lam, rel_tol)
        rel = abs(oracle - asym.value) / abs(oracle) if oracle != 0 else math.inf
        rows.append({"lam": lam, "asymptotic": asym.value, "oracle": oracle,
                     "rel_error": rel, "gaussian_prob": asym.gaussian_prob})
    return rows


def fitted_slope(lams, errs) -> float:
    """Least-squares slope of log(err) against log(lam)."""
    x = np.log(np.asarray(lams, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
