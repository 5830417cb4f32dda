"""Boundary-corrected exit-rate asymptotics and the timescale separation.

The exit rate out of the well around the reference minimum z0 is, to leading
exponential order,

    lambda_1 ~ exp(-beta (V* - V(z0))) * sum over lowest separating saddles of
               |nu_1| / (2 pi Phi(sqrt(|nu_1|) alpha)) * sqrt(det H(z0) / |det H(z_i)|),

where Phi is the standard normal CDF and alpha the saddle's boundary offset
in the sqrt(beta) scaling.  All alpha = +inf recovers the classical formula
(Phi = 1); a boundary through the saddle (alpha = 0) doubles the prefactor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import harmonic
from .errors import NoSeparatingSaddle, PreconditionViolated

_SQRT_PI = math.sqrt(math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_ERF_SERIES_CUT = 2.0


def _erf_series(t: float) -> float:
    """erf(t) for 0 <= t < ~2.5 via the all-positive confluent series."""
    t2 = 2.0 * t * t
    term = 1.0
    total = 1.0
    denom = 1.0
    for n in range(1, 200):
        denom += 2.0
        term *= t2 / denom
        total += term
        if term < 1e-18 * total:
            break
    return 2.0 * t * math.exp(-t * t) / _SQRT_PI * total


def _erfc_cf(t: float) -> float:
    """erfc(t) for t >= ~2 via the Lentz-evaluated continued fraction."""
    tiny = 1e-300
    b = t
    f = b if b != 0.0 else tiny
    c = f
    d = 0.0
    for n in range(1, 300):
        a = 0.5 * n
        d = b + a * d
        d = tiny if d == 0.0 else d
        c = b + a / c
        c = tiny if c == 0.0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-t * t) / _SQRT_PI / f


def phi(x: float) -> float:
    """Standard normal CDF, absolute error below 1e-12, implemented in-repo."""
    if math.isnan(x):
        return math.nan
    if x == math.inf:
        return 1.0
    if x == -math.inf:
        return 0.0
    t = abs(x) * _INV_SQRT2
    if t < _ERF_SERIES_CUT:
        tail = 0.5 * (1.0 - _erf_series(t))
    else:
        tail = 0.5 * _erfc_cf(t)
    return tail if x < 0 else 1.0 - tail


def phi_many(x) -> np.ndarray:
    """Vectorized phi (same algorithm, elementwise)."""
    arr = np.asarray(x, dtype=float)
    out = np.array([phi(float(v)) for v in arr.ravel()])
    return out.reshape(arr.shape)


@dataclass(frozen=True)
class SaddleTerm:
    """One saddle's contribution to the rate prefactor."""

    index: int
    nu1_abs: float
    phi_arg: float
    phi_value: float
    det_ratio_sqrt: float
    value: float
    error_regime: str


@dataclass
class RateReport:
    """Exit-rate asymptotics at one inverse temperature."""

    beta: float
    barrier: float
    prefactor: float
    lambda1: float
    lambda2_h: float
    separation: float
    terms: list
    meta: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "beta": self.beta,
            "lambda1": self.lambda1,
            "lambda2_h": self.lambda2_h,
            "separation": self.separation,
            "prefactor": self.prefactor,
            "barrier": self.barrier,
        }


def _det_ratio_sqrt(nu0: np.ndarray, nui: np.ndarray) -> float:
    ratio = np.prod(nu0) / abs(np.prod(nui))
    return math.sqrt(ratio)


def ek_rate(catalog, alpha: harmonic.AlphaVector, beta: float, *,
            with_lambda2: bool = True, tol: float = 1e-8) -> RateReport:
    """Boundary-corrected exit rate from the well of catalog.z0 at beta.

    Preconditions (each reported by name when violated): the catalog is
    classified with a nonempty I_min; z0 is far from the boundary while every
    other non-excluded minimum is close (hypothesis "one_minimum"); points in
    the X set are far from the boundary (hypothesis "x_set_far").  lambda_2 is
    always taken from the exact harmonic enumeration, never the closed form.
    """
    alpha.require_complete(len(catalog.points))
    if catalog.z0 is None:
        raise PreconditionViolated("classified_catalog", "run classify_saddles first")
    if not catalog.i_min:
        raise NoSeparatingSaddle("I_min is empty: V* = +inf, rate undefined")
    z0 = catalog.z0
    if alpha.is_excluded(z0):
        raise PreconditionViolated("one_minimum", "reference minimum is excluded")
    if alpha.alpha(z0) != math.inf:
        raise PreconditionViolated("one_minimum", f"alpha[z0={z0}] must be +inf")
    for i in catalog.minima:
        if i == z0 or alpha.is_excluded(i):
            continue
        if alpha.alpha(i) == math.inf:
            raise PreconditionViolated(
                "one_minimum", f"minimum {i} is far from the boundary but is not z0")
    for i in catalog.x_set:
        if not alpha.is_excluded(i) and alpha.alpha(i) != math.inf:
            raise PreconditionViolated(
                "x_set_far", f"point {i} lies in X(z0) and must have alpha = +inf")
    for i in catalog.i_min:
        if alpha.is_excluded(i):
            raise PreconditionViolated(
                "i_min_active", f"separating saddle {i} cannot be excluded")

    nu0 = catalog.points[z0].eigenvalues
    barrier = catalog.v_star - catalog.points[z0].energy
    terms = []
    for i in catalog.i_min:
        p = catalog.points[i]
        nu1_abs = abs(p.nu1)
        a_i = alpha.alpha(i)
        arg = math.inf if a_i == math.inf else math.sqrt(nu1_abs) * a_i
        phi_val = phi(arg)
        det_sqrt = _det_ratio_sqrt(nu0, p.eigenvalues)
        value = nu1_abs / (2.0 * math.pi * phi_val) * det_sqrt
        regime = "O(1/(beta delta^2))" if a_i == math.inf else \
            "O(sqrt(beta) gamma + 1/(beta delta^2) + beta^(-1/2))"
        terms.append(SaddleTerm(i, nu1_abs, arg, phi_val, det_sqrt, value, regime))

    prefactor = sum(t.value for t in terms)
    lambda1 = prefactor * math.exp(-beta * barrier)
    lambda2_h = math.nan
    separation = math.nan
    if with_lambda2:
        spectrum = harmonic.assemble(catalog.points, alpha, 2, tol)
        lambda2_h = spectrum[2][0]
        separation = (lambda2_h - lambda1) / lambda1
    return RateReport(
        beta=beta,
        barrier=barrier,
        prefactor=prefactor,
        lambda1=lambda1,
        lambda2_h=lambda2_h,
        separation=separation,
        terms=terms,
        meta={"z0": z0, "i_min": list(catalog.i_min), "v_star": catalog.v_star},
    )
