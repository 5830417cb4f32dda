"""Morse potentials with exact derivatives, and their critical-point catalogs.

Built-in families (1D polynomials, multivariate monomial polynomials, and
quadratic confinement plus Gaussian wells/bumps) carry closed-form gradients
and Hessians so that finite-difference error never enters downstream
validation.  The catalog machinery finds critical points by damped Newton
iteration from a seed grid, classifies them by Hessian eigendecomposition,
and identifies the saddles separating a reference minimum from other basins
by probing the gradient flow on both sides of each unstable direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateHessian, NonConvergence, NoSeparatingSaddle


class PotentialModel:
    """Analytic scalar field with exact gradient and Hessian.

    Subclasses implement value/gradient/hessian for a single point (shape
    (d,)) and may override the *_many batch variants for speed.
    """

    family = "abstract"

    def __init__(self, dim: int, search_box, name: str = "", params: dict | None = None):
        self.dim = int(dim)
        self.search_box = np.asarray(search_box, dtype=float).reshape(self.dim, 2)
        self.name = name or self.family
        self.params = params or {}

    # single-point interface
    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def laplacian(self, x: np.ndarray) -> float:
        return float(np.trace(self.hessian(x)))

    # batch interface (rows of X are points)
    def value_many(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.value(x) for x in np.atleast_2d(X)])

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.gradient(x) for x in np.atleast_2d(X)])

    @property
    def box_diameter(self) -> float:
        return float(np.linalg.norm(self.search_box[:, 1] - self.search_box[:, 0]))

    def in_box(self, x: np.ndarray, margin: float = 0.0) -> bool:
        lo, hi = self.search_box[:, 0] - margin, self.search_box[:, 1] + margin
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def kernel_spec(self) -> dict | None:
        """Drift description consumable by the compiled stepping kernel."""
        return None

    def to_config(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "box": self.search_box.tolist(),
            "name": self.name,
        }


class Polynomial1D(PotentialModel):
    """V(x) = sum_k c_k x^k on an interval."""

    family = "poly1d"

    def __init__(self, coeffs, box, name: str = ""):
        coeffs = [float(c) for c in np.atleast_1d(coeffs)]
        super().__init__(1, box, name, {"coeffs": coeffs})
        self._c = np.asarray(coeffs)
        self._dc = np.polynomial.polynomial.polyder(self._c)
        self._ddc = np.polynomial.polynomial.polyder(self._dc)

    def value(self, x):
        return float(np.polynomial.polynomial.polyval(np.asarray(x).reshape(()), self._c))

    def gradient(self, x):
        return np.array([np.polynomial.polynomial.polyval(np.asarray(x).reshape(()), self._dc)])

    def hessian(self, x):
        return np.array([[np.polynomial.polynomial.polyval(np.asarray(x).reshape(()), self._ddc)]])

    def value_many(self, X):
        return np.polynomial.polynomial.polyval(np.atleast_2d(X)[:, 0], self._c)

    def gradient_many(self, X):
        return np.polynomial.polynomial.polyval(np.atleast_2d(X)[:, 0], self._dc)[:, None]

    def kernel_spec(self):
        # drift = -V'; kernel evaluates Horner on the derivative coefficients
        return {"family": "poly1d", "dcoeffs": self._dc.copy()}


def _monomial_partial(terms: np.ndarray, axis: int) -> np.ndarray:
    """d/dx_axis of a monomial list [(c, e_1..e_d)] in the same format."""
    out = []
    for row in terms:
        c, exps = row[0], row[1:].copy()
        if exps[axis] >= 1:
            out.append([c * exps[axis], *[e - (1 if j == axis else 0) for j, e in enumerate(exps)]])
    if not out:
        return np.zeros((0, terms.shape[1]))
    return np.asarray(out, dtype=float)


def _monomial_eval(terms: np.ndarray, x: np.ndarray) -> float:
    total = 0.0
    for row in terms:
        total += row[0] * np.prod(x ** row[1:])
    return float(total)


class PolynomialND(PotentialModel):
    """V(x) = sum over monomials c * prod_j x_j^(e_j), given as rows [c, e_1..e_d]."""

    family = "polynd"

    def __init__(self, terms, box, name: str = ""):
        terms = np.asarray(terms, dtype=float)
        dim = terms.shape[1] - 1
        super().__init__(dim, box, name, {"terms": terms.tolist()})
        self._terms = terms
        self._grad_terms = [_monomial_partial(terms, j) for j in range(dim)]
        self._hess_terms = [
            [_monomial_partial(self._grad_terms[i], j) for j in range(dim)] for i in range(dim)
        ]

    def value(self, x):
        return _monomial_eval(self._terms, np.asarray(x, dtype=float))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([_monomial_eval(t, x) for t in self._grad_terms])

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        h = np.array([[_monomial_eval(self._hess_terms[i][j], x) for j in range(self.dim)]
                      for i in range(self.dim)])
        return 0.5 * (h + h.T)

    def value_many(self, X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for row in self._terms:
            out += row[0] * np.prod(X ** row[1:], axis=1)
        return out

    def gradient_many(self, X):
        X = np.atleast_2d(X)
        out = np.zeros_like(X)
        for j, terms in enumerate(self._grad_terms):
            for row in terms:
                out[:, j] += row[0] * np.prod(X ** row[1:], axis=1)
        return out

    def kernel_spec(self):
        if self.dim != 2:
            return None
        return {
            "family": "poly2d",
            "gx": self._grad_terms[0].copy(),
            "gy": self._grad_terms[1].copy(),
        }


class GaussianWells(PotentialModel):
    """Quadratic confinement plus isotropic Gaussian wells and bumps.

    V(x) = conf |x|^2 + sum_m a_m exp(-|x - c_m|^2 / (2 s_m^2)); negative
    amplitudes dig wells, positive ones raise bumps.
    """

    family = "gauss_wells"

    def __init__(self, centers, amplitudes, widths, conf, box, name: str = ""):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        amplitudes = np.asarray(amplitudes, dtype=float)
        widths = np.asarray(widths, dtype=float)
        super().__init__(centers.shape[1], box, name, {
            "centers": centers.tolist(),
            "amplitudes": amplitudes.tolist(),
            "widths": widths.tolist(),
            "conf": float(conf),
        })
        self._c = centers
        self._a = amplitudes
        self._s2 = widths**2
        self._conf = float(conf)

    def _bumps(self, x):
        dx = x[None, :] - self._c
        return dx, self._a * np.exp(-0.5 * np.sum(dx**2, axis=1) / self._s2)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        _, g = self._bumps(x)
        return float(self._conf * np.dot(x, x) + g.sum())

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        dx, g = self._bumps(x)
        return 2.0 * self._conf * x - np.sum((g / self._s2)[:, None] * dx, axis=0)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        dx, g = self._bumps(x)
        h = 2.0 * self._conf * np.eye(self.dim)
        for m in range(len(self._a)):
            outer = np.outer(dx[m], dx[m])
            h += (g[m] / self._s2[m] ** 2) * outer - (g[m] / self._s2[m]) * np.eye(self.dim)
        return h

    def value_many(self, X):
        X = np.atleast_2d(X)
        out = self._conf * np.sum(X**2, axis=1)
        for m in range(len(self._a)):
            d2 = np.sum((X - self._c[m]) ** 2, axis=1)
            out += self._a[m] * np.exp(-0.5 * d2 / self._s2[m])
        return out

    def gradient_many(self, X):
        X = np.atleast_2d(X)
        out = 2.0 * self._conf * X
        for m in range(len(self._a)):
            dx = X - self._c[m]
            g = self._a[m] * np.exp(-0.5 * np.sum(dx**2, axis=1) / self._s2[m])
            out -= (g / self._s2[m])[:, None] * dx
        return out

    def kernel_spec(self):
        return {
            "family": "gauss",
            "centers": self._c.copy(),
            "amplitudes": self._a.copy(),
            "s2": self._s2.copy(),
            "conf": self._conf,
        }


_FAMILIES = {}


def _register(cls):
    _FAMILIES[cls.family] = cls
    return cls


_register(Polynomial1D)
_register(PolynomialND)
_register(GaussianWells)


def from_config(cfg: dict) -> PotentialModel:
    """Build a model from {"family": ..., "params": ..., "box": ...}."""
    try:
        family = cfg["family"]
        params = cfg.get("params", {})
        box = cfg["box"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"potential config missing field: {exc}") from exc
    name = cfg.get("name", "")
    if family == "poly1d":
        return Polynomial1D(params["coeffs"], box, name)
    if family == "polynd":
        return PolynomialND(params["terms"], box, name)
    if family == "gauss_wells":
        return GaussianWells(params["centers"], params["amplitudes"], params["widths"],
                             params["conf"], box, name)
    raise ConfigError(f"unknown potential family {family!r}")


def double_well(box=(-2.5, 2.5)) -> Polynomial1D:
    """V(x) = x^4/4 - x^2/2: minima at +-1 (V=-1/4), saddle at 0 (V=0)."""
    return Polynomial1D([0.0, 0.0, -0.5, 0.0, 0.25], [box], name="double_well")


def single_well(box=(-3.0, 3.0)) -> Polynomial1D:
    """V(x) = x^2/2: one minimum at 0."""
    return Polynomial1D([0.0, 0.0, 0.5], [box], name="single_well")


def quartic_2d(box=((-2.0, 2.0), (-2.0, 2.0))) -> PolynomialND:
    """V(x, y) = (x^2-1)^2 + y^2: minima (+-1, 0), saddle (0, 0)."""
    terms = [[1.0, 0, 0], [-2.0, 2, 0], [1.0, 4, 0], [1.0, 0, 2]]
    return PolynomialND(terms, box, name="quartic_2d")


def basin_figure() -> GaussianWells:
    """2D well with three tied separating passes, a higher fourth pass, and a
    non-separating inner saddle.

    A central well, three symmetric satellite wells (passes exactly tied by
    symmetry; the inner bump sits > 11 widths away so its tails cannot break
    the tie at the 1e-9 level), one shallower distant satellite whose pass is
    higher in energy, and an inner bump on the well wall producing a
    non-separating saddle below the pass energy plus a local maximum above
    it.  Classification from the central minimum yields |I_min| = 3, one X
    point, and the fourth pass separating but above V*.
    """
    centers = [[0.0, 0.0]]
    amps = [-2.2]
    widths = [0.8]
    for deg in (90, 210, 330):
        t = math.radians(deg)
        centers.append([2.0 * math.cos(t), 2.0 * math.sin(t)])
        amps.append(-1.2)
        widths.append(0.4)
    t = math.radians(30)
    centers.append([2.6 * math.cos(t), 2.6 * math.sin(t)])
    amps.append(-1.0)
    widths.append(0.22)
    t = math.radians(150)
    centers.append([0.86 * math.cos(t), 0.86 * math.sin(t)])
    amps.append(0.69)
    widths.append(0.11)
    return GaussianWells(centers, amps, widths, 0.2, ((-3.6, 3.6), (-3.6, 3.6)),
                         name="basin_figure")


@dataclass(frozen=True)
class CriticalPoint:
    """A nondegenerate critical point with its Hessian eigendecomposition.

    eigenvalues are ascending, so for an index-1 point the unique negative
    one comes first; eigenvectors holds the matching orthonormal columns.
    oriented marks whether the first column's sign was fixed by the basin
    normal (separating saddles) rather than left as the eigensolver returned.
    """

    position: np.ndarray
    energy: float
    index: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    oriented: bool = False

    @property
    def dim(self) -> int:
        return self.position.size

    @property
    def nu1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def v1(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "energy": self.energy,
            "index": self.index,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "oriented": self.oriented,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CriticalPoint":
        return cls(
            position=np.asarray(d["position"], dtype=float),
            energy=float(d["energy"]),
            index=int(d["index"]),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            eigenvectors=np.asarray(d["eigenvectors"], dtype=float),
            oriented=bool(d.get("oriented", False)),
        )


@dataclass
class CriticalCatalog:
    """Critical points enumerated minima-first, plus the separating structure.

    After classify_saddles: z0 is the reference minimum's index, i_min the
    lowest-energy separating saddles, v_star their energy, x_set the
    non-separating low-energy boundary points forced far from the boundary.
    basin_oracle (not serialized) maps a point to the index of the minimum
    its gradient flow reaches.
    """

    points: list
    z0: int | None = None
    i_min: tuple = ()
    v_star: float = math.inf
    x_set: tuple = ()
    probe_targets: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    basin_oracle: object = None

    def __len__(self):
        return len(self.points)

    @property
    def n_minima(self) -> int:
        return sum(1 for p in self.points if p.index == 0)

    @property
    def minima(self) -> list:
        return [i for i, p in enumerate(self.points) if p.index == 0]

    def barrier(self) -> float:
        if self.z0 is None:
            return math.inf
        return self.v_star - self.points[self.z0].energy

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "z0": self.z0,
            "i_min": list(self.i_min),
            "v_star": self.v_star if math.isfinite(self.v_star) else "inf",
            "x_set": list(self.x_set),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CriticalCatalog":
        v_star = d.get("v_star", "inf")
        return cls(
            points=[CriticalPoint.from_dict(p) for p in d["points"]],
            z0=d.get("z0"),
            i_min=tuple(d.get("i_min", ())),
            v_star=math.inf if v_star == "inf" else float(v_star),
            x_set=tuple(d.get("x_set", ())),
            diagnostics=d.get("diagnostics", {}),
        )

    def verify(self, model: PotentialModel, tol: float = 1e-9) -> None:
        """Re-check the stationarity and diagonalization invariants."""
        for p in self.points:
            g = np.linalg.norm(model.gradient(p.position))
            if g > tol:
                raise NonConvergence(f"catalog point at {p.position} has |grad|={g:.2e}")
            d = p.eigenvectors.T @ model.hessian(p.position) @ p.eigenvectors
            if np.max(np.abs(d - np.diag(p.eigenvalues))) > 1e-8:
                raise DegenerateHessian(f"eigendecomposition stale at {p.position}")


def _newton_polish(model, x0, tol, max_iter=120):
    """Damped Newton for grad V = 0 with a |grad|^2 merit backtracking."""
    x = np.asarray(x0, dtype=float).copy()
    g = model.gradient(x)
    gn = np.linalg.norm(g)
    for _ in range(max_iter):
        if gn <= tol:
            return x
        h = model.hessian(x)
        try:
            p = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            p = -g
        if not np.all(np.isfinite(p)):
            return None
        step = 1.0
        for _ in range(30):
            x_new = x + step * p
            g_new = model.gradient(x_new)
            gn_new = np.linalg.norm(g_new)
            if np.isfinite(gn_new) and gn_new < (1.0 - 0.25 * step) * gn + tol:
                break
            step *= 0.5
        else:
            return None
        x, g, gn = x_new, g_new, gn_new
    return x if gn <= tol else None


def _default_seeds(model: PotentialModel, per_dim: int | None = None) -> np.ndarray:
    if per_dim is None:
        per_dim = {1: 41, 2: 17}.get(model.dim, 7)
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in model.search_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def find_critical_points(model: PotentialModel, seeds=None, *, newton_tol: float = 1e-9,
                         degeneracy_tol: float = 1e-8, dedupe_radius: float | None = None,
                         box_margin_rel: float = 1e-9) -> CriticalCatalog:
    """Newton-converge every seed, dedupe, classify, enumerate minima-first.

    seeds may be an explicit (m, d) array, an int (grid points per
    dimension), or None for the default grid.  Failed seeds are counted in
    the catalog diagnostics, not raised; a degenerate Hessian at a converged
    point is fatal (the Morse assumption is violated).
    """
    if seeds is None:
        seeds = _default_seeds(model)
    elif np.isscalar(seeds):
        seeds = _default_seeds(model, int(seeds))
    else:
        seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if dedupe_radius is None:
        dedupe_radius = 1e-6 * model.box_diameter
    margin = box_margin_rel * model.box_diameter

    roots: list[np.ndarray] = []
    n_failed = 0
    for s in seeds:
        x = _newton_polish(model, s, newton_tol)
        if x is None or not model.in_box(x, margin):
            n_failed += 1
            continue
        if any(np.linalg.norm(x - r) <= dedupe_radius for r in roots):
            continue
        roots.append(x)

    points = []
    for x in roots:
        h = model.hessian(x)
        vals, vecs = np.linalg.eigh(h)
        if np.min(np.abs(vals)) <= degeneracy_tol:
            raise DegenerateHessian(
                f"critical point at {x} has |nu|_min = {np.min(np.abs(vals)):.2e}"
            )
        points.append(CriticalPoint(
            position=x,
            energy=model.value(x),
            index=int(np.sum(vals < 0)),
            eigenvalues=vals,
            eigenvectors=vecs,
        ))

    points.sort(key=lambda p: (p.index, p.energy, tuple(p.position)))
    return CriticalCatalog(points=points, diagnostics={"n_seeds": len(seeds),
                                                       "n_failed": n_failed})


def _rk4_step(model, x, h):
    k1 = -model.gradient(x)
    k2 = -model.gradient(x + 0.5 * h * k1)
    k3 = -model.gradient(x + 0.5 * h * k2)
    k4 = -model.gradient(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow_to_minimum(model: PotentialModel, x, catalog: CriticalCatalog, *,
                    t_max: float = 500.0, tol: float | None = None) -> int:
    """Integrate x' = -grad V(x) until a catalog minimum is within tol.

    RK4 with step-doubling error control (one full step against two half
    steps), which keeps the step inside the stability region as the gradient
    shrinks near a minimum.  Raises NonConvergence if the trajectory leaves
    the search box or t_max elapses first.
    """
    diam = model.box_diameter
    if tol is None:
        tol = 1e-4 * diam
    minima = [(i, catalog.points[i].position) for i in catalog.minima]
    if not minima:
        raise NonConvergence("catalog has no minima to flow to")
    x = np.asarray(x, dtype=float).copy()
    atol = 1e-8 * diam
    h = 1e-3
    t = 0.0
    for _ in range(200000):
        for i, pos in minima:
            if np.linalg.norm(x - pos) <= tol:
                return i
        if t >= t_max:
            break
        if np.linalg.norm(model.gradient(x)) < 1e-14:
            raise NonConvergence(f"flow stalled at a non-minimal stationary point {x}")
        h = min(h, t_max - t)
        while True:
            full = _rk4_step(model, x, h)
            half = _rk4_step(model, _rk4_step(model, x, 0.5 * h), 0.5 * h)
            err = float(np.max(np.abs(full - half)))
            if np.isfinite(err) and err <= atol:
                break
            h *= 0.5
            if h < 1e-12:
                raise NonConvergence(f"flow step underflow at {x}")
        x = half
        t += h
        if err < atol / 32.0:
            h *= 2.0
        if not model.in_box(x, 0.05 * diam):
            raise NonConvergence(f"flow left the search box at {x}")
    raise NonConvergence(f"flow did not reach a minimum within t_max={t_max}")


def _probe(model, catalog, point, direction, eps):
    try:
        return flow_to_minimum(model, point.position + eps * direction, catalog)
    except NonConvergence:
        return None


def classify_saddles(model: PotentialModel, catalog: CriticalCatalog, z0: int, *,
                     eps_rel: float = 1e-4, energy_tol: float = 1e-9,
                     x_set_override=None) -> CriticalCatalog:
    """Fill z0, I_min, V_star and the X set by gradient-flow probing.

    An index-1 saddle separates z0's basin from another when the two flows
    launched from +-eps along its unstable direction reach z0 on exactly one
    side.  A probe escaping the search box counts as reaching an exterior
    basin.  X membership (low-energy boundary points that are not separating
    saddles) uses the heuristic documented in the module: every unstable-
    direction probe returns to z0 and the energy lies below V_star; an
    explicit x_set_override wins over the heuristic.
    """
    if catalog.points[z0].index != 0:
        raise NonConvergence(f"z0={z0} is not a minimum")
    eps = eps_rel * model.box_diameter

    separating = {}
    probe_targets = {}
    for i, p in enumerate(catalog.points):
        if p.index != 1:
            continue
        lo = _probe(model, catalog, p, -p.v1, eps)
        hi = _probe(model, catalog, p, p.v1, eps)
        probe_targets[i] = (lo, hi)
        hits_z0 = (lo == z0) + (hi == z0)
        if hits_z0 == 1:
            separating[i] = (lo, hi)

    if not separating:
        raise NoSeparatingSaddle(f"no index-1 saddle separates minimum {z0}")
    v_star = min(catalog.points[i].energy for i in separating)
    i_min = tuple(sorted(i for i in separating
                         if catalog.points[i].energy <= v_star + energy_tol))

    points = list(catalog.points)
    for i in separating:
        p = points[i]
        lo, _ = separating[i]
        # orient v1 outward from basin(z0): flip if the +v1 probe returned home
        if lo != z0:
            vecs = p.eigenvectors.copy()
            vecs[:, 0] = -vecs[:, 0]
            points[i] = replace(p, eigenvectors=vecs, oriented=True)
        else:
            points[i] = replace(p, oriented=True)

    if x_set_override is not None:
        x_set = tuple(sorted(int(i) for i in x_set_override))
    else:
        x_set = []
        for i, p in enumerate(points):
            if i in separating or p.index == 0 or not p.energy < v_star:
                continue
            if p.index == 1 and probe_targets[i] != (z0, z0):
                continue
            returns_home = True
            for j in range(p.index):
                for sign in (-1.0, 1.0):
                    if _probe(model, catalog, p, sign * p.eigenvectors[:, j], eps) != z0:
                        returns_home = False
                        break
                if not returns_home:
                    break
            if returns_home:
                x_set.append(i)
        x_set = tuple(x_set)

    catalog_out = CriticalCatalog(
        points=points,
        z0=z0,
        i_min=i_min,
        v_star=v_star,
        x_set=x_set,
        probe_targets=probe_targets,
        diagnostics=dict(catalog.diagnostics),
        basin_oracle=lambda x: flow_to_minimum(model, x, catalog),
    )
    return catalog_out
