"""Grid oracle: Dirichlet eigenvalues of the weighted generator form.

Discretizes the Rayleigh quotient

    (1/beta) sum over edges  w_edge (u_a - u_b)^2 / h^2  * h^d
    ------------------------------------------------------------,   w = exp(-beta V),
            sum over nodes  w_node u^2 * h^d

with u = 0 outside the domain, into a symmetric generalized eigenproblem
A u = lambda M u.  Symmetry is structural, so the computed eigenvalues are
real and ordered regardless of how metastable the well is.  Domains are a
box intersected with per-saddle half-space cuts at offsets alpha/sqrt(beta)
(1D cuts land exactly on grid endpoints; 2D cuts are sharp node masks),
optionally a sublevel set and a basin-membership mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import splu

from . import harmonic
from .errors import EmptyDomain, NoConvergence, UnresolvedCut

DEFAULT_NODES_1D = 1600
DEFAULT_NODES_2D = 160
MIN_INTERIOR_PER_DIM = 200


@dataclass(frozen=True)
class HalfSpaceCut:
    """Boundary piece normal to a critical point's first eigendirection.

    Keeps x with normal . (x - z) < alpha / sqrt(beta); alpha = +inf disables
    the cut.
    """

    z: tuple
    normal: tuple
    alpha: float


@dataclass(frozen=True)
class DomainSpec:
    """Base box, half-space cuts, and optional sublevel/basin masks."""

    dim: int
    lower: tuple
    upper: tuple
    cuts: tuple = ()
    sublevel: float | None = None
    basin_of: int | None = None
    require_inside: tuple | None = None

    @classmethod
    def from_catalog(cls, catalog, alpha: harmonic.AlphaVector, lower, upper,
                     **kwargs) -> "DomainSpec":
        """Cuts at every non-excluded finite-offset critical point."""
        alpha.require_complete(len(catalog.points))
        cuts = []
        for i, p in enumerate(catalog.points):
            if alpha.is_excluded(i) or alpha.alpha(i) == math.inf:
                continue
            cuts.append(HalfSpaceCut(tuple(p.position), tuple(p.v1), alpha.alpha(i)))
        inside = None
        if catalog.z0 is not None:
            inside = tuple(catalog.points[catalog.z0].position)
        dim = catalog.points[0].dim
        return cls(dim, tuple(np.atleast_1d(lower)), tuple(np.atleast_1d(upper)),
                   tuple(cuts), require_inside=inside, **kwargs)

    def finite_cuts(self):
        return [c for c in self.cuts if c.alpha != math.inf]

    def interval_at(self, beta: float) -> tuple[float, float]:
        """Effective 1D interval once cuts are applied at this beta."""
        if self.dim != 1:
            raise ValueError("interval_at is 1D only")
        lo, hi = float(self.lower[0]), float(self.upper[0])
        for c in self.finite_cuts():
            bound = c.z[0] + c.alpha / (c.normal[0] * math.sqrt(beta))
            if c.normal[0] > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
        return lo, hi

    def with_alpha(self, alphas) -> "DomainSpec":
        """Same geometry with every finite cut's offset replaced."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        new_cuts = []
        j = 0
        for c in self.cuts:
            if c.alpha == math.inf:
                new_cuts.append(c)
            else:
                new_cuts.append(replace(c, alpha=float(alphas[min(j, alphas.size - 1)])))
                j += 1
        return replace(self, cuts=tuple(new_cuts))


@dataclass
class EigenProblem:
    """Assembled symmetric pencil (A, M) plus the defining edge list.

    edge_a/edge_b hold interior node indices (-1 marks the Dirichlet
    exterior) and edge_w the edge weights, so the quadratic form can be
    evaluated as the cancellation-free positive sum
    sum_e w_e (u_a - u_b)^2 even when the pencil is badly scaled.
    """

    a_matrix: object
    m_diag: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    edge_w: np.ndarray
    coords: np.ndarray
    h: float
    beta: float
    meta: dict = field(default_factory=dict)

    def quad_form(self, u: np.ndarray) -> float:
        if self.edge_a is None:
            return float(u @ (self.a_matrix @ u))
        ua = np.where(self.edge_a >= 0, u[self.edge_a], 0.0)
        ub = np.where(self.edge_b >= 0, u[self.edge_b], 0.0)
        return float(np.sum(self.edge_w * (ua - ub) ** 2))


@dataclass
class SpectrumEstimate:
    """Eigenvalues at two resolutions with Richardson extrapolation."""

    beta: float
    values: np.ndarray          # extrapolated
    coarse: np.ndarray
    fine: np.ndarray
    error: np.ndarray           # |fine - coarse| / 3
    meta: dict = field(default_factory=dict)


def _basin_labels(model, points: np.ndarray, catalog) -> np.ndarray:
    """Vectorized gradient-flow basin labels for many points at once.

    Fixed global step with doubling control on the worst point; points that
    settle within snap distance of a minimum freeze at its index.
    """
    minima_idx = catalog.minima
    centers = np.array([catalog.points[i].position for i in minima_idx])
    x = np.array(points, dtype=float)
    labels = np.full(len(x), -1, dtype=int)
    active = np.ones(len(x), dtype=bool)
    snap = 1e-3 * model.box_diameter
    h = 1e-3
    for _ in range(100000):
        if not active.any():
            break
        xa = x[active]
        d2 = np.sum((xa[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        nearest = np.argmin(d2, axis=1)
        close = np.sqrt(d2[np.arange(len(xa)), nearest]) <= snap
        if close.any():
            idx = np.flatnonzero(active)
            for row, m in zip(idx[close], nearest[close]):
                labels[row] = minima_idx[m]
            active[idx[close]] = False
            if not active.any():
                break
            xa = x[active]
        g = model.gradient_many(xa)
        full = xa - h * g
        half = xa - 0.5 * h * g
        half = half - 0.5 * h * model.gradient_many(half)
        err = float(np.max(np.abs(full - half))) if len(xa) else 0.0
        if err > 1e-4:
            h *= 0.5
            continue
        x[active] = half
        if err < 1e-6:
            h = min(h * 2.0, 0.05)
    return labels


def _node_mask(model, domain: DomainSpec, beta: float, coords: np.ndarray,
               catalog=None) -> np.ndarray:
    mask = np.ones(len(coords), dtype=bool)
    for c in domain.finite_cuts():
        z = np.asarray(c.z)
        nrm = np.asarray(c.normal)
        mask &= (coords - z) @ nrm < c.alpha / math.sqrt(beta)
    if domain.sublevel is not None:
        mask &= model.value_many(coords) < domain.sublevel
    if domain.basin_of is not None:
        if catalog is None:
            raise ValueError("basin mask needs the catalog")
        labels = np.full(len(coords), -1, dtype=int)
        labels[mask] = _basin_labels(model, coords[mask], catalog)
        mask &= labels == domain.basin_of
    return mask


def _assemble(edge_a, edge_b, edge_w, m_diag, coords, h, beta, meta) -> EigenProblem:
    """Pencil from an edge list: A = sum_e w_e (e_a - e_b)(e_a - e_b)^T."""
    edge_a = np.asarray(edge_a, dtype=np.int64)
    edge_b = np.asarray(edge_b, dtype=np.int64)
    edge_w = np.asarray(edge_w, dtype=float)
    size = m_diag.size
    rows, cols, vals = [], [], []
    diag = np.zeros(size)
    interior = (edge_a >= 0) & (edge_b >= 0)
    np.add.at(diag, edge_a[edge_a >= 0], edge_w[edge_a >= 0])
    np.add.at(diag, edge_b[edge_b >= 0], edge_w[edge_b >= 0])
    rows.extend([edge_a[interior], edge_b[interior], np.arange(size)])
    cols.extend([edge_b[interior], edge_a[interior], np.arange(size)])
    vals.extend([-edge_w[interior], -edge_w[interior], diag])
    a = coo_matrix((np.concatenate(vals),
                    (np.concatenate(rows), np.concatenate(cols))),
                   shape=(size, size)).tocsc()
    return EigenProblem(a, m_diag, edge_a, edge_b, edge_w, coords, h, beta, meta)


def build_problem(model, domain: DomainSpec, beta: float, n: int | None = None,
                  catalog=None) -> EigenProblem:
    """Assemble the weighted-form pencil on an n-per-dimension grid.

    Weights are normalized by the in-domain potential minimum so the entries
    stay representable at large beta; the pencil's eigenvalues are unchanged.
    """
    if domain.dim == 1:
        n = n or DEFAULT_NODES_1D
        lo, hi = domain.interval_at(beta)
        if hi - lo <= 0:
            raise EmptyDomain(f"interval [{lo}, {hi}] is empty at beta={beta}")
        if domain.require_inside is not None:
            z = domain.require_inside[0]
            if not lo < z < hi:
                raise EmptyDomain(f"reference minimum {z} is outside [{lo}, {hi}]")
        h = (hi - lo) / n
        if n < MIN_INTERIOR_PER_DIM:
            raise UnresolvedCut(f"need at least {MIN_INTERIOR_PER_DIM} interior nodes")
        for c in domain.finite_cuts():
            gap = abs(c.alpha) / math.sqrt(beta)
            if 0.0 < gap < 3.0 * h:
                raise UnresolvedCut(
                    f"cut at offset {gap:.3g} from its critical point needs h < {gap / 3:.3g}")
        x = lo + h * np.arange(1, n)
        v_nodes = model.value_many(x[:, None])
        v_edges = model.value_many((lo + h * (np.arange(n) + 0.5))[:, None])
        vref = float(min(v_nodes.min(), v_edges.min()))
        w_edge = np.exp(-beta * (v_edges - vref)) / (beta * h)
        w_node = np.exp(-beta * (v_nodes - vref))
        m = n - 1
        edge_a = np.concatenate([[-1], np.arange(m)])
        edge_b = np.concatenate([np.arange(m), [-1]])
        return _assemble(edge_a, edge_b, w_edge, w_node * h, x[:, None], h, beta,
                         {"interval": (lo, hi), "n": n, "vref": vref})

    if domain.dim != 2:
        raise ValueError("fdsolver supports dimensions 1 and 2")
    n = n or DEFAULT_NODES_2D
    if n > 400:
        raise UnresolvedCut("2D grids are capped at 400 nodes per dimension")
    lo = np.asarray(domain.lower, dtype=float)
    hi = np.asarray(domain.upper, dtype=float)
    h = float(np.max((hi - lo) / n))
    nx, ny = [max(2, int(round((hi[j] - lo[j]) / h))) for j in range(2)]
    xs = lo[0] + h * np.arange(1, nx)
    ys = lo[1] + h * np.arange(1, ny)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
    mask = _node_mask(model, domain, beta, coords, catalog)
    if not mask.any():
        raise EmptyDomain(f"no interior nodes at beta={beta}")
    if domain.require_inside is not None:
        z = np.asarray(domain.require_inside)
        j = int(np.argmin(np.sum((coords - z) ** 2, axis=1)))
        if not mask[j]:
            raise EmptyDomain("reference minimum is outside the masked domain")

    index = np.full(len(coords), -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    grid_index = index.reshape(nx - 1, ny - 1)
    # pad with the exterior so every interior node sees 4 edges
    padded = np.full((nx + 1, ny + 1), -1, dtype=np.int64)
    padded[1:nx, 1:ny] = grid_index
    xpad = lo[0] + h * np.arange(0, nx + 1)
    ypad = lo[1] + h * np.arange(0, ny + 1)

    v_nodes = model.value_many(coords)
    vref = float(v_nodes[mask].min())
    w_node = np.exp(-beta * (v_nodes - vref))

    edge_a, edge_b, mids = [], [], []
    for axis in (0, 1):
        if axis == 0:
            a_idx = padded[:-1, :].ravel()
            b_idx = padded[1:, :].ravel()
            mx = (xpad[:-1, None] + 0.5 * h) + 0.0 * ypad[None, :]
            my = 0.0 * xpad[:-1, None] + ypad[None, :]
        else:
            a_idx = padded[:, :-1].ravel()
            b_idx = padded[:, 1:].ravel()
            mx = xpad[:, None] + 0.0 * ypad[None, :-1]
            my = 0.0 * xpad[:, None] + (ypad[None, :-1] + 0.5 * h)
        keep = (a_idx >= 0) | (b_idx >= 0)
        edge_a.append(a_idx[keep])
        edge_b.append(b_idx[keep])
        mids.append(np.stack([mx.ravel()[keep], my.ravel()[keep]], axis=1))
    edge_a = np.concatenate(edge_a)
    edge_b = np.concatenate(edge_b)
    mids = np.concatenate(mids, axis=0)
    edge_w = np.exp(-beta * (model.value_many(mids) - vref)) / beta
    return _assemble(edge_a, edge_b, edge_w, w_node[mask] * h * h, coords[mask],
                     h, beta, {"n": n, "vref": vref, "shape": (nx - 1, ny - 1)})


def smallest_eigs(problem: EigenProblem, k: int, *, tol: float = 1e-10,
                  max_iter: int = 100000) -> tuple[np.ndarray, np.ndarray]:
    """Shifted inverse power iteration with deflation on the symmetric pencil.

    Works on the similarity transform B = M^(-1/2) A M^(-1/2), whose entries
    involve only ratios of neighboring Gibbs weights and therefore stay
    well-scaled at any beta; the pencil (A, M) itself spans the full
    exp(-beta osc(V)) range and would lose the solve accuracy.  Returns
    (eigenvalues ascending, M-orthonormal eigenvector columns); convergence
    is successive Rayleigh quotients differing by < tol relative, Rayleigh
    quotients evaluated through the cancellation-free edge sum.
    """
    if k > 6:
        raise ValueError("smallest_eigs is intended for k <= 6")
    m = problem.m_diag
    size = m.size
    d = 1.0 / np.sqrt(m)
    scale = diags(d)
    b = (scale @ problem.a_matrix @ scale).tocsc()
    lu = splu(b)
    rng = np.random.default_rng(size)
    values = []
    vectors = []  # z-coordinates: Euclidean-orthonormal

    for _ in range(k):
        z = rng.standard_normal(size)
        for u in vectors:
            z -= u * float(u @ z)
        z /= np.linalg.norm(z)
        rho_prev = math.inf
        for _ in range(max_iter):
            y = lu.solve(z)
            for u in vectors:
                y -= u * float(u @ y)
            y /= np.linalg.norm(y)
            rho = problem.quad_form(d * y)
            z = y
            if abs(rho - rho_prev) <= tol * abs(rho):
                break
            rho_prev = rho
        else:
            raise NoConvergence(f"inverse iteration hit the {max_iter} cap")
        values.append(rho)
        vectors.append(z)
    order = np.argsort(values)
    return (np.array(values)[order],
            np.stack([d * vectors[i] for i in order], axis=1))


def solve_spectrum(model, domain: DomainSpec, beta: float, k: int,
                   n: int | None = None, catalog=None, tol: float = 1e-10) -> SpectrumEstimate:
    """Eigenvalues at resolutions n and 2n with Richardson extrapolation."""
    if n is None:
        n = DEFAULT_NODES_1D if domain.dim == 1 else DEFAULT_NODES_2D
    coarse, _ = smallest_eigs(build_problem(model, domain, beta, n, catalog), k, tol=tol)
    fine, _ = smallest_eigs(build_problem(model, domain, beta, 2 * n, catalog), k, tol=tol)
    rich = fine + (fine - coarse) / 3.0
    return SpectrumEstimate(beta, rich, coarse, fine, np.abs(fine - coarse) / 3.0,
                            meta={"n": n})


@dataclass
class BetaSweep:
    """Eigenvalue sweep over beta with 1/sqrt(beta) extrapolated limits."""

    betas: np.ndarray
    values: np.ndarray          # (n_beta, k)
    errors: np.ndarray
    fitted_limits: np.ndarray   # per eigenvalue index
    rate_rows: list
    meta: dict = field(default_factory=dict)


def _monotone_suffix(values: np.ndarray, min_len: int = 4) -> int:
    """Start index of the longest strictly monotone suffix (noise-tolerant).

    Eigenvalue curves are typically non-monotone at small beta (pre-asymptotic
    dip) and settle into a monotone approach; extrapolating across the dip
    would be misspecified.
    """
    diffs = np.diff(values)
    if diffs.size == 0:
        return 0
    scale = max(abs(float(values[-1])), 1e-300)
    sign = 1.0 if diffs[-1] >= 0 else -1.0
    start = len(values) - 1
    for j in range(diffs.size - 1, -1, -1):
        if sign * diffs[j] < -1e-9 * scale:
            break
        start = j
    if len(values) - start < min_len:
        start = max(0, len(values) - min_len)
    return start


def extrapolate_in_inv_sqrt_beta(betas, values, monotone_tail: bool = True) -> float:
    """Intercept of the least-squares line in x = 1/sqrt(beta).

    With monotone_tail (the default) the fit uses only the trailing monotone
    portion of the curve, i.e. the asymptotic regime.
    """
    betas = np.asarray(betas, dtype=float)
    values = np.asarray(values, dtype=float)
    if monotone_tail:
        start = _monotone_suffix(values)
        betas, values = betas[start:], values[start:]
    x = 1.0 / np.sqrt(betas)
    coeffs = np.polyfit(x, values, 1)
    return float(coeffs[1])


def sweep_beta(model, domain: DomainSpec, betas, k: int, *, n: int | None = None,
               catalog=None, barrier: float | None = None,
               tol: float = 1e-10) -> BetaSweep:
    """Solve the Dirichlet problem across betas and extrapolate the limits.

    When barrier is given, rate_rows additionally track the prefactor
    lambda_1 exp(beta barrier) whose extrapolated limit targets the
    boundary-corrected rate formula.
    """
    betas = np.asarray(sorted(betas), dtype=float)
    values = []
    errors = []
    for beta in betas:
        est = solve_spectrum(model, domain, float(beta), k, n, catalog, tol)
        values.append(est.values)
        errors.append(est.error)
    values = np.array(values)
    errors = np.array(errors)
    fitted = np.array([extrapolate_in_inv_sqrt_beta(betas, values[:, j])
                       for j in range(k)])
    rate_rows = []
    prefactor_limit = None
    if barrier is not None:
        prefs = values[:, 0] * np.exp(betas * barrier)
        for beta, lam1, pref in zip(betas, values[:, 0], prefs):
            rate_rows.append({"beta": beta, "lambda1": lam1, "prefactor": pref})
        prefactor_limit = extrapolate_in_inv_sqrt_beta(betas, prefs)
    return BetaSweep(betas, values, errors, fitted, rate_rows,
                     meta={"prefactor_limit": prefactor_limit, "barrier": barrier})


def build_witten_problem(model, domain: DomainSpec, beta: float,
                         n: int | None = None) -> EigenProblem:
    """FD pencil for the conjugated (Schrodinger) form, eigenvalues = beta * lambda.

    Cross-discretization oracle: -u'' + (beta^2 |V'|^2 / 4 - beta V'' / 2) u
    on the same interval, mass = identity.
    """
    if domain.dim != 1:
        raise ValueError("the Witten cross-check is 1D only")
    n = n or DEFAULT_NODES_1D
    lo, hi = domain.interval_at(beta)
    h = (hi - lo) / n
    x = (lo + h * np.arange(1, n))[:, None]
    grad = model.gradient_many(x)[:, 0]
    lap = np.array([model.laplacian(p) for p in x])
    pot = 0.25 * beta**2 * grad**2 - 0.5 * beta * lap
    m = n - 1
    diag = 2.0 / h**2 + pot
    off = np.full(m - 1, -1.0 / h**2)
    a = coo_matrix(
        (np.concatenate([diag, off, off]),
         (np.concatenate([np.arange(m), np.arange(m - 1), np.arange(1, m)]),
          np.concatenate([np.arange(m), np.arange(1, m), np.arange(m - 1)]))),
        shape=(m, m)).tocsc()
    return EigenProblem(a, np.ones(m), None, None, None, x, h, beta,
                        meta={"witten": True})
