"""Global harmonic spectrum: merge of per-critical-point oscillator levels.

Each critical point contributes the spectrum of a separable oscillator whose
first coordinate carries a Dirichlet wall at the point's offset alpha and
whose transverse coordinates are full-line oscillators with frequencies from
the Hessian.  The global spectrum is the sorted union over points, counted
with multiplicity; the second level has a closed form when the ground state
sits at the reference minimum.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import oscillator
from .errors import ConfigError, PatternViolation


@dataclass(frozen=True)
class AlphaVector:
    """Per-critical-point boundary offsets in the sqrt(beta) scaling.

    values[i] in (-inf, +inf]; +inf encodes "far from the boundary".  Indices
    in excluded are treated as outside the englobing compact set entirely
    (e.g. a second minimum the domain cuts away before reaching) and take no
    part in spectra, rates or optimization.
    """

    values: tuple
    excluded: frozenset = frozenset()

    def __post_init__(self):
        for i, v in enumerate(self.values):
            if i in self.excluded:
                continue
            if math.isnan(v) or v == -math.inf:
                raise ConfigError(f"alpha[{i}] must lie in (-inf, +inf], got {v}")

    @classmethod
    def uniform(cls, n: int, value: float, excluded=()) -> "AlphaVector":
        return cls(tuple(float(value) for _ in range(n)), frozenset(excluded))

    @classmethod
    def from_mapping(cls, n: int, mapping: dict, default: float | None = None) -> "AlphaVector":
        values = [math.inf] * n
        excluded = set()
        seen = set()
        for key, raw in mapping.items():
            i = int(key)
            if not 0 <= i < n:
                raise ConfigError(f"alpha index {i} out of range for {n} points")
            seen.add(i)
            if raw == "excluded":
                excluded.add(i)
            elif raw in ("inf", "+inf"):
                values[i] = math.inf
            else:
                values[i] = float(raw)
        if default is None:
            missing = set(range(n)) - seen
            if missing:
                raise ConfigError(f"alpha entries missing for indices {sorted(missing)}")
        else:
            for i in set(range(n)) - seen:
                values[i] = float(default)
        return cls(tuple(values), frozenset(excluded))

    @classmethod
    def from_json(cls, path, n: int) -> "AlphaVector":
        with open(path) as fh:
            raw = json.load(fh)
        default = raw.pop("default", None)
        return cls.from_mapping(n, raw, default=default)

    def alpha(self, i: int) -> float:
        return self.values[i]

    def is_excluded(self, i: int) -> bool:
        return i in self.excluded

    def active_indices(self) -> list:
        return [i for i in range(len(self.values)) if i not in self.excluded]

    def replace(self, i: int, value: float) -> "AlphaVector":
        vals = list(self.values)
        vals[i] = float(value)
        return AlphaVector(tuple(vals), self.excluded)

    def require_complete(self, n: int) -> None:
        if len(self.values) != n:
            raise ConfigError(f"alpha has {len(self.values)} entries, catalog has {n}")


def _point_eigenvalues(point) -> np.ndarray:
    if hasattr(point, "eigenvalues"):
        return np.asarray(point.eigenvalues, dtype=float)
    return np.atleast_1d(np.asarray(point, dtype=float))


@dataclass
class HarmonicSpectrum:
    """The k smallest global harmonic levels with provenance labels."""

    levels: list  # (value, point index i, multi-index tuple n)
    alpha: AlphaVector
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _, _ in self.levels])

    def __getitem__(self, k: int):
        """1-based access: spectrum[1] is the ground level."""
        return self.levels[k - 1]

    def __len__(self):
        return len(self.levels)

    def counting(self, i: int, n: int) -> int:
        """Number of the first n global states localized at point i."""
        return sum(1 for _, j, _ in self.levels[:n] if j == i)

    def rows(self):
        for k, (value, i, n) in enumerate(self.levels, start=1):
            yield {"k": k, "lambda_h": value, "i": i, "n": list(n)}


def _local_level_stream(nu: np.ndarray, theta: float, tol: float):
    """Yield (value, multi-index) for one point in nondecreasing order.

    Lazy best-first search over multi-indices; a child only increments
    coordinates at or after its parent's last incremented one, so each
    multi-index is generated exactly once.
    """
    d = nu.size

    def coord_level(j: int, m: int) -> float:
        if j == 0:
            return oscillator.omega(float(nu[0]), m, theta, tol)
        return abs(nu[j]) * (m + 0.5) - 0.5 * nu[j]

    base = tuple(0 for _ in range(d))
    heap = [(sum(coord_level(j, 0) for j in range(d)), base, 0)]
    while heap:
        value, n, min_coord = heapq.heappop(heap)
        yield value, n
        for j in range(min_coord, d):
            child = list(n)
            child[j] += 1
            child_value = value - coord_level(j, n[j]) + coord_level(j, n[j] + 1)
            heapq.heappush(heap, (child_value, tuple(child), j))


def assemble(points, alpha: AlphaVector, k: int, tol: float = 1e-8) -> HarmonicSpectrum:
    """The k smallest harmonic levels over all non-excluded points.

    Ties are broken toward the smaller point index, then lexicographically
    smaller multi-index; per-point spectra are nondecreasing, so the global
    heap merge is exhaustive.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    alpha.require_complete(len(points))
    streams = {}
    heap = []
    for i in alpha.active_indices():
        nu = _point_eigenvalues(points[i])
        gen = _local_level_stream(nu, alpha.alpha(i), tol)
        streams[i] = gen
        value, n = next(gen)
        heapq.heappush(heap, (value, i, n))
    if not heap:
        raise ConfigError("all catalog points are excluded")

    levels = []
    while heap and len(levels) < k:
        value, i, n = heapq.heappop(heap)
        levels.append((value, i, n))
        nxt = next(streams[i], None)
        if nxt is not None:
            heapq.heappush(heap, (nxt[0], i, nxt[1]))
    return HarmonicSpectrum(levels=levels, alpha=alpha, meta={"tol": tol})


def ground_energy(point, alpha_i: float, tol: float = 1e-8) -> float:
    """Lowest local level of one point at offset alpha_i."""
    nu = _point_eigenvalues(point)
    return oscillator.lambda_local(nu, [0] * nu.size, alpha_i, tol)


def lambda2_closed_form(points, alpha: AlphaVector, tol: float = 1e-8) -> float:
    """Second harmonic level when the bottom state sits at the reference minimum.

    Valid when alpha[0] = +inf (point 0 contributes exactly 0) and every
    other active point's ground energy is positive; otherwise raises
    PatternViolation and the caller must use assemble().
    """
    alpha.require_complete(len(points))
    if alpha.is_excluded(0):
        raise PatternViolation("reference point 0 is excluded")
    if alpha.alpha(0) != math.inf:
        raise PatternViolation("alpha[0] must be +inf for the closed form")
    nu0 = _point_eigenvalues(points[0])
    if np.any(nu0 <= 0):
        raise PatternViolation("point 0 is not a minimum")

    best = float(np.min(nu0))
    for i in alpha.active_indices():
        if i == 0:
            continue
        nu = _point_eigenvalues(points[i])
        g = oscillator.omega(float(nu[0]), 0, alpha.alpha(i), tol)
        g += float(np.sum(np.abs(nu[1:]) * (nu[1:] < 0)))
        if g <= 0.0:
            raise PatternViolation(f"point {i} has nonpositive ground energy {g}")
        best = min(best, g)
    return best
