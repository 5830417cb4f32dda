"""Stepping kernels: compiled core with a pure-numpy fallback.

Both backends implement the same two entry points with identical RNG
consumption contracts (noise arrays are pre-drawn by the caller; resurrection
uniforms are consumed in ascending absorbed-replica order), so trajectories
agree across backends bit for bit on polynomial drift families.  Set
METAWELL_NO_EXT=1 to force the numpy backend.

step_exits(drift, dom, x, alive, exit_step, dt, scale, normals, step0)
    Advance independent trajectories; absorbed ones freeze where they landed.

fv_step_block(drift, dom, x, birth, dt, scale, normals, uniforms, ev_*)
    Advance interacting replicas with resurrection at a surviving replica,
    recording one event per absorption; returns
    (steps_done, n_events, uniforms_used, extinct).
"""

import os

import numpy as np

from . import pyref

_IMPL = pyref
BACKEND = "python"
if not os.environ.get("METAWELL_NO_EXT"):
    try:
        from . import _core  # compiled extension

        _IMPL = _core
        BACKEND = "cython"
    except ImportError:
        pass


def backend_name() -> str:
    return BACKEND


def get_backend(name: str | None = None):
    """Backend module by name ("python", "cython") or the selected default."""
    if name is None:
        return _IMPL
    if name == "python":
        return pyref
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")


def step_exits(*args, **kwargs):
    return _IMPL.step_exits(*args, **kwargs)


def fv_step_block(*args, **kwargs):
    return _IMPL.fv_step_block(*args, **kwargs)


def normalize_drift(spec: dict) -> dict:
    """Kernel-ready drift tables from a model's kernel_spec dictionary."""
    if spec is None:
        raise ValueError("model has no kernel drift specification")
    family = spec["family"]
    if family == "poly1d":
        # Horner wants descending order; numpy polynomials store ascending
        d = np.ascontiguousarray(spec["dcoeffs"][::-1], dtype=np.float64)
        return {"code": 1, "d1": d, "dim": 1}
    if family == "poly2d":
        def split(terms):
            terms = np.atleast_2d(np.asarray(terms, dtype=np.float64))
            if terms.size == 0:
                return (np.zeros(0), np.zeros((0, 2), dtype=np.int64))
            return (np.ascontiguousarray(terms[:, 0]),
                    np.ascontiguousarray(terms[:, 1:3].astype(np.int64)))
        gxc, gxe = split(spec["gx"])
        gyc, gye = split(spec["gy"])
        maxdeg = 0
        for e in (gxe, gye):
            if e.size:
                maxdeg = max(maxdeg, int(e.max()))
        return {"code": 2, "gxc": gxc, "gxe": gxe, "gyc": gyc, "gye": gye,
                "maxdeg": maxdeg, "dim": 2}
    if family == "gauss":
        centers = np.ascontiguousarray(np.atleast_2d(spec["centers"]), dtype=np.float64)
        return {"code": 3,
                "gc": centers,
                "ga": np.ascontiguousarray(spec["amplitudes"], dtype=np.float64),
                "gs2": np.ascontiguousarray(spec["s2"], dtype=np.float64),
                "gconf": float(spec["conf"]),
                "dim": centers.shape[1]}
    raise ValueError(f"unknown drift family {family!r}")


def normalize_domain(dim: int, lower, upper, cuts=None) -> dict:
    """Kernel-ready domain: an interval (1D) or a box with half-space cuts (2D).

    cuts rows are (zx, zy, nx, ny, offset): keep points with
    n . (p - z) < offset.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    if dim == 1:
        lo, hi = float(lower[0]), float(upper[0])
        if cuts is not None:
            for (z, n, off) in cuts:
                bound = z + off / n
                if n > 0:
                    hi = min(hi, bound)
                else:
                    lo = max(lo, bound)
        return {"kind": 0, "lo": lo, "hi": hi}
    if dim == 2:
        rows = np.zeros((0, 5), dtype=np.float64)
        if cuts:
            rows = np.ascontiguousarray(np.asarray(cuts, dtype=np.float64)).reshape(-1, 5)
        return {"kind": 1, "blo": lower.copy(), "bhi": upper.copy(), "cuts": rows}
    raise ValueError("kernels support dimensions 1 and 2")
