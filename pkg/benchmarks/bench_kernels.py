"""Benchmark: compiled stepping core against the numpy fallback.

Times the two hot paths (independent first-exit stepping and Fleming-Viot
resurrection stepping) on the double-well potential at several ensemble
sizes, and verifies on the way that both backends produce identical
trajectories for the polynomial drift.

Run:  python3 benchmarks/bench_kernels.py
"""

import math
import time

import numpy as np

import metawell as mw
from metawell._kernels import get_backend, normalize_domain, normalize_drift


def bench_exits(backend, drift, dom, n, steps, dt, scale, seed=0):
    rng = np.random.default_rng(np.random.Philox(seed))
    normals = rng.standard_normal((steps, n, 1))
    x = np.full((n, 1), -1.0)
    alive = np.ones(n, dtype=np.uint8)
    exit_step = np.zeros(n, dtype=np.int64)
    t0 = time.perf_counter()
    backend.step_exits(drift, dom, x, alive, exit_step, dt, scale, normals, 0)
    elapsed = time.perf_counter() - t0
    return elapsed, (x, alive, exit_step)


def bench_fv(backend, drift, dom, n, steps, dt, scale, seed=1):
    rng = np.random.default_rng(np.random.Philox(seed))
    normals = rng.standard_normal((steps, n, 1))
    uniforms = np.random.default_rng(np.random.Philox(seed + 100)).random(1 << 18)
    x = np.linspace(-1.4, -0.6, n)[:, None].copy()
    birth = np.zeros(n, dtype=np.int64)
    cap = 1 << 18
    evs = np.zeros(cap, np.int64)
    evr = np.zeros(cap, np.int64)
    evl = np.zeros(cap, np.int64)
    evp = np.zeros((cap, 1))
    t0 = time.perf_counter()
    out = backend.fv_step_block(drift, dom, x, birth, dt, scale, normals,
                                uniforms, evs, evr, evl, evp, 0)
    elapsed = time.perf_counter() - t0
    assert out[0] == steps, "buffer-limited run; enlarge caps"
    return elapsed, (out, x, birth)


def main():
    model = mw.double_well()
    drift = normalize_drift(model.kernel_spec())
    dom = normalize_domain(1, -2.5, 0.5)
    beta, dt = 8.0, 5e-4
    scale = math.sqrt(2.0 * dt / beta)
    backends = {}
    for name in ("python", "cython"):
        try:
            backends[name] = get_backend(name)
        except Exception as exc:  # extension not built
            print(f"{name}: unavailable ({exc})")
    print(f"{'kernel':<12}{'ensemble':>10}{'steps':>8}"
          + "".join(f"{name:>14}" for name in backends)
          + f"{'speedup':>10}")
    for label, fn, steps in (("step_exits", bench_exits, 4000),
                             ("fv_block", bench_fv, 4000)):
        for n in (100, 1000, 4000):
            times = {}
            states = {}
            for name, backend in backends.items():
                times[name], states[name] = fn(backend, drift, dom, n, steps,
                                               dt, scale)
            row = f"{label:<12}{n:>10}{steps:>8}"
            for name in backends:
                rate = n * steps / times[name] / 1e6
                row += f"{rate:>11.1f} M/s"
            if len(times) == 2:
                row += f"{times['python'] / times['cython']:>9.1f}x"
                ok = all(
                    np.array_equal(a, b)
                    for a, b in zip(np.atleast_1d(states["python"][-2]),
                                    np.atleast_1d(states["cython"][-2])))
                row += "  identical" if ok else "  MISMATCH"
            print(row)


if __name__ == "__main__":
    main()
