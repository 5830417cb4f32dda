"""Pure-numpy stepping backend (reference semantics for the compiled core).

Drift evaluation uses explicit Horner/power-table loops in the same
floating-point order as the C code so polynomial-family trajectories match
the extension bit for bit.
"""

import numpy as np


def _drift(spec: dict, x: np.ndarray) -> np.ndarray:
    """Minus the potential gradient, rows of x being points."""
    code = spec["code"]
    if code == 1:
        c = spec["d1"]
        acc = np.full(x.shape[0], c[0])
        xs = x[:, 0]
        for k in range(1, c.size):
            acc = acc * xs + c[k]
        return -acc[:, None]
    if code == 2:
        n = x.shape[0]
        deg = spec["maxdeg"]
        px = np.empty((n, deg + 1))
        py = np.empty((n, deg + 1))
        px[:, 0] = 1.0
        py[:, 0] = 1.0
        for k in range(1, deg + 1):
            px[:, k] = px[:, k - 1] * x[:, 0]
            py[:, k] = py[:, k - 1] * x[:, 1]
        out = np.zeros((n, 2))
        for c, e in zip(spec["gxc"], spec["gxe"]):
            out[:, 0] += (c * px[:, e[0]]) * py[:, e[1]]
        for c, e in zip(spec["gyc"], spec["gye"]):
            out[:, 1] += (c * px[:, e[0]]) * py[:, e[1]]
        return -out
    if code == 3:
        out = -2.0 * spec["gconf"] * x
        for m in range(spec["ga"].size):
            dx = x - spec["gc"][m]
            g = spec["ga"][m] * np.exp(-0.5 * np.sum(dx * dx, axis=1) / spec["gs2"][m])
            out += (g / spec["gs2"][m])[:, None] * dx
        return out
    raise ValueError(f"bad drift code {code}")


def _inside(dom: dict, x: np.ndarray) -> np.ndarray:
    if dom["kind"] == 0:
        xs = x[:, 0]
        return (xs > dom["lo"]) & (xs < dom["hi"])
    ok = np.ones(x.shape[0], dtype=bool)
    for j in range(2):
        ok &= (x[:, j] > dom["blo"][j]) & (x[:, j] < dom["bhi"][j])
    for row in dom["cuts"]:
        ok &= (x[:, 0] - row[0]) * row[2] + (x[:, 1] - row[1]) * row[3] < row[4]
    return ok


def step_exits(drift, dom, x, alive, exit_step, dt, scale, normals, step0):
    """Advance independent trajectories for normals.shape[0] steps in place.

    Absorption is the post-step predicate: a trajectory whose proposal lands
    outside freezes there, with exit_step recording the step count.
    """
    n_steps = normals.shape[0]
    for s in range(n_steps):
        live = alive.view(bool)
        if not live.any():
            break
        xs = x[live]
        prop = xs + _drift(drift, xs) * dt + scale * normals[s][live]
        x[live] = prop
        inside = _inside(dom, prop)
        if not inside.all():
            idx = np.flatnonzero(live)
            dead = idx[~inside]
            alive[dead] = 0
            exit_step[dead] = step0 + s + 1
    return n_steps


def fv_step_block(drift, dom, x, birth, dt, scale, normals, uniforms,
                  ev_step, ev_replica, ev_life, ev_pos, step0):
    """Advance interacting replicas; absorbed ones restart at a survivor.

    Per step: move every replica, find the absorbed set, then (ascending
    replica order) draw one uniform each to pick a survivor uniformly and
    copy its position.  Survivors are the replicas that stayed inside this
    step, fixed before any resurrection.  Returns (steps_done, n_events,
    uniforms_used, extinct); returns early (without consuming that step's
    noise) when the event buffer or uniform pool cannot cover a step.
    """
    n_steps = normals.shape[0]
    n_events = 0
    used = 0
    cap = ev_step.size
    for s in range(n_steps):
        prop = x + _drift(drift, x) * dt + scale * normals[s]
        inside = _inside(dom, prop)
        absorbed = np.flatnonzero(~inside)
        if absorbed.size:
            if not inside.any():
                x[:] = prop
                return s + 1, n_events, used, True
            if (n_events + absorbed.size > cap
                    or used + absorbed.size > uniforms.size):
                return s, n_events, used, False
            survivors = np.flatnonzero(inside)
            x[:] = prop
            step = step0 + s + 1
            for i in absorbed:
                u = uniforms[used]
                used += 1
                j = survivors[min(int(u * survivors.size), survivors.size - 1)]
                ev_step[n_events] = step
                ev_replica[n_events] = i
                ev_life[n_events] = step - birth[i]
                ev_pos[n_events] = prop[i]
                n_events += 1
                x[i] = x[j]
                birth[i] = step
        else:
            x[:] = prop
    return n_steps, n_events, used, False
