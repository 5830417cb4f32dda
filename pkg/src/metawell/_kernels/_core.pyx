# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping core; semantics mirror pyref.py exactly.

Floating-point evaluation order matches the numpy reference (Horner on
descending coefficients, multiplicative power tables, identical accumulation
order), so polynomial-family trajectories are bit-identical across backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64

DEF MAX_DEG = 40

_EMPTY_F = np.zeros(0, dtype=np.float64)
_EMPTY_E = np.zeros((0, 2), dtype=np.int64)
_EMPTY_C = np.zeros((0, 5), dtype=np.float64)
_EMPTY_M = np.zeros((0, 2), dtype=np.float64)


cdef struct Drift:
    int code
    int dim
    int nd1
    int ngx
    int ngy
    int nbump
    int maxdeg
    f64 gconf
    f64* d1
    f64* gxc
    i64* gxe
    f64* gyc
    i64* gye
    f64* gc
    f64* ga
    f64* gs2


cdef struct Domain:
    int kind
    int ncuts
    f64 lo
    f64 hi
    f64* blo
    f64* bhi
    f64* cuts


cdef inline void drift_point(int code, int dim, int nd1, f64* d1,
                             int ngx, f64* gxc, i64* gxe,
                             int ngy, f64* gyc, i64* gye, int maxdeg,
                             int nbump, f64* gc, f64* ga, f64* gs2, f64 gconf,
                             f64* px, f64* py, f64* xp, f64* out) nogil:
    # px/py are caller-provided scratch: keeping the power tables out of the
    # local frame keeps this function small enough to inline
    cdef int k, m, j
    cdef f64 acc, g, ss, dx
    if code == 1:
        acc = d1[0]
        for k in range(1, nd1):
            acc = acc * xp[0] + d1[k]
        out[0] = -acc
    elif code == 2:
        px[0] = 1.0
        py[0] = 1.0
        for k in range(1, maxdeg + 1):
            px[k] = px[k - 1] * xp[0]
            py[k] = py[k - 1] * xp[1]
        acc = 0.0
        for m in range(ngx):
            acc += (gxc[m] * px[gxe[2 * m]]) * py[gxe[2 * m + 1]]
        out[0] = -acc
        acc = 0.0
        for m in range(ngy):
            acc += (gyc[m] * px[gye[2 * m]]) * py[gye[2 * m + 1]]
        out[1] = -acc
    else:
        for j in range(dim):
            out[j] = (-2.0 * gconf) * xp[j]
        for m in range(nbump):
            ss = 0.0
            for j in range(dim):
                dx = xp[j] - gc[m * dim + j]
                ss += dx * dx
            g = ga[m] * exp((-0.5 * ss) / gs2[m])
            for j in range(dim):
                dx = xp[j] - gc[m * dim + j]
                out[j] += (g / gs2[m]) * dx


cdef inline bint inside_point(int kind, f64 lo, f64 hi, f64* blo, f64* bhi,
                              int ncuts, f64* cuts, f64* xp) nogil:
    cdef int j
    if kind == 0:
        return xp[0] > lo and xp[0] < hi
    for j in range(2):
        if not (xp[j] > blo[j] and xp[j] < bhi[j]):
            return False
    for j in range(ncuts):
        if ((xp[0] - cuts[5 * j]) * cuts[5 * j + 2]
                + (xp[1] - cuts[5 * j + 1]) * cuts[5 * j + 3]
                >= cuts[5 * j + 4]):
            return False
    return True


cdef inline void unpack_locals(Drift* dr, Domain* dm,
                               int* code, int* dim, int* nd1, f64** d1,
                               int* ngx, f64** gxc, i64** gxe,
                               int* ngy, f64** gyc, i64** gye, int* maxdeg,
                               int* nbump, f64** gc, f64** ga, f64** gs2,
                               f64* gconf, int* kind, f64* lo, f64* hi,
                               f64** blo, f64** bhi, int* ncuts,
                               f64** cuts) nogil:
    code[0] = dr.code; dim[0] = dr.dim; nd1[0] = dr.nd1; d1[0] = dr.d1
    ngx[0] = dr.ngx; gxc[0] = dr.gxc; gxe[0] = dr.gxe
    ngy[0] = dr.ngy; gyc[0] = dr.gyc; gye[0] = dr.gye
    maxdeg[0] = dr.maxdeg
    nbump[0] = dr.nbump; gc[0] = dr.gc; ga[0] = dr.ga; gs2[0] = dr.gs2
    gconf[0] = dr.gconf
    kind[0] = dm.kind; lo[0] = dm.lo; hi[0] = dm.hi
    blo[0] = dm.blo; bhi[0] = dm.bhi; ncuts[0] = dm.ncuts; cuts[0] = dm.cuts


cdef class _Tables:
    """Keeps the normalized arrays alive while raw pointers are in use."""

    cdef object refs
    cdef Drift drift
    cdef Domain dom

    def __init__(self, dict drift, dict dom):
        d1 = np.ascontiguousarray(drift.get("d1", _EMPTY_F), dtype=np.float64)
        gxc = np.ascontiguousarray(drift.get("gxc", _EMPTY_F), dtype=np.float64)
        gxe = np.ascontiguousarray(drift.get("gxe", _EMPTY_E), dtype=np.int64)
        gyc = np.ascontiguousarray(drift.get("gyc", _EMPTY_F), dtype=np.float64)
        gye = np.ascontiguousarray(drift.get("gye", _EMPTY_E), dtype=np.int64)
        gc = np.ascontiguousarray(drift.get("gc", _EMPTY_M), dtype=np.float64)
        ga = np.ascontiguousarray(drift.get("ga", _EMPTY_F), dtype=np.float64)
        gs2 = np.ascontiguousarray(drift.get("gs2", _EMPTY_F), dtype=np.float64)
        blo = np.ascontiguousarray(dom.get("blo", _EMPTY_F), dtype=np.float64)
        bhi = np.ascontiguousarray(dom.get("bhi", _EMPTY_F), dtype=np.float64)
        cuts = np.ascontiguousarray(dom.get("cuts", _EMPTY_C), dtype=np.float64)
        self.refs = (d1, gxc, gxe, gyc, gye, gc, ga, gs2, blo, bhi, cuts)

        self.drift.code = drift["code"]
        self.drift.dim = drift.get("dim", 1)
        self.drift.nd1 = d1.shape[0]
        self.drift.ngx = gxc.shape[0]
        self.drift.ngy = gyc.shape[0]
        self.drift.nbump = ga.shape[0]
        self.drift.maxdeg = drift.get("maxdeg", 0)
        if self.drift.maxdeg > MAX_DEG:
            raise ValueError("polynomial degree exceeds the compiled cap")
        self.drift.gconf = drift.get("gconf", 0.0)
        self.drift.d1 = <f64*> cnp.PyArray_DATA(d1)
        self.drift.gxc = <f64*> cnp.PyArray_DATA(gxc)
        self.drift.gxe = <i64*> cnp.PyArray_DATA(gxe)
        self.drift.gyc = <f64*> cnp.PyArray_DATA(gyc)
        self.drift.gye = <i64*> cnp.PyArray_DATA(gye)
        self.drift.gc = <f64*> cnp.PyArray_DATA(gc)
        self.drift.ga = <f64*> cnp.PyArray_DATA(ga)
        self.drift.gs2 = <f64*> cnp.PyArray_DATA(gs2)

        self.dom.kind = dom["kind"]
        self.dom.ncuts = cuts.shape[0]
        self.dom.lo = dom.get("lo", 0.0)
        self.dom.hi = dom.get("hi", 0.0)
        self.dom.blo = <f64*> cnp.PyArray_DATA(blo)
        self.dom.bhi = <f64*> cnp.PyArray_DATA(bhi)
        self.dom.cuts = <f64*> cnp.PyArray_DATA(cuts)


def step_exits(dict drift, dict dom, cnp.ndarray[f64, ndim=2] x,
               cnp.ndarray[cnp.uint8_t, ndim=1] alive,
               cnp.ndarray[i64, ndim=1] exit_step,
               double dt, double scale,
               cnp.ndarray[f64, ndim=3] normals, long step0):
    cdef _Tables tb = _Tables(drift, dom)
    cdef Drift* dr = &tb.drift
    cdef Domain* dm = &tb.dom
    cdef int code, dim_, nd1, ngx, ngy, maxdeg, nbump, kind, ncuts
    cdef f64 gconf, lo, hi
    cdef f64 *d1
    cdef f64 *gxc
    cdef f64 *gyc
    cdef f64 *gc
    cdef f64 *ga
    cdef f64 *gs2
    cdef f64 *blo
    cdef f64 *bhi
    cdef f64 *cuts
    cdef i64 *gxe
    cdef i64 *gye
    unpack_locals(dr, dm, &code, &dim_, &nd1, &d1, &ngx, &gxc, &gxe,
                  &ngy, &gyc, &gye, &maxdeg, &nbump, &gc, &ga, &gs2, &gconf,
                  &kind, &lo, &hi, &blo, &bhi, &ncuts, &cuts)

    cdef f64[:, ::1] xv = x
    cdef cnp.uint8_t[::1] av = alive
    cdef i64[::1] es = exit_step
    cdef f64[:, :, ::1] nv = normals
    cdef Py_ssize_t n_steps = normals.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef int dim = x.shape[1]
    cdef Py_ssize_t s, i
    cdef int j
    cdef f64 g[2]
    cdef f64 p[2]
    cdef f64 px[MAX_DEG + 1]
    cdef f64 py[MAX_DEG + 1]
    cdef bint any_alive

    with nogil:
        for s in range(n_steps):
            any_alive = False
            for i in range(n):
                if av[i] == 0:
                    continue
                any_alive = True
                drift_point(code, dim_, nd1, d1, ngx, gxc, gxe, ngy, gyc, gye,
                            maxdeg, nbump, gc, ga, gs2, gconf, px, py,
                            &xv[i, 0], g)
                for j in range(dim):
                    p[j] = xv[i, j] + g[j] * dt + scale * nv[s, i, j]
                    xv[i, j] = p[j]
                if not inside_point(kind, lo, hi, blo, bhi, ncuts, cuts, p):
                    av[i] = 0
                    es[i] = step0 + s + 1
            if not any_alive:
                break
    return int(n_steps)


def fv_step_block(dict drift, dict dom, cnp.ndarray[f64, ndim=2] x,
                  cnp.ndarray[i64, ndim=1] birth,
                  double dt, double scale,
                  cnp.ndarray[f64, ndim=3] normals,
                  cnp.ndarray[f64, ndim=1] uniforms,
                  cnp.ndarray[i64, ndim=1] ev_step,
                  cnp.ndarray[i64, ndim=1] ev_replica,
                  cnp.ndarray[i64, ndim=1] ev_life,
                  cnp.ndarray[f64, ndim=2] ev_pos,
                  long step0):
    cdef _Tables tb = _Tables(drift, dom)
    cdef Drift* dr = &tb.drift
    cdef Domain* dm = &tb.dom
    cdef int code, dim_, nd1, ngx, ngy, maxdeg, nbump, kind, ncuts
    cdef f64 gconf, lo, hi
    cdef f64 *d1
    cdef f64 *gxc
    cdef f64 *gyc
    cdef f64 *gc
    cdef f64 *ga
    cdef f64 *gs2
    cdef f64 *blo
    cdef f64 *bhi
    cdef f64 *cuts
    cdef i64 *gxe
    cdef i64 *gye
    unpack_locals(dr, dm, &code, &dim_, &nd1, &d1, &ngx, &gxc, &gxe,
                  &ngy, &gyc, &gye, &maxdeg, &nbump, &gc, &ga, &gs2, &gconf,
                  &kind, &lo, &hi, &blo, &bhi, &ncuts, &cuts)

    cdef f64[:, ::1] xv = x
    cdef i64[::1] bv = birth
    cdef f64[:, :, ::1] nv = normals
    cdef f64[::1] uv = uniforms
    cdef i64[::1] evs = ev_step
    cdef i64[::1] evr = ev_replica
    cdef i64[::1] evl = ev_life
    cdef f64[:, ::1] evp = ev_pos

    cdef Py_ssize_t n_steps = normals.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef int dim = x.shape[1]
    cdef Py_ssize_t s, i, m, n_abs, n_sur, pick
    cdef int j
    cdef Py_ssize_t n_events = 0, used = 0
    cdef Py_ssize_t cap = ev_step.shape[0]
    cdef f64 g[2]
    cdef f64 px[MAX_DEG + 1]
    cdef f64 py[MAX_DEG + 1]
    cdef long step
    cdef bint extinct = False

    prop_arr = np.empty_like(x)
    sur_arr = np.empty(n, dtype=np.int64)
    abs_arr = np.empty(n, dtype=np.int64)
    cdef f64[:, ::1] prop = prop_arr
    cdef i64[::1] sur = sur_arr
    cdef i64[::1] absd = abs_arr
    cdef Py_ssize_t steps_done = 0

    with nogil:
        for s in range(n_steps):
            n_abs = 0
            n_sur = 0
            for i in range(n):
                drift_point(code, dim_, nd1, d1, ngx, gxc, gxe, ngy, gyc, gye,
                            maxdeg, nbump, gc, ga, gs2, gconf, px, py,
                            &xv[i, 0], g)
                for j in range(dim):
                    prop[i, j] = xv[i, j] + g[j] * dt + scale * nv[s, i, j]
                if inside_point(kind, lo, hi, blo, bhi, ncuts, cuts, &prop[i, 0]):
                    sur[n_sur] = i
                    n_sur += 1
                else:
                    absd[n_abs] = i
                    n_abs += 1
            if n_abs > 0 and n_sur == 0:
                for i in range(n):
                    for j in range(dim):
                        xv[i, j] = prop[i, j]
                steps_done = s + 1
                extinct = True
                break
            if n_events + n_abs > cap or used + n_abs > uv.shape[0]:
                steps_done = s
                break
            for i in range(n):
                for j in range(dim):
                    xv[i, j] = prop[i, j]
            if n_abs > 0:
                step = step0 + s + 1
                for m in range(n_abs):
                    i = absd[m]
                    pick = <Py_ssize_t>(uv[used] * n_sur)
                    used += 1
                    if pick >= n_sur:
                        pick = n_sur - 1
                    evs[n_events] = step
                    evr[n_events] = i
                    evl[n_events] = step - bv[i]
                    for j in range(dim):
                        evp[n_events, j] = prop[i, j]
                    n_events += 1
                    for j in range(dim):
                        xv[i, j] = xv[sur[pick], j]
                    bv[i] = step
            steps_done = s + 1
    return int(steps_done), int(n_events), int(used), bool(extinct)
