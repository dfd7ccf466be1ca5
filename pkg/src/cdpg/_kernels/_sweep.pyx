# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled two-phase sweep. Same layout and semantics as ``_sweep_py``."""

from libc.math cimport exp, fabs, sqrt, isfinite
from libc.stdlib cimport malloc, free

import numpy as np

cdef int OK = 0
cdef int NONFINITE = 1
cdef int ROOT_FAILURE = 2

cdef double ROOT_TOL = 1e-12
cdef int ROOT_MAX_ITER = 200


cdef inline double _dfun(double a, double b, double r1, double r2, double v, double u) nogil:
    return 2.0 * a * u + b + r1 * r2 * exp(r2 * u) - v


cdef int quadexp_root(double a, double b, double r1, double r2, double v, double* out) nogil:
    cdef double u0, step, lo, hi, u, g, slope, cand
    cdef int it = 0
    if r1 == 0.0 or r2 == 0.0:
        out[0] = (v - b) / (2.0 * a)
        return OK
    u0 = (v - b) / (2.0 * a)
    step = 1.0
    lo = u0 - step
    hi = u0 + step
    while _dfun(a, b, r1, r2, v, lo) > 0.0:
        lo -= step
        step *= 2.0
        it += 1
        if it > ROOT_MAX_ITER:
            return ROOT_FAILURE
    step = 1.0
    while _dfun(a, b, r1, r2, v, hi) < 0.0:
        hi += step
        step *= 2.0
        it += 1
        if it > ROOT_MAX_ITER:
            return ROOT_FAILURE
    u = u0
    if u < lo:
        u = lo
    if u > hi:
        u = hi
    while it <= ROOT_MAX_ITER:
        g = _dfun(a, b, r1, r2, v, u)
        if g == 0.0:
            out[0] = u
            return OK
        if g > 0.0:
            hi = u
        else:
            lo = u
        if hi - lo <= ROOT_TOL * (fabs(u) if fabs(u) > 1.0 else 1.0):
            out[0] = 0.5 * (lo + hi)
            return OK
        slope = 2.0 * a + r1 * r2 * r2 * exp(r2 * u)
        cand = u - g / slope
        if lo < cand and cand < hi:
            u = cand
        else:
            u = 0.5 * (lo + hi)
        it += 1
    return ROOT_FAILURE


def run_sweeps(lay, double[::1] lam, double[::1] omega, double[::1] lam_sum,
               double[::1] lam_new, Py_ssize_t n_iters, executor=None):
    """Advance ``n_iters`` iterations in place; ``executor`` is ignored.

    Returns ``(iterations_done, status, agent_index, phase)``.
    """
    cdef Py_ssize_t K = lay.K, M = lay.M, B = lay.B
    cdef Py_ssize_t DL = lay.dim_lambda, DW = lay.dim_omega
    cdef long long[::1] lam_off = lay.lam_off
    cdef long long[::1] gam_dim = lay.gam_dim
    cdef long long[::1] H_off = lay.H_off
    cdef double[::1] H = lay.H
    cdef double[::1] E_theta = lay.E_theta
    cdef double[::1] cvec = lay.c
    cdef double[::1] fpar = lay.fpar
    cdef long long[::1] g_kind = lay.g_kind
    cdef double[::1] g_lo = lay.g_lo
    cdef double[::1] g_hi = lay.g_hi
    cdef double[::1] g_w = lay.g_w
    cdef long long[::1] ia_ptr = lay.ia_ptr
    cdef long long[::1] ia_other = lay.ia_other
    cdef long long[::1] ia_woff = lay.ia_woff
    cdef long long[::1] ia_low = lay.ia_low
    cdef double[::1] ia_pi = lay.ia_pi
    cdef long long[::1] ga_ptr = lay.ga_ptr
    cdef long long[::1] ga_other = lay.ga_other
    cdef long long[::1] ga_woff = lay.ga_woff
    cdef long long[::1] ga_low = lay.ga_low
    cdef double[::1] ga_pi = lay.ga_pi
    cdef long long[::1] ie_low = lay.ie_low
    cdef long long[::1] ie_high = lay.ie_high
    cdef long long[::1] ie_woff = lay.ie_woff
    cdef double[::1] ie_pi = lay.ie_pi
    cdef long long[::1] ge_low = lay.ge_low
    cdef long long[::1] ge_high = lay.ge_high
    cdef long long[::1] ge_woff = lay.ge_woff
    cdef double[::1] ge_pi = lay.ge_pi
    cdef bint inequality = lay.inequality
    cdef Py_ssize_t n_ie = ie_low.shape[0], n_ge = ge_low.shape[0]

    cdef Py_ssize_t maxd = 0, k
    for k in range(K):
        if lam_off[k + 1] - lam_off[k] > maxd:
            maxd = lam_off[k + 1] - lam_off[k]
    cdef double* v = <double*> malloc(M * sizeof(double))
    cdef double* u = <double*> malloc(M * sizeof(double))
    cdef double* grad = <double*> malloc(maxd * sizeof(double))
    if v == NULL or u == NULL or grad == NULL:
        free(v); free(u); free(grad)
        raise MemoryError()

    cdef Py_ssize_t it, m, col, d, o, G, e, q, oo, w, hoff, lo_a, hi_a, th0
    cdef double c, acc, rho, x, t, nrm, s, a_, b_, r1, r2
    cdef int status = OK
    cdef Py_ssize_t bad = -1, phase = 0, done = n_iters

    try:
        with nogil:
            for it in range(n_iters):
                # ---- phase 1: every agent, iteration-t values only
                for k in range(K):
                    o = lam_off[k]
                    d = lam_off[k + 1] - o
                    G = gam_dim[k]
                    hoff = H_off[k]
                    c = cvec[k]
                    for m in range(M):
                        s = 0.0
                        for col in range(d):
                            s = s + H[hoff + m * d + col] * lam[o + col]
                        v[m] = s
                    for m in range(M):
                        a_ = fpar[4 * (M * k + m)]
                        b_ = fpar[4 * (M * k + m) + 1]
                        r1 = fpar[4 * (M * k + m) + 2]
                        r2 = fpar[4 * (M * k + m) + 3]
                        if quadexp_root(a_, b_, r1, r2, v[m], &u[m]) != OK:
                            status = ROOT_FAILURE
                            break
                    if status != OK:
                        bad = k
                        phase = 1
                        break
                    for col in range(d):
                        s = 0.0
                        for m in range(M):
                            s = s + H[hoff + m * d + col] * u[m]
                        grad[col] = s
                    for q in range(B):
                        grad[M + G + q] = grad[M + G + q] + E_theta[B * k + q]

                    # mu: Moreau shortcut for the prox of g's conjugate
                    if g_kind[k] == 3:
                        nrm = 0.0
                        for m in range(M):
                            x = (lam[o + m] - c * grad[m]) / c
                            nrm = nrm + x * x
                        nrm = sqrt(nrm)
                        t = g_w[k] / c
                        for m in range(M):
                            rho = lam[o + m] - c * grad[m]
                            x = rho / c
                            if nrm > t:
                                lam_new[o + m] = rho - c * ((1.0 - t / nrm) * x)
                            else:
                                lam_new[o + m] = rho - c * 0.0
                    else:
                        for m in range(M):
                            rho = lam[o + m] - c * grad[m]
                            x = rho / c
                            if g_kind[k] == 1:
                                if x < g_lo[M * k + m]:
                                    x = g_lo[M * k + m]
                                if x > g_hi[M * k + m]:
                                    x = g_hi[M * k + m]
                            elif g_kind[k] == 2:
                                t = fabs(x) - g_w[k] / c
                                if t < 0.0:
                                    t = 0.0
                                if x > 0.0:
                                    x = t
                                elif x < 0.0:
                                    x = -t
                                else:
                                    x = 0.0
                            lam_new[o + m] = rho - c * x

                    # gamma
                    for q in range(G):
                        acc = grad[M + q]
                        for e in range(ia_ptr[k], ia_ptr[k + 1]):
                            oo = lam_off[ia_other[e]] + M
                            w = ia_woff[e]
                            if ia_low[e]:
                                acc = acc + (-omega[w + q] + ia_pi[e] * (lam[o + M + q] - lam[oo + q]))
                            else:
                                acc = acc + (omega[w + q] + ia_pi[e] * (lam[o + M + q] - lam[oo + q]))
                        lam_new[o + M + q] = lam[o + M + q] - c * acc

                    # theta
                    th0 = o + M + G
                    for q in range(B):
                        acc = grad[M + G + q]
                        for e in range(ga_ptr[k], ga_ptr[k + 1]):
                            oo = lam_off[ga_other[e] + 1] - B
                            w = ga_woff[e]
                            if ga_low[e]:
                                acc = acc + (-omega[w + q] + ga_pi[e] * (lam[th0 + q] - lam[oo + q]))
                            else:
                                acc = acc + (omega[w + q] + ga_pi[e] * (lam[th0 + q] - lam[oo + q]))
                        x = lam[th0 + q] - c * acc
                        if inequality and x < 0.0:
                            x = 0.0
                        lam_new[th0 + q] = x

                    for col in range(d):
                        if not isfinite(lam_new[o + col]):
                            status = NONFINITE
                            break
                    if status != OK:
                        bad = k
                        phase = 1
                        break
                if status != OK:
                    done = it
                    break

                # ---- phase 2: every edge, iteration-(t+1) lambda
                for e in range(n_ie):
                    G = gam_dim[ie_low[e]]
                    w = ie_woff[e]
                    lo_a = lam_off[ie_low[e]] + M
                    hi_a = lam_off[ie_high[e]] + M
                    for q in range(G):
                        omega[w + q] = omega[w + q] + ie_pi[e] * (lam_new[hi_a + q] - lam_new[lo_a + q])
                for e in range(n_ge):
                    w = ge_woff[e]
                    lo_a = lam_off[ge_low[e] + 1] - B
                    hi_a = lam_off[ge_high[e] + 1] - B
                    for q in range(B):
                        omega[w + q] = omega[w + q] + ge_pi[e] * (lam_new[hi_a + q] - lam_new[lo_a + q])
                for q in range(DW):
                    if not isfinite(omega[q]):
                        status = NONFINITE
                        phase = 2
                        break
                if status != OK:
                    done = it
                    break

                for q in range(DL):
                    lam[q] = lam_new[q]
                    lam_sum[q] = lam_sum[q] + lam_new[q]
    finally:
        free(v)
        free(u)
        free(grad)
    return done, status, bad, phase
