"""Pure-Python two-phase sweep, used when the compiled kernel is unavailable.

Mirrors ``_sweep.pyx`` operation for operation. Phase 1 updates every
agent from iteration-t values only, phase 2 updates every edge multiplier
from the new lambda, so both phases may be mapped over a thread pool.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericalError
from ..functions import G_BOX, G_L1, G_L2, quadexp_root

OK, NONFINITE, ROOT_FAILURE = 0, 1, 2


def _conj_argmax(fpar, v):
    out = np.empty_like(v)
    for m in range(v.size):
        a, b, r1, r2 = fpar[m]
        out[m] = quadexp_root(a, b, r1, r2, v[m])
    return out


def _seq_dot(mat, vec):
    """``mat @ vec`` summed left to right, the order the compiled loop uses.

    BLAS may reorder the partial sums, which would break bit-for-bit
    agreement between the two kernels.
    """
    out = np.zeros(mat.shape[0])
    for col in range(mat.shape[1]):
        out = out + mat[:, col] * vec[col]
    return out


def _prox_conj(kind, rho, c, lo, hi, w):
    if kind == G_BOX:
        return rho - c * np.minimum(np.maximum(rho / c, lo), hi)
    if kind == G_L1:
        u = rho / c
        return rho - c * (np.sign(u) * np.maximum(np.abs(u) - w / c, 0.0))
    if kind == G_L2:
        u = rho / c
        nrm = 0.0
        for x in u:
            nrm = nrm + x * x
        nrm = math.sqrt(nrm)
        t = w / c
        return rho - c * ((1.0 - t / nrm) * u if nrm > t else np.zeros_like(u))
    return rho - c * (rho / c)


def _agent_update(lay, k, lam, omega, lam_new):
    M, B = lay.M, lay.B
    o, o_end = lay.lam_off[k], lay.lam_off[k + 1]
    d = o_end - o
    G = lay.gam_dim[k]
    blk = lam[o:o_end]
    Hk = lay.H[lay.H_off[k]:lay.H_off[k + 1]].reshape(M, d)
    u = _conj_argmax(lay.fpar[4 * M * k:4 * M * (k + 1)].reshape(M, 4), _seq_dot(Hk, blk))
    grad = _seq_dot(Hk.T, u)
    grad[M + G:] += lay.E_theta[B * k:B * (k + 1)]
    c = lay.c[k]

    new = np.empty(d)
    new[:M] = _prox_conj(lay.g_kind[k], blk[:M] - c * grad[:M], c,
                         lay.g_lo[M * k:M * (k + 1)], lay.g_hi[M * k:M * (k + 1)], lay.g_w[k])

    acc = grad[M:M + G].copy()
    gam = blk[M:M + G]
    for e in range(lay.ia_ptr[k], lay.ia_ptr[k + 1]):
        oo = lay.lam_off[lay.ia_other[e]] + M
        w = lay.ia_woff[e]
        xi = omega[w:w + G]
        sign = -1.0 if lay.ia_low[e] else 1.0
        acc += sign * xi + lay.ia_pi[e] * (gam - lam[oo:oo + G])
    new[M:M + G] = gam - c * acc

    if B:
        acc = grad[M + G:].copy()
        th = blk[M + G:]
        for e in range(lay.ga_ptr[k], lay.ga_ptr[k + 1]):
            other = lay.ga_other[e]
            oo = lay.lam_off[other + 1] - B
            w = lay.ga_woff[e]
            sign = -1.0 if lay.ga_low[e] else 1.0
            acc += sign * omega[w:w + B] + lay.ga_pi[e] * (th - lam[oo:oo + B])
        th_new = th - c * acc
        if lay.inequality:
            th_new = np.maximum(th_new, 0.0)
        new[M + G:] = th_new
    lam_new[o:o_end] = new
    return bool(np.all(np.isfinite(new)))


def _edge_update(lay, lam_new, omega):
    M, B = lay.M, lay.B
    for e in range(lay.ie_low.size):
        lo, hi = lay.ie_low[e], lay.ie_high[e]
        G = lay.gam_dim[lo]
        w = lay.ie_woff[e]
        a = lay.lam_off[lo] + M
        b = lay.lam_off[hi] + M
        omega[w:w + G] += lay.ie_pi[e] * (lam_new[b:b + G] - lam_new[a:a + G])
    for e in range(lay.ge_low.size):
        lo, hi = lay.ge_low[e], lay.ge_high[e]
        w = lay.ge_woff[e]
        a = lay.lam_off[lo + 1] - B
        b = lay.lam_off[hi + 1] - B
        omega[w:w + B] += lay.ge_pi[e] * (lam_new[b:b + B] - lam_new[a:a + B])


def run_sweeps(lay, lam, omega, lam_sum, lam_new, n_iters, executor=None):
    """Advance ``n_iters`` iterations in place.

    Returns ``(iterations_done, status, agent_index, phase)``; status is
    ``OK``, ``NONFINITE`` or ``ROOT_FAILURE``.
    """
    K = lay.K
    for it in range(n_iters):
        try:
            if executor is None:
                flags = [_agent_update(lay, k, lam, omega, lam_new) for k in range(K)]
            else:
                flags = list(executor.map(lambda k: _agent_update(lay, k, lam, omega, lam_new), range(K)))
        except NumericalError:
            return it, ROOT_FAILURE, -1, 1
        if not all(flags):
            return it, NONFINITE, flags.index(False), 1
        _edge_update(lay, lam_new, omega)
        if not np.all(np.isfinite(omega)):
            return it, NONFINITE, -1, 2
        lam[:] = lam_new
        lam_sum += lam
    return n_iters, OK, -1, 0
