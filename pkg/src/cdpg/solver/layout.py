"""Flat array layout shared by the compiled and the pure-Python sweeps.

Each agent's neighbor relations are stored CSR style: for agent ``k`` the
entries ``ptr[k]:ptr[k+1]`` list the other endpoint, the offset of the
edge multiplier inside omega, whether ``k`` is the low endpoint, and the
penalty of the low endpoint (the weight that edge carries in D).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..functions import G_BOX, G_L1, G_L2, G_ZERO, BoxIndicator, NormPenalty
from ..problem import INEQUALITY, ScenarioSpec
from .operators import INTRA, Assembly, StepSizes


@dataclass
class SweepLayout:
    K: int
    M: int
    B: int
    dim_lambda: int
    dim_omega: int
    lam_off: np.ndarray
    gam_dim: np.ndarray
    H_off: np.ndarray
    H: np.ndarray
    E_theta: np.ndarray
    c: np.ndarray
    fpar: np.ndarray
    g_kind: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray
    g_w: np.ndarray
    ia_ptr: np.ndarray
    ia_other: np.ndarray
    ia_woff: np.ndarray
    ia_low: np.ndarray
    ia_pi: np.ndarray
    ga_ptr: np.ndarray
    ga_other: np.ndarray
    ga_woff: np.ndarray
    ga_low: np.ndarray
    ga_pi: np.ndarray
    ie_low: np.ndarray
    ie_high: np.ndarray
    ie_woff: np.ndarray
    ie_pi: np.ndarray
    ge_low: np.ndarray
    ge_high: np.ndarray
    ge_woff: np.ndarray
    ge_pi: np.ndarray
    inequality: bool


def _csr(K, edges):
    rows = [[] for _ in range(K)]
    for e in edges:
        rows[e.low].append((e.high, e.offset, 1, e.pi))
        rows[e.high].append((e.low, e.offset, 0, e.pi))
    ptr = np.zeros(K + 1, dtype=np.int64)
    flat = []
    for k, r in enumerate(rows):
        flat.extend(r)
        ptr[k + 1] = len(flat)
    other = np.array([x[0] for x in flat], dtype=np.int64)
    woff = np.array([x[1] for x in flat], dtype=np.int64)
    low = np.array([x[2] for x in flat], dtype=np.int64)
    pi = np.array([x[3] for x in flat], dtype=float)
    return ptr, other, woff, low, pi


def build_layout(spec: ScenarioSpec, asm: Assembly, steps: StepSizes, mode: str) -> SweepLayout:
    K, M, B = len(asm.agents), spec.M, spec.B
    lam_off = np.array([op.offset for op in asm.agents] + [asm.dim_lambda], dtype=np.int64)
    gam_dim = np.array([op.n * M for op in asm.agents], dtype=np.int64)
    H_off = np.zeros(K + 1, dtype=np.int64)
    for op in asm.agents:
        H_off[op.index + 1] = H_off[op.index] + op.H.size
    H = np.concatenate([op.H.ravel() for op in asm.agents])
    E_theta = np.concatenate([op.E[op.theta] for op in asm.agents]) if B else np.zeros(0)
    fpar = np.concatenate([spec.agent(*op.agent).f.packed(M).ravel() for op in asm.agents])
    g_kind = np.zeros(K, dtype=np.int64)
    g_lo = np.full(K * M, -np.inf)
    g_hi = np.full(K * M, np.inf)
    g_w = np.zeros(K)
    for op in asm.agents:
        g = spec.agent(*op.agent).g
        k = op.index
        if isinstance(g, BoxIndicator):
            g_kind[k] = G_BOX
            g_lo[k * M:(k + 1) * M], g_hi[k * M:(k + 1) * M] = g.bounds(M)
        elif isinstance(g, NormPenalty):
            g_kind[k] = G_L1 if g.order == 1 else G_L2
            g_w[k] = g.weight
        else:
            g_kind[k] = G_ZERO
    intra = [e for e in asm.edges if e.kind == INTRA]
    glob = [e for e in asm.edges if e.kind != INTRA]
    ia = _csr(K, intra)
    ga = _csr(K, glob)

    def edge_arrays(edges):
        return (np.array([e.low for e in edges], dtype=np.int64),
                np.array([e.high for e in edges], dtype=np.int64),
                np.array([e.offset for e in edges], dtype=np.int64),
                np.array([e.pi for e in edges], dtype=float))

    return SweepLayout(K, M, B, asm.dim_lambda, asm.dim_omega, lam_off, gam_dim, H_off,
                       np.ascontiguousarray(H), np.ascontiguousarray(E_theta, dtype=float),
                       np.ascontiguousarray(steps.c, dtype=float), np.ascontiguousarray(fpar),
                       g_kind, g_lo, g_hi, g_w, *ia, *ga, *edge_arrays(intra), *edge_arrays(glob),
                       mode == INEQUALITY)
