"""Dual iterate containers with per-agent and per-edge accessors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidIndexError
from .operators import GLOBAL, INTRA, Assembly


@dataclass
class DualState:
    """Stacked ``lambda`` in relabeled agent order plus the iteration counter."""

    lam: np.ndarray
    assembly: Assembly
    t: int = 0

    @classmethod
    def zeros(cls, assembly: Assembly) -> "DualState":
        return cls(np.zeros(assembly.dim_lambda), assembly)

    def _block(self, i, j):
        op = self.assembly.agent(i, j)
        return op, self.lam[op.offset:op.offset + op.size]

    def mu(self, i: int, j: int) -> np.ndarray:
        op, blk = self._block(i, j)
        return blk[op.mu]

    def gamma(self, i: int, j: int) -> np.ndarray:
        op, blk = self._block(i, j)
        return blk[op.gamma]

    def theta(self, i: int, j: int) -> np.ndarray:
        op, blk = self._block(i, j)
        return blk[op.theta]

    def copy(self) -> "DualState":
        return DualState(self.lam.copy(), self.assembly, self.t)


@dataclass
class EdgeMultipliers:
    """The edge-indexed multiplier vector ``omega = [xi; zeta]``."""

    omega: np.ndarray
    assembly: Assembly

    @classmethod
    def zeros(cls, assembly: Assembly) -> "EdgeMultipliers":
        return cls(np.zeros(assembly.dim_omega), assembly)

    def _find(self, kind, label):
        for e in self.assembly.edges:
            if e.kind == kind and e.label == label:
                return self.omega[e.offset:e.offset + e.size]
        raise InvalidIndexError(f"no {kind} edge multiplier with label {label}")

    def xi(self, i: int, j: int, l: int) -> np.ndarray:
        """Multiplier of intra edge (j, l) of cluster i, with l > j."""
        return self._find(INTRA, (i, j, l))

    def zeta(self, i: int, j: int, k: int) -> np.ndarray:
        """Multiplier of global edge (n_ij, k), with k > n_ij."""
        return self._find(GLOBAL, (i, j, k))

    def copy(self) -> "EdgeMultipliers":
        return EdgeMultipliers(self.omega.copy(), self.assembly)


class ErgodicAverage:
    """Running mean of the dual iterates, updated one iterate at a time."""

    def __init__(self, size: int):
        self.mean = np.zeros(size)
        self.count = 0

    def add(self, lam: np.ndarray) -> None:
        self.count += 1
        self.mean += (lam - self.mean) / self.count

    @property
    def value(self) -> np.ndarray:
        return self.mean.copy()


def ergodic_average(history) -> np.ndarray:
    """Mean of ``lambda^1 .. lambda^{T+1}`` given as an iterable."""
    avg = None
    for lam in history:
        lam = np.asarray(lam, dtype=float)
        if avg is None:
            avg = ErgodicAverage(lam.size)
        avg.add(lam)
    if avg is None:
        raise ValueError("ergodic average of an empty history")
    return avg.value
