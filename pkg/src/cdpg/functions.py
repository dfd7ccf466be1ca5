"""Catalog of convex function oracles used by the agents.

Smooth, strongly convex parts expose ``conjugate_argmax`` (the gradient of
the Fenchel conjugate). Nonsmooth parts expose ``prox`` and, through the
Moreau decomposition, ``prox_conjugate``. Everything acts componentwise on
``M``-dimensional blocks except the Euclidean norm penalty.

Scalar parameters broadcast over the block; sequences must have length M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import NumericalError, ValidationError

Param = Union[float, tuple]

ROOT_TOL = 1e-12
ROOT_MAX_ITER = 200

# Codes shared with the sweep kernels.
G_ZERO, G_BOX, G_L1, G_L2 = 0, 1, 2, 3


def _param(x) -> Param:
    if np.ndim(x) == 0:
        return float(x)
    return tuple(float(v) for v in np.ravel(x))


def _vec(x: Param, M: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.full(M, float(arr))
    if arr.shape != (M,):
        raise ValidationError(f"parameter of length {arr.size} does not match block size {M}")
    return arr.copy()


def _plain(x: Param):
    return list(x) if isinstance(x, tuple) else x


def _length(*params) -> int | None:
    sizes = {len(p) for p in params if isinstance(p, tuple)}
    if len(sizes) > 1:
        raise ValidationError(f"inconsistent parameter lengths {sorted(sizes)}")
    return sizes.pop() if sizes else None


def quadexp_root(a: float, b: float, r1: float, r2: float, v: float,
                 tol: float = ROOT_TOL, max_iter: int = ROOT_MAX_ITER) -> float:
    """Solve ``2*a*u + b + r1*r2*exp(r2*u) = v`` for u.

    The left side is strictly increasing when ``a > 0`` and ``r1 >= 0``.
    Expands a bracket around the quadratic-only root, then runs Newton steps
    that fall back to bisection whenever they leave the bracket.
    """
    def dfun(u):
        return 2.0 * a * u + b + r1 * r2 * math.exp(r2 * u) - v

    if r1 == 0.0 or r2 == 0.0:
        return (v - b) / (2.0 * a)
    u0 = (v - b) / (2.0 * a)
    step = 1.0
    lo, hi = u0 - step, u0 + step
    it = 0
    while dfun(lo) > 0.0:
        lo -= step
        step *= 2.0
        it += 1
        if it > max_iter:
            raise NumericalError("bracket expansion failed", residual=dfun(lo))
    step = 1.0
    while dfun(hi) < 0.0:
        hi += step
        step *= 2.0
        it += 1
        if it > max_iter:
            raise NumericalError("bracket expansion failed", residual=dfun(hi))
    u = min(max(u0, lo), hi)
    while it <= max_iter:
        g = dfun(u)
        if g == 0.0:
            return u
        if g > 0.0:
            hi = u
        else:
            lo = u
        if hi - lo <= tol * max(1.0, abs(u)):
            return 0.5 * (lo + hi)
        slope = 2.0 * a + r1 * r2 * r2 * math.exp(r2 * u)
        cand = u - g / slope
        u = cand if lo < cand < hi else 0.5 * (lo + hi)
        it += 1
    raise NumericalError("conjugate argmax root-finding did not converge", residual=dfun(u))


# --------------------------------------------------------------------------
# smooth parts


@dataclass(frozen=True)
class Quadratic:
    """f(u) = sum_m a_m u_m^2 + b_m u_m with every a_m > 0."""

    a: Param
    b: Param = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", _param(self.a))
        object.__setattr__(self, "b", _param(self.b))
        _length(self.a, self.b)
        if np.any(np.asarray(self.a) <= 0):
            raise ValidationError("Quadratic needs a > 0")

    @property
    def size(self):
        return _length(self.a, self.b)

    def sigma(self, M: int = 1) -> float:
        return 2.0 * float(np.min(_vec(self.a, M)))

    def packed(self, M: int) -> np.ndarray:
        out = np.zeros((M, 4))
        out[:, 0] = _vec(self.a, M)
        out[:, 1] = _vec(self.b, M)
        return out

    def value(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        M = u.size
        return float(np.sum(_vec(self.a, M) * u * u + _vec(self.b, M) * u))

    def gradient(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        M = u.size
        return 2.0 * _vec(self.a, M) * u + _vec(self.b, M)

    def conjugate_argmax(self, v) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        M = v.size
        return (v - _vec(self.b, M)) / (2.0 * _vec(self.a, M))

    def conjugate(self, v) -> float:
        u = self.conjugate_argmax(v)
        return float(np.dot(np.atleast_1d(v), u) - self.value(u))

    def to_dict(self) -> dict:
        return {"type": "quadratic", "a": _plain(self.a), "b": _plain(self.b)}


@dataclass(frozen=True)
class QuadExp:
    """f(u) = sum_m a u^2 + (b + rho3) u + rho1 exp(rho2 u).

    Needs ``a > 0`` and ``rho1 >= 0`` so the exponential only adds curvature;
    the strong convexity modulus reported is the quadratic part's ``2*min(a)``.
    """

    a: Param
    b: Param = 0.0
    rho1: Param = 0.0
    rho2: Param = 0.0
    rho3: Param = 0.0

    def __post_init__(self):
        for name in ("a", "b", "rho1", "rho2", "rho3"):
            object.__setattr__(self, name, _param(getattr(self, name)))
        _length(self.a, self.b, self.rho1, self.rho2, self.rho3)
        if np.any(np.asarray(self.a) <= 0):
            raise ValidationError("QuadExp needs a > 0")
        if np.any(np.asarray(self.rho1) < 0):
            raise ValidationError("QuadExp needs rho1 >= 0")

    @property
    def size(self):
        return _length(self.a, self.b, self.rho1, self.rho2, self.rho3)

    def sigma(self, M: int = 1) -> float:
        return 2.0 * float(np.min(_vec(self.a, M)))

    def packed(self, M: int) -> np.ndarray:
        out = np.empty((M, 4))
        out[:, 0] = _vec(self.a, M)
        out[:, 1] = _vec(self.b, M) + _vec(self.rho3, M)
        out[:, 2] = _vec(self.rho1, M)
        out[:, 3] = _vec(self.rho2, M)
        return out

    def value(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a, b, r1, r2 = self.packed(u.size).T
        return float(np.sum(a * u * u + b * u + r1 * np.exp(r2 * u)))

    def gradient(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a, b, r1, r2 = self.packed(u.size).T
        return 2.0 * a * u + b + r1 * r2 * np.exp(r2 * u)

    def conjugate_argmax(self, v) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        P = self.packed(v.size)
        return np.array([quadexp_root(*P[m], v[m]) for m in range(v.size)])

    def conjugate(self, v) -> float:
        u = self.conjugate_argmax(v)
        return float(np.dot(np.atleast_1d(v), u) - self.value(u))

    def to_dict(self) -> dict:
        return {"type": "quadexp", "a": _plain(self.a), "b": _plain(self.b),
                "rho1": _plain(self.rho1), "rho2": _plain(self.rho2), "rho3": _plain(self.rho3)}


SmoothSpec = Union[Quadratic, QuadExp]


# --------------------------------------------------------------------------
# nonsmooth parts


@dataclass(frozen=True)
class Zero:
    """g = 0. Its conjugate is the indicator of the origin."""

    kind = G_ZERO
    size = None

    def value(self, u) -> float:
        return 0.0

    def prox(self, v, alpha: float) -> np.ndarray:
        return np.array(v, dtype=float, copy=True).reshape(-1)

    def conjugate(self, v, tol: float = 1e-12) -> float:
        return 0.0 if np.max(np.abs(v), initial=0.0) <= tol else math.inf

    def bounds(self, M):
        return np.full(M, -np.inf), np.full(M, np.inf)

    def to_dict(self) -> dict:
        return {"type": "zero"}


@dataclass(frozen=True)
class BoxIndicator:
    """Indicator of ``lower <= u <= upper``."""

    lower: Param
    upper: Param

    kind = G_BOX

    def __post_init__(self):
        object.__setattr__(self, "lower", _param(self.lower))
        object.__setattr__(self, "upper", _param(self.upper))
        _length(self.lower, self.upper)
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValidationError("BoxIndicator needs lower <= upper")

    @property
    def size(self):
        return _length(self.lower, self.upper)

    def bounds(self, M):
        return _vec(self.lower, M), _vec(self.upper, M)

    def value(self, u, tol: float = 0.0) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = self.bounds(u.size)
        return 0.0 if np.all(u >= lo - tol) and np.all(u <= hi + tol) else math.inf

    def prox(self, v, alpha: float = 1.0) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        lo, hi = self.bounds(v.size)
        return np.minimum(np.maximum(v, lo), hi)

    def conjugate(self, v) -> float:
        """Support function of the box."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        lo, hi = self.bounds(v.size)
        pos = np.maximum(v, 0.0)
        neg = np.minimum(v, 0.0)
        total = 0.0
        for m in range(v.size):
            if pos[m] > 0:
                total += pos[m] * hi[m]
            if neg[m] < 0:
                total += neg[m] * lo[m]
        return float(total)

    def to_dict(self) -> dict:
        return {"type": "box", "lower": _plain(self.lower), "upper": _plain(self.upper)}


@dataclass(frozen=True)
class NormPenalty:
    """g(u) = weight * ||u||_order for order 1 or 2."""

    order: int
    weight: float = 1.0

    size = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValidationError(f"NormPenalty order must be 1 or 2, got {self.order}")
        if self.weight < 0:
            raise ValidationError("NormPenalty needs weight >= 0")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def kind(self):
        return G_L1 if self.order == 1 else G_L2

    def bounds(self, M):
        return np.full(M, -np.inf), np.full(M, np.inf)

    def value(self, u) -> float:
        return self.weight * float(np.linalg.norm(np.atleast_1d(u), ord=self.order))

    def prox(self, v, alpha: float) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        t = alpha * self.weight
        if self.order == 1:
            return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        nrm = float(np.linalg.norm(v))
        if nrm <= t:
            return np.zeros_like(v)
        return (1.0 - t / nrm) * v

    def conjugate(self, v, tol: float = 1e-12) -> float:
        """Indicator of the dual-norm ball of radius ``weight``."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        dual = np.max(np.abs(v), initial=0.0) if self.order == 1 else float(np.linalg.norm(v))
        return 0.0 if dual <= self.weight * (1.0 + tol) + tol else math.inf

    def to_dict(self) -> dict:
        return {"type": "norm", "order": self.order, "weight": self.weight}


ProxSpec = Union[Zero, BoxIndicator, NormPenalty]
FunctionSpec = Union[Quadratic, QuadExp, Zero, BoxIndicator, NormPenalty]


# --------------------------------------------------------------------------
# operations


def conjugate_argmax(f: SmoothSpec, v) -> np.ndarray:
    """Maximizer of ``v.u - f(u)``, i.e. the gradient of f's conjugate at v."""
    return f.conjugate_argmax(v)


def prox(g: ProxSpec, v, alpha: float) -> np.ndarray:
    """argmin_u g(u) + ||u - v||^2 / (2 alpha)."""
    if alpha <= 0:
        raise ValidationError("prox step must be positive")
    return g.prox(v, alpha)


def prox_conjugate(g: ProxSpec, v, c: float) -> np.ndarray:
    """Prox of g's conjugate with step c, without forming the conjugate.

    Moreau: ``prox_{c g*}(v) = v - c * prox_{g/c}(v / c)``.
    """
    if c <= 0:
        raise ValidationError("prox step must be positive")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return v - c * g.prox(v / c, 1.0 / c)


_BUILDERS = {
    "quadratic": (Quadratic, {"a", "b"}),
    "quadexp": (QuadExp, {"a", "b", "rho1", "rho2", "rho3"}),
    "box": (BoxIndicator, {"lower", "upper"}),
    "norm": (NormPenalty, {"order", "weight"}),
    "zero": (Zero, set()),
}


def function_from_dict(data: dict) -> FunctionSpec:
    """Inverse of ``spec.to_dict()``."""
    if not isinstance(data, dict) or "type" not in data:
        raise ValidationError(f"function spec needs a 'type' field, got {data!r}")
    kind = data["type"]
    if kind not in _BUILDERS:
        raise ValidationError(f"unknown function type {kind!r}")
    cls, allowed = _BUILDERS[kind]
    extra = set(data) - allowed - {"type"}
    if extra:
        raise ValidationError(f"unknown keys {sorted(extra)} for function type {kind!r}")
    try:
        return cls(**{k: v for k, v in data.items() if k != "type"})
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {kind!r}: {exc}") from None
