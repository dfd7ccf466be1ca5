import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdpg.errors import NumericalError, ValidationError
from cdpg.functions import (BoxIndicator, NormPenalty, QuadExp, Quadratic, Zero, conjugate_argmax,
                            function_from_dict, prox, prox_conjugate, quadexp_root)
from cdpg.scenarios import emission_dispatch

finite = st.floats(-50, 50, allow_nan=False)
vectors = st.lists(finite, min_size=3, max_size=3).map(np.array)

SMOOTH = [
    Quadratic(1.0),
    Quadratic((0.5, 2.0, 0.1), (1.0, -3.0, 0.0)),
    QuadExp(0.3, 1.0, 0.5, 0.8, -2.0),
    QuadExp((1.0, 0.2, 4.0), (-1.0, 0.0, 2.0), (0.0, 2.0, 0.1), (1.0, -1.5, 0.3), 0.5),
    emission_dispatch().agent(1, 1).f,
]
NONSMOOTH = [
    Zero(),
    BoxIndicator(0.0, 1.0),
    BoxIndicator((-1.0, 0.0, -5.0), (2.0, 0.0, -1.0)),
    NormPenalty(1, 0.7),
    NormPenalty(2, 1.3),
]


def grid_root(fprime, lo=-50.0, hi=50.0, n=100_001):
    """Bracket a sign change of fprime on a fine grid, then bisect."""
    xs = np.linspace(lo, hi, n)
    vals = np.array([fprime(x) for x in xs])
    k = int(np.flatnonzero(np.diff(np.sign(vals)) != 0)[0])
    a, b = xs[k], xs[k + 1]
    for _ in range(200):
        m = 0.5 * (a + b)
        if np.sign(fprime(m)) == np.sign(fprime(a)):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


# -- conjugate_argmax --------------------------------------------------------------------

def test_argmax_unit_quadratic():
    assert conjugate_argmax(Quadratic(1.0, 0.0), [1.0]) == pytest.approx([0.5], abs=1e-15)


def test_argmax_table1_machine():
    assert conjugate_argmax(Quadratic(0.1, 2.1), [0.0]) == pytest.approx([-10.5], abs=1e-12)


def test_argmax_quadexp_matches_grid_oracle():
    f = emission_dispatch().agent(1, 1).f
    expected = grid_root(lambda x: float(f.gradient([x])[0]))
    assert conjugate_argmax(f, [0.0])[0] == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("f", SMOOTH, ids=lambda f: type(f).__name__)
def test_argmax_stationarity(f):
    rng = np.random.default_rng(11)
    for _ in range(100):
        v = rng.uniform(-30, 30, size=3)
        u = conjugate_argmax(f, v)
        assert np.max(np.abs(f.gradient(u) - v)) <= 1e-8


@pytest.mark.parametrize("f", SMOOTH, ids=lambda f: type(f).__name__)
def test_strong_convexity_witness(f):
    rng = np.random.default_rng(5)
    sigma = f.sigma(3)
    for _ in range(200):
        u, w = rng.uniform(-5, 5, size=(2, 3))
        lower = f.value(u) + f.gradient(u) @ (w - u) + 0.5 * sigma * float((w - u) @ (w - u))
        assert f.value(w) >= lower - 1e-10 * max(1.0, abs(lower))


def test_quadexp_root_closed_form_when_exponential_vanishes():
    assert quadexp_root(2.0, 1.0, 0.0, 3.0, 5.0) == 1.0
    assert quadexp_root(2.0, 1.0, 3.0, 0.0, 5.0) == 1.0


def test_quadexp_root_failure_reports_residual():
    with pytest.raises(NumericalError) as info:
        quadexp_root(1e-300, 0.0, 1.0, 1.0, 1e300, max_iter=5)
    assert info.value.residual is not None


def test_conjugate_is_fenchel_value():
    f = QuadExp(0.3, 1.0, 0.5, 0.8, -2.0)
    v = np.array([1.7])
    us = np.linspace(-20, 20, 400_001)
    brute = np.max(v[0] * us - (0.3 * us**2 - 1.0 * us + 0.5 * np.exp(0.8 * us)))
    assert f.conjugate(v) == pytest.approx(brute, abs=1e-8)


# -- prox -----------------------------------------------------------------------------------

def test_prox_box_clamps():
    for alpha in (0.1, 1.0, 7.0):
        assert prox(BoxIndicator(0.0, 10.5), [12.0], alpha) == pytest.approx([10.5])


def test_prox_l1_inside_threshold():
    assert prox(NormPenalty(1, 1.0), [0.3], 1.0) == pytest.approx([0.0])


def test_prox_l1_shrinks():
    assert prox(NormPenalty(1, 1.0), [-2.0], 0.5) == pytest.approx([-1.5])


def test_prox_zero_is_identity():
    v = np.array([1.0, -2.0])
    assert np.array_equal(prox(Zero(), v, 3.0), v)


def test_prox_rejects_nonpositive_step():
    with pytest.raises(ValidationError):
        prox(Zero(), [1.0], 0.0)
    with pytest.raises(ValidationError):
        prox_conjugate(Zero(), [1.0], -1.0)


def test_prox_conjugate_zero():
    assert prox_conjugate(Zero(), [3.0, -4.0], 1.0) == pytest.approx([0.0, 0.0])


def test_prox_conjugate_box():
    assert prox_conjugate(BoxIndicator(0.0, 1.0), [3.0], 1.0) == pytest.approx([2.0])


def test_prox_conjugate_l2_interior_fixed():
    v = np.array([0.3, -0.4])
    assert prox_conjugate(NormPenalty(2, 1.0), v, 1.0) == pytest.approx(v, abs=1e-15)


def direct_prox_of_conjugate(g, v, c):
    """prox^c of g's conjugate from the conjugate's closed form."""
    v = np.asarray(v, dtype=float)
    if isinstance(g, Zero):
        return np.zeros_like(v)
    if isinstance(g, BoxIndicator):
        lo, hi = g.bounds(v.size)
        # support function: piecewise linear, kink at 0
        return np.where(v > c * hi, v - c * hi, np.where(v < c * lo, v - c * lo, 0.0))
    if g.order == 1:
        return np.clip(v, -g.weight, g.weight)
    nrm = np.linalg.norm(v)
    return v if nrm <= g.weight else v * g.weight / nrm


@pytest.mark.parametrize("g", NONSMOOTH, ids=lambda g: type(g).__name__)
@given(v=vectors, c=st.sampled_from([0.1, 1.0, 10.0]))
def test_prox_conjugate_matches_conjugate_closed_form(g, v, c):
    assert np.allclose(prox_conjugate(g, v, c), direct_prox_of_conjugate(g, v, c), atol=1e-10)


@pytest.mark.parametrize("g", NONSMOOTH, ids=lambda g: type(g).__name__)
@given(v=vectors, alpha=st.sampled_from([0.1, 1.0, 10.0]))
def test_moreau_identity(g, v, alpha):
    recomposed = alpha * prox_conjugate(g, v / alpha, 1.0 / alpha) + prox(g, v, alpha)
    assert np.max(np.abs(recomposed - v)) <= 1e-10 * max(1.0, float(np.max(np.abs(v))))


@pytest.mark.parametrize("g", NONSMOOTH, ids=lambda g: type(g).__name__)
@given(v=vectors, w=vectors, alpha=st.sampled_from([0.1, 1.0, 10.0]))
def test_prox_nonexpansive(g, v, w, alpha):
    d = np.linalg.norm(prox(g, v, alpha) - prox(g, w, alpha))
    assert d <= np.linalg.norm(v - w) + 1e-12


@pytest.mark.parametrize("g", NONSMOOTH, ids=lambda g: type(g).__name__)
def test_prox_minimizes_objective(g):
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.uniform(-3, 3, size=3)
        alpha = float(rng.choice([0.1, 1.0, 10.0]))
        p = prox(g, v, alpha)
        best = g.value(p) + float((p - v) @ (p - v)) / (2 * alpha)
        for _ in range(50):
            q = p + rng.normal(scale=0.05, size=3)
            if isinstance(g, BoxIndicator):
                q = g.prox(q)
            assert g.value(q) + float((q - v) @ (q - v)) / (2 * alpha) >= best - 1e-12


def test_box_conjugate_is_support_function():
    g = BoxIndicator((-1.0, 2.0), (3.0, 4.0))
    assert g.conjugate([2.0, -1.0]) == pytest.approx(2.0 * 3.0 + (-1.0) * 2.0)


def test_norm_conjugate_is_dual_ball_indicator():
    assert NormPenalty(1, 2.0).conjugate([1.9, -2.0]) == 0.0
    assert math.isinf(NormPenalty(1, 2.0).conjugate([2.1, 0.0]))
    assert NormPenalty(2, 1.0).conjugate([0.6, 0.8]) == 0.0
    assert math.isinf(NormPenalty(2, 1.0).conjugate([0.6, 0.9]))


# -- validation and serialization ------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: Quadratic(0.0),
    lambda: Quadratic((1.0, -1.0)),
    lambda: QuadExp(1.0, rho1=-1.0),
    lambda: BoxIndicator(2.0, 1.0),
    lambda: NormPenalty(3),
    lambda: Quadratic((1.0, 2.0), (1.0, 2.0, 3.0)),
])
def test_invalid_specs_rejected(make):
    with pytest.raises(ValidationError):
        make()


@pytest.mark.parametrize("spec", SMOOTH + NONSMOOTH, ids=lambda s: type(s).__name__)
def test_dict_round_trip(spec):
    assert function_from_dict(spec.to_dict()) == spec


def test_function_from_dict_rejects_unknown():
    with pytest.raises(ValidationError, match="unknown function type"):
        function_from_dict({"type": "cubic"})
    with pytest.raises(ValidationError, match="unknown keys"):
        function_from_dict({"type": "quadratic", "a": 1.0, "c": 2.0})
