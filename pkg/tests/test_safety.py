import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safeagc.plant import discretize, predict_frequencies
from safeagc.safety import (
    Allowed, Flagged, OutsideSafeSet, Rectified, SafetyConfig, barrier_b, barrier_condition, barrier_h, screen,
)

from oracles import grid_min_distance_2d

CFG = SafetyConfig(F=0.4, alpha=(1.0, 1.0), ts_pred=0.5, mode="rectify")


def interior_state(model, dm, rng, held=None, scale=0.03):
    """Random state whose predicted frequencies sit well inside the band."""
    held = np.zeros(model.g) if held is None else held
    while True:
        x = rng.normal(0, scale, model.n)
        PL = rng.uniform(-0.05, 0.05, model.m)
        if np.all(np.abs(predict_frequencies(dm, x, PL, held)) < 0.8 * CFG.F):
            return x, PL


def test_barrier_b_values():
    assert barrier_b(1.0) == pytest.approx(math.log(2.0))
    assert barrier_b(0.0) == math.inf
    assert barrier_b(-0.1) == math.inf
    assert barrier_b(1e-12) > 27.0


@given(st.floats(1e-9, 1e6), st.floats(1e-9, 1e6))
@settings(max_examples=200)
def test_barrier_b_positive_and_decreasing(h1, h2):
    assert barrier_b(h1) > 0
    if h1 < h2:
        assert barrier_b(h1) >= barrier_b(h2)


def test_barrier_h_matches_definition(model, dm_half, rng):
    x, PL = interior_state(model, dm_half, rng)
    u = rng.uniform(-0.1, 0.1, 4)
    f = predict_frequencies(dm_half, x, PL, u)
    np.testing.assert_allclose(barrier_h(dm_half, CFG, x, PL, u), 0.16 - f**2)


def test_bdot_finite_difference(model, dm_half, rng):
    for _ in range(10):
        held = rng.uniform(-0.1, 0.1, 4)
        x, PL = interior_state(model, dm_half, rng, held)
        u = rng.uniform(-0.1, 0.1, 4)
        ev = barrier_condition(model, dm_half, CFG, x, PL, u, held)
        xdot = model.derivative(x, PL, u)
        eps = 1e-6

        def B(xx):
            return np.log1p(1.0 / barrier_h(dm_half, CFG, xx, PL, held))

        fd = (B(x + eps * xdot) - B(x - eps * xdot)) / (2 * eps)
        np.testing.assert_allclose(ev.Bdot, fd, rtol=1e-4, atol=1e-10)


def test_residual_is_affine_in_candidate(model, dm_half, rng):
    x, PL = interior_state(model, dm_half, rng)
    held = rng.uniform(-0.1, 0.1, 4)
    for _ in range(5):
        u = rng.uniform(-0.2, 0.2, 4)
        ev = barrier_condition(model, dm_half, CFG, x, PL, u, held)
        np.testing.assert_allclose(ev.residual, ev.offset + ev.gain @ u, atol=1e-12)


def test_outside_safe_set_raises(model, dm_half):
    x = np.zeros(model.n)
    x[model.freq_index[0]] = 1.0
    with pytest.raises(OutsideSafeSet) as info:
        barrier_condition(model, dm_half, CFG, x, np.zeros(2), np.zeros(4))
    assert 0 in info.value.areas


def test_zero_state_zero_input_allowed(model, dm_half):
    d = screen(model, dm_half, CFG, np.zeros(model.n), np.zeros(2), np.zeros(4))
    assert isinstance(d, Allowed)
    assert not d.flagged
    np.testing.assert_array_equal(d.delta, 0.0)


def _violating_case(model, dm, rng):
    while True:
        x, PL = interior_state(model, dm, rng, scale=0.05)
        u = rng.uniform(-0.5, 0.5, 4)
        ev = barrier_condition(model, dm, CFG, x, PL, u)
        if not ev.satisfied:
            return x, PL, u, ev


def test_modes(model, dm_half, rng):
    x, PL, u, ev = _violating_case(model, dm_half, rng)
    assert isinstance(screen(model, dm_half, CFG, x, PL, u, mode="off"), Allowed)
    d = screen(model, dm_half, CFG, x, PL, u, mode="flag")
    assert isinstance(d, Flagged) and d.flagged
    assert set(d.areas) == set(np.flatnonzero(ev.residual > 1e-9).tolist())
    r = screen(model, dm_half, CFG, x, PL, u, mode="rectify")
    assert isinstance(r, Rectified)
    np.testing.assert_allclose(r.u - u, r.delta)
    again = barrier_condition(model, dm_half, CFG, x, PL, r.u)
    assert np.all(again.residual <= 1e-9)


def test_rectified_is_nearest(model, dm_half, rng):
    for _ in range(10):
        x, PL, u, ev = _violating_case(model, dm_half, rng)
        r = screen(model, dm_half, CFG, x, PL, u, mode="rectify")
        d_qp = np.linalg.norm(r.delta)
        d_grid, _ = grid_min_distance_2d(u, ev.gain, -ev.offset, radius=d_qp + 0.05, res=1e-3)
        assert d_qp <= d_grid + 1e-9
        assert d_grid - d_qp <= 2e-3


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_allowed_inputs_pass_through(model, seed):
    rng = np.random.default_rng(seed)
    dm = discretize(model, 0.5)
    x, PL = interior_state(model, dm, rng)
    u = rng.uniform(-0.3, 0.3, 4)
    d = screen(model, dm, CFG, x, PL, u, mode="rectify")
    if isinstance(d, Allowed):
        np.testing.assert_array_equal(d.u, u)
    else:
        assert np.all(d.residual <= 1e-9)
        # anything not passed through must have been moved
        assert np.linalg.norm(d.delta) > 0


def test_config_validation():
    with pytest.raises(ValueError):
        SafetyConfig(F=0.0, alpha=(1.0,), ts_pred=0.5)
    with pytest.raises(ValueError):
        SafetyConfig(F=0.4, alpha=(0.0,), ts_pred=0.5)
    with pytest.raises(ValueError):
        SafetyConfig(F=0.4, alpha=(1.0,), ts_pred=0.5, mode="maybe")
    assert SafetyConfig(F=0.4, alpha=(1.0,), ts_pred=0.5).recheck == 0.5
