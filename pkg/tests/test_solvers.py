from __future__ import annotations

import pytest

from lipreach.mdp import BallShape, StatePoint, TagShape, UsageError
from lipreach.models import (
    finite_model,
    frequency_chain,
    gravity_1d,
    navigation_2d,
    random_finite,
    random_finite_mdp,
    retry_loop,
    self_loop_chain,
    two_state_chain,
)
from lipreach.oracle import FiniteMdp, exact_value_iteration, n_step_dp
from lipreach.solvers import (
    SolverConfig,
    StagnationError,
    probe_bounds,
    solve_brtdp,
    solve_reach_avoid,
    solve_step_bounded,
    solve_vi_lower,
    with_avoid,
)
from lipreach.store import BoundCrossingError, BoundStore


def test_config_validation():
    with pytest.raises(UsageError):
        SolverConfig(mode="bogus")
    with pytest.raises(UsageError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(UsageError):
        SolverConfig(xi=1.0)
    c = SolverConfig(epsilon=0.08)
    assert c.precision(1) == 1.0
    assert c.precision(10**6) == pytest.approx(0.01)


def test_vi_lower_semi_decision():
    m = two_state_chain(0.5)
    yes = solve_vi_lower(m, SolverConfig(mode="vi-lower", xi=0.4, seed=1))
    assert yes.outcome == "yes" and yes.lower > 0.4
    no = solve_vi_lower(m, SolverConfig(mode="vi-lower", xi=0.6, seed=1, max_steps=5000))
    assert no.outcome == "budget-exhausted" and no.lower <= 0.5


def test_initial_state_in_target_or_sink():
    fm = FiniteMdp.from_rows(2, [(0, 0, {0: 1.0}), (1, 0, {1: 1.0})], [0], [1], initial=0)
    r = solve_brtdp(finite_model(fm))
    assert (r.lower, r.upper) == (1.0, 1.0) and r.steps == 0
    fm = FiniteMdp.from_rows(2, [(0, 0, {0: 1.0}), (1, 0, {1: 1.0})], [1], [0], initial=0)
    r = solve_brtdp(finite_model(fm))
    assert (r.lower, r.upper) == (0.0, 0.0)
    fm = FiniteMdp.from_rows(2, [(0, 0, {0: 1.0}), (1, 0, {1: 1.0})], [0], [1])
    y = solve_vi_lower(finite_model(fm), SolverConfig(mode="vi-lower", xi=0.9))
    assert y.outcome == "yes"


@pytest.mark.parametrize("seed", range(5))
def test_brtdp_brackets_small_random_models(seed):
    fm = random_finite_mdp(seed, n_states=5)
    v = exact_value_iteration(fm).lower[fm.initial]
    r = solve_brtdp(random_finite(seed, n_states=5), SolverConfig(seed=seed))
    assert r.outcome == "bounds"
    assert r.lower - 1e-9 <= v <= r.upper + 1e-9
    assert r.gap < 0.01


def test_retry_loop_geometric_value():
    r = solve_brtdp(retry_loop(0.3, 0.1), SolverConfig(seed=0))
    assert r.lower - 1e-9 <= 0.75 <= r.upper + 1e-9


def test_step_bounded_examples():
    rows = [(0, 0, {1: 0.5, 0: 0.5}), (1, 0, {1: 1.0})]
    m = finite_model(FiniteMdp.from_rows(2, rows, [1], []))
    r = solve_step_bounded(m, 2, SolverConfig(mode="step-bounded"))
    assert r.lower - 1e-9 <= 0.75 <= r.upper + 1e-9 and r.gap < 0.01
    r0 = solve_step_bounded(m, 0)
    assert (r0.lower, r0.upper) == (0.0, 0.0)


def test_step_bounded_matches_dp():
    fm = random_finite_mdp(3)
    m = random_finite(3)
    for n in (1, 3):
        r = solve_step_bounded(m, n, SolverConfig(mode="step-bounded", seed=n))
        v = n_step_dp(fm, n)[fm.initial]
        assert r.lower - 1e-9 <= v <= r.upper + 1e-9


def test_reach_avoid_initial_in_avoid():
    m = retry_loop()
    r = solve_reach_avoid(m, TagShape([0]), SolverConfig(seed=0))
    assert (r.lower, r.upper) == (0.0, 0.0)


def test_reach_avoid_blocks_the_retry_state():
    # every path from s0 passes through the retry state
    m = retry_loop(0.3, 0.1)
    r = solve_reach_avoid(m, TagShape([1]), SolverConfig(seed=0))
    assert (r.lower, r.upper) == (0.0, 0.0)


def test_reach_avoid_sink_disk_is_idempotent():
    n = navigation_2d()
    merged = with_avoid(n, BallShape([0.5, 0.5], 0.05))
    for x in ((0.5, 0.5), (0.52, 0.5), (0.3, 0.3), (0.99, 0.99)):
        s = StatePoint(x)
        assert merged.is_sink(s) == n.is_sink(s)
        assert merged.is_target(s) == n.is_target(s)


def test_reach_avoid_corridor():
    # 0 -> 1 -> 2 (target) deterministically; the other action leads into state 3, which is avoided
    rows = [
        (0, 0, {1: 1.0}),
        (0, 1, {3: 1.0}),
        (1, 0, {2: 1.0}),
        (1, 1, {3: 1.0}),
        (2, 0, {2: 1.0}),
        (3, 0, {2: 1.0}),
    ]
    m = finite_model(FiniteMdp.from_rows(4, rows, [2], []))
    r = solve_reach_avoid(m, TagShape([3]), SolverConfig(seed=0))
    assert (r.lower, r.upper) == (1.0, 1.0)


def test_traces_are_monotone():
    r = solve_brtdp(random_finite(7), SolverConfig(seed=7))
    for prev, cur in zip(r.trace, r.trace[1:]):
        assert cur.lower >= prev.lower - prev.slack - cur.slack - 1e-12
        assert cur.upper <= prev.upper + prev.slack + cur.slack + 1e-12


def test_same_seed_same_run():
    a = solve_brtdp(gravity_1d(), SolverConfig(seed=3, epsilon=0.2, max_steps=3000))
    b = solve_brtdp(gravity_1d(), SolverConfig(seed=3, epsilon=0.2, max_steps=3000))
    assert (a.lower, a.upper, a.steps) == (b.lower, b.upper, b.steps)
    assert [(t.step, t.lower, t.upper) for t in a.trace] == [(t.step, t.lower, t.upper) for t in b.trace]


def test_exact_and_cache_backends_agree_on_soundness():
    g = gravity_1d()
    exact = solve_brtdp(g, SolverConfig(seed=2, epsilon=0.3, backend="exact", max_steps=500))
    config = SolverConfig(seed=2, epsilon=0.3, backend="cache", max_steps=500, cache_resolution=4096)
    cached = solve_brtdp(g, config)
    assert exact.backend == "exact" and cached.backend == "cache"
    assert max(exact.lower, cached.lower) <= min(exact.upper, cached.upper) + 1e-9


def test_wrong_constant_is_caught_or_misses():
    m = frequency_chain(4, bad_constant=1.0)
    try:
        r = solve_brtdp(m, SolverConfig(seed=0, max_steps=50_000))
    except BoundCrossingError as err:
        assert err.trace
    else:
        assert not (r.lower <= 0.4 <= r.upper)


def test_stagnation_on_non_absorbing_model():
    m = self_loop_chain(0.0)
    with pytest.raises(StagnationError) as info:
        solve_brtdp(m, SolverConfig(seed=0, stagnation_window=2000))
    assert info.value.upper == 1.0 and info.value.lower == 0.0


def test_probe_bounds_on_fixed_states():
    g = gravity_1d()
    store = BoundStore.from_model(g)
    assert probe_bounds(store, g, StatePoint((0.99,)), 0.01) == (1.0, 1.0, 0.0)
    assert probe_bounds(store, g, StatePoint((-0.99,)), 0.01) == (0.0, 0.0, 0.0)
    lo, hi, _ = probe_bounds(store, g, StatePoint((0.0,)), 0.01)
    assert (lo, hi) == (0.0, 1.0)
