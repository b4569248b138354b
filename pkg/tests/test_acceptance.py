"""Acceptance suite: one marked group of tests per criterion.

Run with `pytest tests/test_acceptance.py`; the terminal summary lists one
PASS/FAIL line per criterion.  Gravity and navigation are solved once per
module and shared by the convergence, soundness, region, trace and warm-start
checks.
"""
from __future__ import annotations

import os

import numpy as np
import pytest

from lipreach import io as fmt
from lipreach.approx import ApproxRequest, approx_expectation
from lipreach.mdp import ActionPoint, FiniteActionSet, StatePoint, discount_transform
from lipreach.models import (
    frequency_chain,
    gravity_1d,
    navigation_2d,
    random_finite,
    random_finite_mdp,
    self_loop_chain,
    two_state_chain,
)
from lipreach.oracle import (
    certified_interval,
    certified_values,
    discounted_self_loop,
    discretize,
    exact_value_iteration,
    frequency_value,
    n_step_dp,
)
from lipreach.solvers import SolverConfig, solve_brtdp, solve_step_bounded, solve_vi_lower
from lipreach.store import BoundCrossingError, BoundStore

TOL = 1e-9


def trace_roundtrip(result, tmp_path, name):
    """Writes the trace to disk and returns the rows read back from the file."""
    path = os.path.join(tmp_path, f"{name}.tsv")
    fmt.atomic_write(path, fmt.format_trace(result.trace, {"name": name}))
    with open(path) as fh:
        return fmt.parse_trace(fh.read())[1]


def assert_monotone(rows):
    assert rows
    for prev, cur in zip(rows, rows[1:]):
        assert cur.step >= prev.step
        assert cur.lower >= prev.lower - prev.slack - cur.slack - 1e-12
        assert cur.upper <= prev.upper + prev.slack + cur.slack + 1e-12


# ---------------------------------------------------------------------------
# shared solves


@pytest.fixture(scope="module")
def gravity_run():
    model = gravity_1d()
    return model, solve_brtdp(model, SolverConfig(epsilon=0.05, seed=7))


@pytest.fixture(scope="module")
def navigation_run():
    model = navigation_2d()
    return model, solve_brtdp(model, SolverConfig(epsilon=0.1, seed=7))


FINITE_SEEDS = range(50)


def finite_case(seed):
    n_states = 3 + seed % 18
    n_actions = 1 + seed % 3
    fm = random_finite_mdp(seed, n_states, n_actions)
    model = random_finite(seed, n_states, n_actions)
    return fm, model


# ---------------------------------------------------------------------------
# oracle bracketing on random finite models


@pytest.mark.criterion("oracle-bracketing")
@pytest.mark.parametrize("seed", FINITE_SEEDS)
def test_oracle_bracketing(seed, tmp_path):
    fm, model = finite_case(seed)
    assert fm.n_states <= 20
    v = exact_value_iteration(fm).lower[fm.initial]
    r = solve_brtdp(model, SolverConfig(epsilon=0.01, seed=seed))
    rows = trace_roundtrip(r, tmp_path, f"finite-{seed}")
    assert len(rows) == r.steps // r.config.probe_every + 1
    for row in rows:
        assert row.lower - TOL <= v <= row.upper + TOL
    assert r.outcome == "bounds" and r.gap < 0.01
    assert_monotone(rows)


# ---------------------------------------------------------------------------
# continuous soundness against the discretization oracle


@pytest.mark.criterion("continuous-soundness")
def test_gravity_soundness(gravity_run):
    model, r = gravity_run
    disc = discretize(model, 1 / 256)
    lo, hi = certified_interval(disc, certified_values(disc), model.initial_state)
    mid, width = (lo + hi) / 2, hi - lo
    assert r.lower - (r.gap + width) <= mid <= r.upper + (r.gap + width)
    # the solver's interval and the certified one must intersect
    assert max(lo, r.lower) <= min(hi, r.upper) + TOL


@pytest.mark.criterion("continuous-soundness")
def test_navigation_soundness(navigation_run):
    model, r = navigation_run
    disc = discretize(model, 1 / 64)
    lo, hi = certified_interval(disc, certified_values(disc), model.initial_state)
    mid, width = (lo + hi) / 2, hi - lo
    assert r.lower - (r.gap + width) <= mid <= r.upper + (r.gap + width)
    assert max(lo, r.lower) <= min(hi, r.upper) + TOL


# ---------------------------------------------------------------------------
# convergence within the step budget


@pytest.mark.criterion("convergence")
def test_gravity_converges(gravity_run):
    model, r = gravity_run
    assert model.initial_state == StatePoint((0.0,))
    assert r.outcome == "bounds" and r.gap < 0.05 and r.steps <= 10**7


@pytest.mark.criterion("convergence")
def test_navigation_converges(navigation_run):
    _, r = navigation_run
    assert r.outcome == "bounds" and r.gap < 0.1 and r.steps <= 10**7


# ---------------------------------------------------------------------------
# greedy region structure


@pytest.mark.criterion("region-structure")
def test_gravity_regions(gravity_run):
    model, r = gravity_run
    names = model.action_names()

    def greedy(x):
        s = StatePoint((x,))
        return {names[a.discrete_tag] for a in r.store.greedy_actions(s, 1e-3, model.actions_at(s))}

    assert greedy(0.0) == {"emergency"}
    assert "emergency" not in greedy(0.9)


@pytest.mark.criterion("region-structure")
def test_navigation_ties(navigation_run):
    model, r = navigation_run
    near_sink = [(0.5, 0.56), (0.56, 0.5), (0.46, 0.46), (0.5, 0.44)]
    near_target = [(0.95, 0.95), (0.97, 0.94), (0.93, 0.98), (0.9, 0.9)]
    for x in near_sink + near_target:
        s = StatePoint(x)
        assert len(r.store.greedy_actions(s, r.config.epsilon, model.actions_at(s))) == 2


# ---------------------------------------------------------------------------
# monotone anytime traces


@pytest.mark.criterion("monotone-traces")
def test_gravity_trace_monotone(gravity_run, tmp_path):
    assert_monotone(trace_roundtrip(gravity_run[1], tmp_path, "gravity"))


@pytest.mark.criterion("monotone-traces")
def test_navigation_trace_monotone(navigation_run, tmp_path):
    assert_monotone(trace_roundtrip(navigation_run[1], tmp_path, "navigation"))


# ---------------------------------------------------------------------------
# semi-decision


@pytest.mark.criterion("semi-decision")
def test_semi_decision_yes(tmp_path):
    r = solve_vi_lower(two_state_chain(0.5), SolverConfig(mode="vi-lower", xi=0.4, seed=1, max_steps=10_000))
    assert r.outcome == "yes" and r.steps <= 10_000 and r.lower > 0.4
    assert_monotone(trace_roundtrip(r, tmp_path, "semi-yes"))


@pytest.mark.criterion("semi-decision")
def test_semi_decision_never_yes_above_value(tmp_path):
    r = solve_vi_lower(two_state_chain(0.5), SolverConfig(mode="vi-lower", xi=0.6, seed=1, max_steps=10_000))
    assert r.outcome == "budget-exhausted"
    rows = trace_roundtrip(r, tmp_path, "semi-no")
    assert all(row.lower <= 0.5 + TOL for row in rows)
    assert_monotone(rows)


# ---------------------------------------------------------------------------
# step-bounded equivalence


@pytest.mark.criterion("step-bounded")
@pytest.mark.parametrize("seed", range(20))
def test_step_bounded_matches_dp(seed, tmp_path):
    fm = random_finite_mdp(100 + seed, n_states=4 + seed % 6)
    model = random_finite(100 + seed, n_states=4 + seed % 6)
    for n in (0, 1, 2, 5):
        v = n_step_dp(fm, n)[fm.initial]
        r = solve_step_bounded(model, n, SolverConfig(mode="step-bounded", epsilon=0.01, seed=seed))
        assert r.outcome == "bounds" and r.gap < 0.01
        assert r.lower - TOL <= v <= r.upper + TOL
        assert_monotone(trace_roundtrip(r, tmp_path, f"step-{seed}-{n}"))


# ---------------------------------------------------------------------------
# wrong Lipschitz constant on the frequency chain


@pytest.mark.criterion("frequency-chain")
def test_wrong_constant_is_exposed():
    truth = frequency_value(0.3, 4)
    try:
        r = solve_brtdp(frequency_chain(4, bad_constant=1.0), SolverConfig(seed=0))
    except BoundCrossingError as err:
        assert err.trace
    else:
        assert not (r.lower - TOL <= truth <= r.upper + TOL)


@pytest.mark.criterion("frequency-chain")
def test_correct_constant_contains_value(tmp_path):
    truth = frequency_value(0.3, 4)
    assert truth == pytest.approx(0.4)
    r = solve_brtdp(frequency_chain(4), SolverConfig(seed=0))
    assert r.outcome == "bounds"
    assert r.lower - TOL <= truth <= r.upper + TOL
    assert_monotone(trace_roundtrip(r, tmp_path, "frequency"))


# ---------------------------------------------------------------------------
# discount transform


@pytest.mark.criterion("discount-transform")
@pytest.mark.parametrize("gamma", [0.5, 0.9])
def test_discount_transform(gamma):
    r = solve_brtdp(discount_transform(self_loop_chain(0.5), gamma), SolverConfig(seed=0))
    expected = discounted_self_loop(0.5, gamma)
    assert r.outcome == "bounds"
    assert abs((r.lower + r.upper) / 2 - expected) <= 0.01
    assert r.lower - TOL <= expected <= r.upper + TOL


# ---------------------------------------------------------------------------
# micro-checks


@pytest.mark.criterion("micro-checks")
def test_extrapolation_point():
    a0 = ActionPoint((), 0)
    store = BoundStore(1, 0, lipschitz=1.0, actions=FiniteActionSet([a0]))
    store.record_update((StatePoint((0.4,)), a0), 0.3, 1.0)
    store.record_update((StatePoint((0.8,)), a0), 0.4, 1.0)
    assert store.lower_at((StatePoint((0.55,)), a0)) == pytest.approx(0.15, abs=1e-12)


@pytest.mark.criterion("micro-checks")
def test_approx_sandwich_500():
    from test_approx import _sandwich_case

    rng = np.random.default_rng(500)
    for _ in range(500):
        kernel, g, lip, exact = _sandwich_case(rng)
        eps = float(rng.uniform(0.005, 0.1))
        under = approx_expectation(kernel, g, ApproxRequest("under", eps, lip))
        over = approx_expectation(kernel, g, ApproxRequest("over", eps, lip))
        assert exact - eps - 1e-12 <= under <= exact + 1e-12
        assert exact - 1e-12 <= over <= exact + eps + 1e-12


@pytest.mark.criterion("micro-checks")
def test_index_matches_scan_10k():
    rng = np.random.default_rng(10_000)
    acts = FiniteActionSet([ActionPoint((), 0), ActionPoint((), 1)])
    store = BoundStore(2, 0, lipschitz=4.0, actions=acts, scan_threshold=16)
    for _ in range(2000):
        lo = rng.uniform(0, 0.5)
        p = (StatePoint(tuple(rng.uniform(0, 1, 2))), acts.actions[int(rng.integers(2))])
        store.record_update(p, lo, lo + rng.uniform(0, 0.5))
    for _ in range(10_000):
        p = (StatePoint(tuple(rng.uniform(0, 1, 2))), acts.actions[int(rng.integers(2))])
        assert store.bounds_at(p) == pytest.approx(store.bounds_at(p, use_index=False), abs=1e-12)


# ---------------------------------------------------------------------------
# persistence on a converged store


def test_gravity_warm_start(gravity_run, tmp_path):
    model, r = gravity_run
    path = os.path.join(tmp_path, "gravity-store.tsv")
    fmt.save_snapshot(path, r.store, model)
    again = solve_brtdp(model, SolverConfig(epsilon=0.05, seed=8), store=fmt.load_snapshot(path, model))
    assert again.outcome == "bounds" and again.steps <= again.config.probe_every
    assert again.gap < 0.05
