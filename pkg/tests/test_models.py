from __future__ import annotations

import copy

import numpy as np
import pytest

from lipreach.mdp import Partition, Region, StatePoint
from lipreach.models import (
    CATALOG,
    MINUS_TAG,
    PLUS_TAG,
    frequency_chain,
    gravity_1d,
    navigation_2d,
    random_finite_mdp,
)
from lipreach.oracle import frequency_value
from lipreach.solvers import SolverConfig, solve_brtdp


def action(model, name):
    acts = model.constant_actions
    return acts.actions[list(acts.names).index(name)]


@pytest.mark.parametrize("x", [-0.9, -0.5, 0.0, 0.5, 0.9])
def test_emergency_explodes_with_probability_one_fifth(x):
    g = gravity_1d()
    s = StatePoint((x,))
    atoms = g.kernel_at(s, action(g, "emergency")).atoms()
    sink_mass = 0.0
    for kind, w, *rest in atoms:
        if kind == "point":
            sink_mass += w * g.is_sink(rest[0])
        else:
            lo, hi = float(rest[0][0]), float(rest[1][0])
            overlap = max(0.0, min(hi, -0.95) - lo)
            sink_mass += w * overlap / (hi - lo)
    assert sink_mass >= 0.2 - 1e-12


def test_gravity_regions():
    g = gravity_1d()
    assert g.is_target(StatePoint((0.97,))) and g.is_sink(StatePoint((-0.97,)))
    assert not g.is_target(StatePoint((0.0,))) and not g.is_sink(StatePoint((0.0,)))
    assert set(g.constant_actions.names) >= {"left", "right", "emergency"}


def test_navigation_disks():
    n = navigation_2d()
    assert n.is_target(StatePoint((0.99, 0.99)))
    assert not n.is_target(StatePoint((0.95, 0.95)))
    assert n.is_sink(StatePoint((0.52, 0.5)))
    assert not n.is_sink(StatePoint((0.56, 0.5)))
    assert set(n.constant_actions.names) == {"north", "east"}


def test_frequency_chain_structure():
    m = frequency_chain(4)
    a = m.constant_actions.actions[0]
    k = m.kernel_at(StatePoint((0.8,)), a)
    assert k.atoms()[0][2].coords[0] == pytest.approx(0.55)
    k = m.kernel_at(StatePoint((0.125,)), a)
    assert k.atoms()[0][2].discrete_tag == PLUS_TAG
    k = m.kernel_at(StatePoint((0.25,)), a)
    assert all(p.discrete_tag == MINUS_TAG for _, _, p in k.atoms())
    assert m.lipschitz_state == pytest.approx(8.0)


def test_frequency_peaks_and_troughs():
    for s in (0.125, 0.375, 0.625, 0.875):
        assert frequency_value(s, 4) == pytest.approx(1.0)
    for s in (0.25, 0.5, 0.75, 1.0):
        assert frequency_value(s, 4) == pytest.approx(0.0, abs=1e-12)


def test_bad_constant_is_declared():
    m = frequency_chain(4, bad_constant=1.0)
    assert m.lipschitz_state == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_random_rows_sum_to_one(seed):
    m = random_finite_mdp(seed)
    sums = np.add.reduceat(m.probs, m.row_ptr[:-1])
    assert np.allclose(sums, 1.0, atol=1e-12)
    assert m.target.any() and m.sink.any()


def test_catalog_names():
    assert {"gravity-1d", "navigation-2d", "frequency-chain", "random-finite"} <= set(CATALOG)


def test_declared_constants_have_notes():
    for build in (gravity_1d, navigation_2d):
        assert build().notes


def doubled(model):
    """Copy of a model with every declared constant doubled."""
    m = copy.copy(model)
    m.lipschitz_state *= 2
    m.lipschitz_pair *= 2
    regions = [
        Region(
            r.name,
            r.shape,
            None if r.lipschitz_state is None else 2 * r.lipschitz_state,
            None if r.lipschitz_pair is None else 2 * r.lipschitz_pair,
            r.fixed_value,
        )
        for r in model.partition.regions
    ]
    m.partition = Partition(regions)
    return m


@pytest.mark.parametrize("make, steps", [(gravity_1d, 3000), (navigation_2d, 1500)])
def test_doubling_the_constant_never_tightens(make, steps):
    # the random sampler ignores the bounds, so both runs update the same pairs
    model = make()
    config = SolverConfig(sampler="random", seed=5, max_steps=steps, epsilon=1e-3)
    base = solve_brtdp(model, config)
    loose = solve_brtdp(doubled(model), config)
    assert loose.lower <= base.lower + 1e-12 and loose.upper >= base.upper - 1e-12
