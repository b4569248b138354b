from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipreach import io as fmt
from lipreach.mdp import ActionPoint, StatePoint, UsageError
from lipreach.models import random_finite, random_finite_mdp
from lipreach.oracle import exact_value_iteration
from lipreach.solvers import IterationTrace, SolverConfig, solve_brtdp

MODEL_TEXT = """\
lipreach-model 1.0
name = drift-1d
state_lower = [-1]
state_upper = [1]
initial = [0]
lipschitz_state = 4
lipschitz_pair = 4
target = box([0.95], [1])
sink = box([-1], [-0.95])

# drift with a risky jump
[action left]
kernel = folded(s - 0.05, 0.02)

[action boost]
kernel = mix(0.2, dirac([-1]), 0.8, folded(s + 0.1, 0.04))
"""


def test_parse_model_file():
    m = fmt.parse_model_text(MODEL_TEXT)
    assert m.name == "drift-1d"
    assert m.action_names() == ["left", "boost"]
    assert m.is_target(StatePoint((0.97,))) and m.is_sink(StatePoint((-0.97,)))
    boost = m.constant_actions.actions[1]
    atoms = m.kernel_at(StatePoint((0.0,)), boost).atoms()
    assert sum(w for _, w, *_ in atoms) == pytest.approx(1.0)
    assert atoms[0][0] == "point" and atoms[0][1] == pytest.approx(0.2)


def test_model_file_with_regions():
    text = MODEL_TEXT + "\n[region goal]\nshape = box([0.95], [1])\nfixed = 1\n\n[region rest]\nshape = rest\n"
    m = fmt.parse_model_text(text)
    assert len(m.partition) == 2
    assert m.region_fixed_value(0) == 1.0


@pytest.mark.parametrize(
    "edit, line, col",
    [
        (("kernel = folded(s - 0.05, 0.02)", "kernel = fold(s, 0.02)"), 13, 10),
        (("lipschitz_pair = 4", "lipschitz_pairs = 4"), 7, 1),
        (("initial = [0]", "initial = [0]\ninitial = [0.1]"), 6, 1),
        (("[action left]", "[actoin left]"), 12, 1),
        (("kernel = folded(s - 0.05, 0.02)", "kernel = folded(s - , 0.02)"), 13, 10),
    ],
)
def test_parse_errors_carry_positions(edit, line, col):
    with pytest.raises(fmt.ParseError) as info:
        fmt.parse_model_text(MODEL_TEXT.replace(*edit))
    assert info.value.line == line
    assert info.value.col >= col


def test_expressions_cannot_escape():
    bad = MODEL_TEXT.replace("folded(s - 0.05, 0.02)", "__import__('os').system('true')")
    with pytest.raises(fmt.ParseError):
        fmt.parse_model_text(bad)
    bad = MODEL_TEXT.replace("folded(s - 0.05, 0.02)", "s.__class__")
    with pytest.raises(fmt.ParseError):
        fmt.parse_model_text(bad)


def test_newer_major_version_rejected():
    with pytest.raises(fmt.ParseError):
        fmt.parse_model_text(MODEL_TEXT.replace("lipreach-model 1.0", "lipreach-model 2.0"))
    fmt.parse_model_text(MODEL_TEXT.replace("lipreach-model 1.0", "lipreach-model 1.7"))
    with pytest.raises(fmt.FormatError):
        fmt.parse_trace("# lipreach-trace 9.0\n# meta {}\nstep\n")


@pytest.mark.parametrize("seed", range(100))
def test_finite_table_roundtrip(seed):
    m = random_finite_mdp(seed, n_states=int(3 + seed % 9), n_actions=int(1 + seed % 4))
    text = fmt.format_finite(m)
    back = fmt.parse_finite_text(text)
    assert fmt.format_finite(back) == text
    assert np.array_equal(back.probs, m.probs) and np.array_equal(back.cols, m.cols)
    assert np.array_equal(back.target, m.target) and back.initial == m.initial


def test_finite_table_errors():
    good = "lipreach-finite 1.0\nstates 2\ninitial 0\ntarget 1\nsink\n0 go 1:1\n1 stay 1:1\n"
    assert fmt.parse_finite_text(good).n_states == 2
    with pytest.raises(fmt.ParseError) as info:
        fmt.parse_finite_text(good.replace("0 go 1:1", "0 go 1:0.9"))
    assert info.value.line == 6
    with pytest.raises(fmt.ParseError) as info:
        fmt.parse_finite_text(good.replace("0 go 1:1", "0 go 1=1"))
    assert (info.value.line, info.value.col) == (6, 6)
    with pytest.raises(fmt.ParseError):
        fmt.parse_finite_text(good.replace("1 stay 1:1\n", ""))
    with pytest.raises(fmt.ParseError):
        fmt.parse_finite_text(good.replace("0 go 1:1", "0 go 5:1"))


points = st.one_of(
    st.builds(lambda xs: StatePoint(tuple(xs)), st.lists(st.floats(-1, 1), min_size=1, max_size=2)),
    st.builds(lambda t: StatePoint((0.0,), t), st.integers(0, 10**9)),
)
actions = st.one_of(
    st.builds(lambda t: ActionPoint((), t), st.integers(0, 50)),
    st.builds(lambda xs: ActionPoint(tuple(xs)), st.lists(st.floats(0, 1), min_size=1, max_size=2)),
)
unit = st.floats(0, 1)
rows = st.builds(
    IterationTrace,
    st.integers(0, 10**7),
    st.one_of(st.none(), points),
    st.one_of(st.none(), actions),
    st.sampled_from(["start", "backprop", "target-hit", "sink-hit"]),
    unit,
    unit,
    st.integers(0, 10**6),
    st.floats(0, 1),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(rows, max_size=20), st.integers(0, 2**31))
def test_trace_roundtrip(trace, seed):
    meta = {"seed": seed, "config": SolverConfig(seed=seed).as_dict()}
    text = fmt.format_trace(trace, meta)
    meta2, back = fmt.parse_trace(text)
    assert back == trace
    assert meta2 == meta
    assert fmt.format_trace(back, meta2) == text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(points, unit, unit), max_size=30))
def test_curve_roundtrip(items):
    pts = [p for p, _, _ in items]
    lo = [a for _, a, _ in items]
    hi = [b for _, _, b in items]
    meta, p2, l2, h2 = fmt.parse_curve(fmt.format_curve(pts, lo, hi, {"seed": 1}))
    assert (p2, l2, h2) == (pts, lo, hi) and meta == {"seed": 1}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(points, st.lists(st.sampled_from(["north", "east", "left"]), max_size=3)), max_size=30))
def test_action_map_roundtrip(items):
    pts = [p for p, _ in items]
    names = [n for _, n in items]
    _, p2, n2 = fmt.parse_action_map(fmt.format_action_map(pts, names, {}))
    assert p2 == pts and n2 == names


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text("abcdefgh_", min_size=1), st.one_of(st.floats(0, 1), st.integers(), st.text("xyz"))))
def test_summary_roundtrip(items):
    _, back = fmt.parse_summary(fmt.format_summary(items, {"seed": 0}))
    assert back == items


@pytest.fixture(scope="module")
def solved_finite():
    m = random_finite(11)
    r = solve_brtdp(m, SolverConfig(seed=11))
    return m, r


def test_snapshot_roundtrip_answers_identically(solved_finite):
    m, r = solved_finite
    text = fmt.format_snapshot(r.store, m)
    restored = fmt.load_snapshot(text, m)
    assert fmt.format_snapshot(restored, m) == text
    rng = np.random.default_rng(0)
    acts = list(m.constant_actions.actions) if m.constant_actions else None
    for _ in range(4000):
        s = StatePoint(tuple(m.state_lower), int(rng.choice(m.discrete_states)))
        for a in acts or m.actions_at(s).actions:
            assert restored.bounds_at((s, a)) == r.store.bounds_at((s, a))


def test_snapshot_integrity(solved_finite):
    m, r = solved_finite
    text = fmt.format_snapshot(r.store, m)
    last = text.rstrip("\n").rsplit("\n", 1)
    tampered = last[0] + "\n" + last[1].replace("\t", "\t9", 1) + "\n"
    with pytest.raises(fmt.IntegrityError):
        fmt.load_snapshot(tampered, m)
    with pytest.raises(fmt.IntegrityError):
        fmt.load_snapshot(text, random_finite(12))


def test_warm_start_finishes_at_first_probe(solved_finite, tmp_path):
    m, r = solved_finite
    path = os.path.join(tmp_path, "store.tsv")
    fmt.save_snapshot(path, r.store, m)
    again = solve_brtdp(m, SolverConfig(seed=99), store=fmt.load_snapshot(path, m))
    assert again.outcome == "bounds" and again.steps <= again.config.probe_every
    v = exact_value_iteration(random_finite_mdp(11)).lower[0]
    assert again.lower - 1e-9 <= v <= again.upper + 1e-9


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = os.path.join(tmp_path, "x.txt")
    fmt.atomic_write(path, "one")
    fmt.atomic_write(path, "two")
    assert open(path).read() == "two"
    assert os.listdir(tmp_path) == ["x.txt"]


def test_config_from_dict():
    c = fmt.config_from_dict({"mode": "vi-lower", "xi": 0.3})
    assert c.mode == "vi-lower" and c.xi == 0.3
    with pytest.raises(UsageError):
        fmt.config_from_dict({"epsilon": 0.1, "colour": "red"})
