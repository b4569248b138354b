from __future__ import annotations

import json
import os

import pytest

from lipreach import io as fmt
from lipreach.cli import EXIT_BUDGET, EXIT_CROSSING, EXIT_OK, EXIT_PARSE, EXIT_STAGNATION, EXIT_USAGE, main

CHAIN = """\
lipreach-finite 1.0
states 3
initial 0
target 1
sink 2
0 go 1:0.5 2:0.5
1 stay 1:1
2 stay 2:1
"""

LOOP = """\
lipreach-finite 1.0
states 3
initial 0
target 2
0 spin 1:1
1 spin 0:1
2 stay 2:1
"""


@pytest.fixture
def chain_file(tmp_path):
    path = os.path.join(tmp_path, "chain2.mdp")
    with open(path, "w") as fh:
        fh.write(CHAIN)
    return path


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_vi_lower_on_chain_file(chain_file, tmp_path, capsys):
    out = os.path.join(tmp_path, "run")
    code = main(["run", "--model", f"finite-from-file:{chain_file}", "--mode", "vi-lower", "--xi", "0.4", "--out", out])
    assert code == EXIT_OK
    assert last_json(capsys)["outcome"] == "yes"
    for name in ("trace.tsv", "curve.tsv", "actions.tsv", "summary.tsv", "store.tsv", "timing.tsv"):
        assert os.path.exists(os.path.join(out, name))


def test_outputs_are_reproducible_and_parse(tmp_path, capsys):
    args = ["run", "--model", "random-finite", "--param", "seed=4", "--seed", "5", "--epsilon", "0.02"]
    a, b = os.path.join(tmp_path, "a"), os.path.join(tmp_path, "b")
    assert main(args + ["--out", a]) == EXIT_OK
    assert main(args + ["--out", b]) == EXIT_OK
    for name in ("trace.tsv", "curve.tsv", "actions.tsv", "summary.tsv", "store.tsv"):
        assert open(os.path.join(a, name), "rb").read() == open(os.path.join(b, name), "rb").read()
    text = open(os.path.join(a, "trace.tsv")).read()
    meta, rows = fmt.parse_trace(text)
    assert meta["seed"] == 5 and meta["config"]["epsilon"] == 0.02
    assert fmt.format_trace(rows, meta) == text
    _, summary = fmt.parse_summary(open(os.path.join(a, "summary.tsv")).read())
    assert summary["outcome"] == "bounds" and summary["gap"] < 0.02
    _, timing = fmt.parse_summary(open(os.path.join(a, "timing.tsv")).read(), "lipreach-timing")
    assert timing["wall_time"] >= 0


def test_bad_constant_reports_crossing(tmp_path, capsys):
    out = os.path.join(tmp_path, "bad")
    code = main(["run", "--model", "frequency-chain", "--k", "4", "--bad-constant", "1", "--out", out])
    assert code == EXIT_CROSSING
    assert last_json(capsys)["error"] == "bound-crossing"
    _, summary = fmt.parse_summary(open(os.path.join(out, "summary.tsv")).read())
    assert summary["outcome"] == "bound-crossing"


def test_budget_exit_code(chain_file, tmp_path, capsys):
    args = ["run", "--model", f"finite-from-file:{chain_file}", "--mode", "vi-lower", "--xi", "0.6"]
    code = main(args + ["--max-steps", "500", "--out", os.path.join(tmp_path, "o")])
    assert code == EXIT_BUDGET
    assert last_json(capsys)["outcome"] == "budget-exhausted"


def test_stagnation_exit_code(tmp_path, capsys):
    path = os.path.join(tmp_path, "loop.mdp")
    with open(path, "w") as fh:
        fh.write(LOOP)
    cfg = os.path.join(tmp_path, "cfg.json")
    with open(cfg, "w") as fh:
        json.dump({"stagnation_window": 1000}, fh)
    code = main(["run", "--model", f"finite-from-file:{path}", "--config", cfg, "--out", os.path.join(tmp_path, "o")])
    assert code == EXIT_STAGNATION
    assert last_json(capsys)["error"] == "stagnation"


def test_step_bounded_and_reach_avoid_modes(tmp_path, capsys):
    base = ["run", "--model", "retry-loop", "--out"]
    assert main(base + [os.path.join(tmp_path, "s"), "--mode", "step-bounded", "--horizon", "4"]) == EXIT_OK
    assert 0 <= last_json(capsys)["lower"] <= 1
    code = main(base + [os.path.join(tmp_path, "r"), "--mode", "reach-avoid"])
    assert code == EXIT_USAGE
    capsys.readouterr()


def test_usage_errors(capsys):
    assert main(["run", "--model", "no-such-model"]) == EXIT_USAGE
    assert last_json(capsys)["error"] == "usage"
    assert main(["run"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


@pytest.mark.parametrize("name", ["gravity-1d", "navigation-2d", "frequency-chain", "two-state-chain"])
def test_validate_catalog(name, capsys):
    assert main(["validate", "--model", name]) == EXIT_OK
    assert last_json(capsys)["ok"]


def test_validate_reports_parse_position(tmp_path, capsys):
    path = os.path.join(tmp_path, "bad.mdp")
    with open(path, "w") as fh:
        fh.write(CHAIN.replace("0 go 1:0.5 2:0.5", "0 go 1:0.5 2:0.4"))
    assert main(["validate", "--model", f"finite-from-file:{path}"]) == EXIT_PARSE
    rec = last_json(capsys)
    assert rec["error"] == "parse" and rec["line"] == 6


def test_validate_warns_about_absorption(tmp_path, capsys):
    path = os.path.join(tmp_path, "loop.mdp")
    with open(path, "w") as fh:
        fh.write(LOOP)
    assert main(["validate", "--model", f"finite-from-file:{path}"]) == EXIT_OK
    rec = last_json(capsys)
    assert any("absorption" in w for w in rec["warnings"])
