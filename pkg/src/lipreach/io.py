"""File formats: model files, finite-MDP tables, TSV exports and store snapshots.

Every text format starts with a version line `<kind> <major>.<minor>`.
Readers reject files whose major version is newer than theirs.  All writes
go through a temporary file in the target directory followed by a rename.

Model file (`lipreach-model 1.0`)::

    lipreach-model 1.0
    name = drift-1d
    state_lower = [-1]
    state_upper = [1]
    initial = [0]
    lipschitz_state = 4
    lipschitz_pair = 4
    target = box([0.95], [1])
    sink = box([-1], [-0.95])

    [action left]
    kernel = folded(s - 0.05, 0.02)

    [action boost]
    kernel = mix(0.2, dirac([-1]), 0.8, uniform(s + 0.1, 0.04))

    [region free]
    shape = rest
    lipschitz_state = 4

Top-level keys: name, state_lower, state_upper, initial, lipschitz_state,
lipschitz_pair, target, sink, notes (optional).  Section `[action NAME]`
takes `kernel`; section `[region NAME]` takes `shape` (a shape or `rest`),
and optionally `lipschitz_state`, `lipschitz_pair`, `fixed`.  Kernel
expressions may use `s` (the state coordinates as an array), numbers, lists,
arithmetic, and the functions abs, sqrt, exp, sin, cos, min, max, clip,
norm.  Kernel forms: dirac(point), uniform(center, halfwidth),
folded(center, halfwidth) (center clipped into the state box),
discrete(p1, point1, ...), mix(w1, k1, ...).
Shapes: box(lo, hi), ball(center, radius), union(shape, ...), empty().

Finite table (`lipreach-finite 1.0`)::

    lipreach-finite 1.0
    states 3
    initial 0
    target 2
    sink 1
    0 go 1:0.5 2:0.5
    1 stay 1:1
    2 stay 2:1

Rows are `state action successor:probability ...`; action labels are mapped
to indices in order of first appearance.
"""
from __future__ import annotations

import ast
import hashlib
import io as _io
import json
import math
import os
import re
import tempfile

import numpy as np

from .mdp import (
    ActionPoint,
    BallShape,
    BoxShape,
    EmptyShape,
    FiniteActionSet,
    MdpModel,
    Partition,
    Region,
    StatePoint,
    UsageError,
    dirac,
    DiscreteKernel,
    folded_uniform,
    mixture,
    UniformBoxKernel,
    union,
)
from .oracle import FiniteMdp
from .store import BoundStore

FORMATS = {
    "lipreach-model": (1, 0),
    "lipreach-finite": (1, 0),
    "lipreach-trace": (1, 0),
    "lipreach-curve": (1, 0),
    "lipreach-actions": (1, 0),
    "lipreach-summary": (1, 0),
    "lipreach-timing": (1, 0),
    "lipreach-snapshot": (1, 0),
}


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}")


class FormatError(ValueError):
    """Wrong file kind or unsupported version."""


class IntegrityError(ValueError):
    """Checksum or fingerprint mismatch."""


def version_line(kind: str) -> str:
    major, minor = FORMATS[kind]
    return f"{kind} {major}.{minor}"


def check_version(line: str, kind: str):
    m = re.fullmatch(r"#?\s*(\S+)\s+(\d+)\.(\d+)\s*", line)
    if not m or m.group(1) != kind:
        raise FormatError(f"expected a {kind} header, got {line.strip()!r}")
    major = int(m.group(2))
    if major > FORMATS[kind][0]:
        raise FormatError(f"{kind} version {major}.{m.group(3)} is newer than supported {FORMATS[kind][0]}.x")


def atomic_write(path: str, data: bytes | str):
    if isinstance(data, str):
        data = data.encode()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# expressions


_FUNCS = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "min": np.minimum,
    "max": np.maximum,
    "clip": np.clip,
    "norm": lambda v: float(np.linalg.norm(v)),
}
_KERNELS = ("dirac", "uniform", "folded", "discrete", "mix")
_SHAPES = ("box", "ball", "union", "empty")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


class _Expr:
    """A whitelisted expression; evaluation binds the state coordinates to `s`."""

    def __init__(self, text: str, line: int, col: int, names=("s",), calls=()):
        self.text = text
        self.line = line
        self.col = col
        try:
            self.tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as e:
            raise ParseError(f"invalid expression: {e.msg}", line, col + (e.offset or 1) - 1) from None
        self.names = set(names)
        self.calls = set(_FUNCS) | set(calls)
        self._check(self.tree.body)

    def _err(self, node, msg):
        return ParseError(msg, self.line, self.col + getattr(node, "col_offset", 0))

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise self._err(node, f"unsupported constant {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.names and node.id != "pi":
                raise self._err(node, f"unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise self._err(node, "unsupported operator")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise self._err(node, "unsupported operator")
            self._check(node.operand)
        elif isinstance(node, (ast.List, ast.Tuple)):
            for e in node.elts:
                self._check(e)
        elif isinstance(node, ast.Subscript):
            self._check(node.value)
            self._check(node.slice)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in self.calls:
                raise self._err(node, f"unknown function {ast.unparse(node.func)!r}")
            if node.keywords:
                raise self._err(node, "keyword arguments are not supported")
            for a in node.args:
                self._check(a)
        else:
            raise self._err(node, f"unsupported syntax {type(node).__name__}")

    def eval(self, env: dict):
        return self._eval(self.tree.body, env)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return math.pi if node.id == "pi" else env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, (ast.List, ast.Tuple)):
            return np.array([self._eval(e, env) for e in node.elts], dtype=float).reshape(-1)
        if isinstance(node, ast.Subscript):
            return np.asarray(self._eval(node.value, env))[int(self._eval(node.slice, env))]
        name = node.func.id
        args = [self._eval(a, env) if not _is_form(a) else a for a in node.args]
        if name in _FUNCS:
            return _FUNCS[name](*args)
        return env["__forms__"](name, node, args, env)


def _is_form(node) -> bool:
    return isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _KERNELS + _SHAPES


def _vec(v, dim, where):
    arr = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if len(arr) == 1 and dim > 1:
        arr = np.repeat(arr, dim)
    if len(arr) != dim:
        raise where(f"expected {dim} coordinates, got {len(arr)}")
    return arr


class _KernelExpr(_Expr):
    def __init__(self, text, line, col, dim, lower, upper):
        super().__init__(text, line, col, calls=_KERNELS)
        self.dim = dim
        self.lower = lower
        self.upper = upper

    def build(self, x: np.ndarray):
        return self._eval(self.tree.body, {"s": x, "__forms__": self._form})

    def _form(self, name, node, args, env):
        def err(msg):
            return self._err(node, msg)

        def val(a):
            return self._eval(a, env) if isinstance(a, ast.AST) else a

        if name == "dirac":
            if len(args) != 1:
                raise err("dirac takes one point")
            return dirac(StatePoint(tuple(_vec(val(args[0]), self.dim, err).tolist())))
        if name in ("uniform", "folded"):
            if len(args) != 2:
                raise err(f"{name} takes a center and a halfwidth")
            c = _vec(val(args[0]), self.dim, err)
            hw = _vec(val(args[1]), self.dim, err)
            if name == "folded":
                # reflection needs the center inside the box and a halfwidth of at most half the edge
                c = np.clip(c, self.lower, self.upper)
                hw = np.minimum(hw, (self.upper - self.lower) / 2)
                return folded_uniform(c, hw, self.lower, self.upper)
            return UniformBoxKernel(c - hw, c + hw)
        if name == "discrete":
            if len(args) % 2 or not args:
                raise err("discrete takes probability, point pairs")
            probs = [float(val(args[i])) for i in range(0, len(args), 2)]
            pts = [StatePoint(tuple(_vec(val(args[i]), self.dim, err).tolist())) for i in range(1, len(args), 2)]
            return DiscreteKernel(pts, probs)
        if name == "mix":
            if len(args) % 2 or not args:
                raise err("mix takes weight, kernel pairs")
            parts = [(float(val(args[i])), val(args[i + 1])) for i in range(0, len(args), 2)]
            return mixture(parts)
        raise err(f"{name} is not a kernel")


class _ShapeExpr(_Expr):
    def __init__(self, text, line, col, dim):
        super().__init__(text, line, col, names=(), calls=_SHAPES)
        self.dim = dim

    def build(self):
        return self._eval(self.tree.body, {"__forms__": self._form})

    def _form(self, name, node, args, env):
        def err(msg):
            return self._err(node, msg)

        def val(a):
            return self._eval(a, env) if isinstance(a, ast.AST) else a

        if name == "box":
            if len(args) != 2:
                raise err("box takes lower and upper corners")
            return BoxShape(_vec(val(args[0]), self.dim, err), _vec(val(args[1]), self.dim, err))
        if name == "ball":
            if len(args) != 2:
                raise err("ball takes a center and a radius")
            return BallShape(_vec(val(args[0]), self.dim, err), float(val(args[1])))
        if name == "union":
            return union(*[val(a) for a in args])
        if name == "empty":
            return EmptyShape()
        raise err(f"{name} is not a shape")


# ---------------------------------------------------------------------------
# model files

_TOP_KEYS = {
    "name",
    "state_lower",
    "state_upper",
    "initial",
    "lipschitz_state",
    "lipschitz_pair",
    "target",
    "sink",
    "notes",
}
_REQUIRED = _TOP_KEYS - {"notes", "name"}
_SECTION_KEYS = {"action": {"kernel"}, "region": {"shape", "lipschitz_state", "lipschitz_pair", "fixed"}}


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        yield no, raw, line


def parse_model_text(text: str, source: str = "<model>") -> MdpModel:
    lines = list(_lines(text))
    first = next(((no, ln) for no, _, ln in lines if ln.strip()), None)
    if first is None:
        raise ParseError("empty model file", 1, 1)
    try:
        check_version(first[1], "lipreach-model")
    except FormatError as e:
        raise ParseError(str(e), first[0], 1) from None

    top: dict[str, tuple[str, int, int]] = {}
    sections: list[tuple[str, str, int, dict]] = []
    current = None
    for no, raw, line in lines:
        if no <= first[0] or not line.strip():
            continue
        stripped = line.strip()
        col0 = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*(action|region)\s+([A-Za-z0-9_.\-]+)\s*\]", stripped)
            if not m:
                raise ParseError(f"malformed section header {stripped!r}", no, col0)
            current = (m.group(1), m.group(2), no, {})
            if any(s[0] == current[0] and s[1] == current[1] for s in sections):
                raise ParseError(f"duplicate section [{m.group(1)} {m.group(2)}]", no, col0)
            sections.append(current)
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", no, col0)
        key, value = line.split("=", 1)
        key = key.strip()
        vcol = line.index("=") + 2 + (len(value) - len(value.lstrip()))
        allowed = _TOP_KEYS if current is None else _SECTION_KEYS[current[0]]
        if key not in allowed:
            where = "top level" if current is None else f"[{current[0]} {current[1]}]"
            raise ParseError(f"unknown key {key!r} in {where}", no, col0)
        target = top if current is None else current[3]
        if key in target:
            raise ParseError(f"duplicate key {key!r}", no, col0)
        target[key] = (value.strip(), no, vcol)

    for key in sorted(_REQUIRED):
        if key not in top:
            raise ParseError(f"missing required key {key!r}", first[0], 1)

    def number_list(key):
        v, no, col = top[key]
        e = _Expr(v, no, col, names=())
        try:
            return np.atleast_1d(np.asarray(e.eval({}), dtype=float)).reshape(-1)
        except Exception as exc:
            raise ParseError(f"{key}: {exc}", no, col) from None

    def number(key, table):
        v, no, col = table[key]
        e = _Expr(v, no, col, names=())
        out = e.eval({})
        if np.ndim(out) != 0:
            raise ParseError(f"{key} must be a number", no, col)
        return float(out)

    lower = number_list("state_lower")
    upper = number_list("state_upper")
    if len(lower) != len(upper) or np.any(lower >= upper):
        raise ParseError("state_lower and state_upper must describe a non-empty box", top["state_upper"][1], 1)
    dim = len(lower)
    initial = number_list("initial")
    if len(initial) != dim:
        raise ParseError(f"initial must have {dim} coordinates", top["initial"][1], top["initial"][2])

    def shape(entry):
        v, no, col = entry
        if v == "rest":
            return None
        try:
            return _ShapeExpr(v, no, col, dim).build()
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(str(exc), no, col) from None

    target = shape(top["target"])
    sink = shape(top["sink"])
    if target is None or sink is None:
        raise ParseError("target and sink need explicit shapes", top["target"][1], 1)

    actions = [s for s in sections if s[0] == "action"]
    if not actions:
        raise ParseError("at least one [action NAME] section is required", first[0], 1)
    kernels = []
    for _, name, no, table in actions:
        if "kernel" not in table:
            raise ParseError(f"[action {name}] needs a kernel", no, 1)
        v, kno, kcol = table["kernel"]
        kernels.append(_KernelExpr(v, kno, kcol, dim, lower, upper))

    regions = []
    for _, name, no, table in (s for s in sections if s[0] == "region"):
        if "shape" not in table:
            raise ParseError(f"[region {name}] needs a shape", no, 1)
        regions.append(
            Region(
                name,
                shape(table["shape"]),
                number("lipschitz_state", table) if "lipschitz_state" in table else None,
                number("lipschitz_pair", table) if "lipschitz_pair" in table else None,
                number("fixed", table) if "fixed" in table else None,
            )
        )
    try:
        partition = Partition(regions) if regions else None
    except UsageError as exc:
        raise ParseError(str(exc), sections[-1][2], 1) from None

    action_set = FiniteActionSet([ActionPoint((), i) for i in range(len(kernels))], [s[1] for s in actions])

    def kernel(s: StatePoint, a: ActionPoint):
        return kernels[a.discrete_tag].build(np.asarray(s.coords, dtype=float))

    name = top["name"][0] if "name" in top else os.path.basename(source)
    notes = top["notes"][0] if "notes" in top else ""
    model = MdpModel(
        name=name,
        state_lower=lower,
        state_upper=upper,
        actions=action_set,
        kernel=kernel,
        target=target,
        sink=sink,
        lipschitz_state=number("lipschitz_state", top),
        lipschitz_pair=number("lipschitz_pair", top),
        initial_state=StatePoint(tuple(initial.tolist())),
        partition=partition,
        params={"source": hashlib.sha256(text.encode()).hexdigest()[:16]},
        notes=notes,
    )
    # evaluate every kernel once at s0 so that malformed expressions fail at load time
    for (_, aname, _, _), k, a in zip(actions, kernels, action_set.actions):
        try:
            model.kernel_at(model.initial_state, a)
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(f"kernel of action {aname} at the initial state: {exc}", k.line, k.col) from None
    return model


def load_model_file(path: str) -> MdpModel:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if first.split()[:1] == ["lipreach-finite"]:
        from .models import finite_model

        return finite_model(parse_finite_text(text), name=os.path.basename(path))
    return parse_model_text(text, path)


# ---------------------------------------------------------------------------
# finite tables


def parse_finite_text(text: str) -> FiniteMdp:
    header = {}
    rows = []
    labels: dict[str, int] = {}
    seen = set()
    version_seen = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = line.split()
        col = len(line) - len(line.lstrip()) + 1
        if not version_seen:
            try:
                check_version(line, "lipreach-finite")
            except FormatError as e:
                raise ParseError(str(e), no, col) from None
            version_seen = True
            continue
        if toks[0] in ("states", "initial"):
            if len(toks) != 2 or not toks[1].isdigit():
                raise ParseError(f"{toks[0]} takes one nonnegative integer", no, col)
            if toks[0] in header:
                raise ParseError(f"duplicate {toks[0]}", no, col)
            header[toks[0]] = int(toks[1])
            continue
        if toks[0] in ("target", "sink"):
            if toks[0] in header:
                raise ParseError(f"duplicate {toks[0]}", no, col)
            try:
                header[toks[0]] = [int(t) for t in toks[1:]]
            except ValueError:
                raise ParseError(f"{toks[0]} takes state indices", no, col) from None
            continue
        if not toks[0].isdigit():
            raise ParseError(f"unknown directive {toks[0]!r}", no, col)
        if "states" not in header:
            raise ParseError("'states' must precede the rows", no, col)
        if len(toks) < 3:
            raise ParseError("a row needs a state, an action and at least one successor", no, col)
        s = int(toks[0])
        a = labels.setdefault(toks[1], len(labels))
        if (s, a) in seen:
            raise ParseError(f"duplicate row for state {s} action {toks[1]}", no, col)
        seen.add((s, a))
        dist: dict[int, float] = {}
        pos = line.index(toks[1], line.index(toks[0]) + len(toks[0])) + len(toks[1])
        for tok in toks[2:]:
            tcol = line.index(tok, pos) + 1
            pos = tcol - 1 + len(tok)
            m = re.fullmatch(r"(\d+):([0-9.eE+\-]+)", tok)
            if not m:
                raise ParseError(f"expected successor:probability, got {tok!r}", no, tcol)
            t, p = int(m.group(1)), float(m.group(2))
            if t >= header["states"]:
                raise ParseError(f"successor {t} out of range", no, tcol)
            if p < 0:
                raise ParseError("negative probability", no, tcol)
            dist[t] = dist.get(t, 0.0) + p
        if s >= header["states"]:
            raise ParseError(f"state {s} out of range", no, col)
        if abs(sum(dist.values()) - 1.0) > 1e-12:
            raise ParseError(f"probabilities of state {s} action {toks[1]} sum to {sum(dist.values())!r}", no, col)
        rows.append((s, a, dist))
    if not version_seen:
        raise ParseError("empty finite table", 1, 1)
    for key in ("states",):
        if key not in header:
            raise ParseError(f"missing {key!r}", 1, 1)
    n = header["states"]
    covered = {s for s, _, _ in rows}
    missing = sorted(set(range(n)) - covered)
    if missing:
        raise ParseError(f"state {missing[0]} has no rows", 1, 1)
    names = [None] * len(labels)
    for k, i in labels.items():
        names[i] = k
    try:
        return FiniteMdp.from_rows(
            n, rows, header.get("target", []), header.get("sink", []), header.get("initial", 0), action_names=names
        )
    except (ValueError, UsageError) as exc:
        raise ParseError(str(exc), 1, 1) from None


def format_finite(m: FiniteMdp) -> str:
    out = [version_line("lipreach-finite"), f"states {m.n_states}", f"initial {int(m.initial)}"]
    out.append("target " + " ".join(str(i) for i in np.nonzero(m.target)[0]))
    out.append("sink " + " ".join(str(i) for i in np.nonzero(m.sink)[0]))
    names = m.action_names or []
    for p in range(len(m.pair_state)):
        s, a = int(m.pair_state[p]), int(m.pair_action[p])
        label = names[a] if a < len(names) and names[a] else f"a{a}"
        lo, hi = m.row_ptr[p], m.row_ptr[p + 1]
        succ = " ".join(f"{int(t)}:{float(q)!r}" for t, q in zip(m.cols[lo:hi], m.probs[lo:hi]))
        out.append(f"{s} {label} {succ}")
    return "\n".join(out) + "\n"


def write_finite(path: str, m: FiniteMdp):
    atomic_write(path, format_finite(m))


# ---------------------------------------------------------------------------
# points


def format_point(p) -> str:
    """`x,y` for untagged points, `#t` or `x,y#t` for tagged ones, `-` for none."""
    if p is None:
        return "-"
    coords = ",".join(repr(float(c)) for c in p.coords)
    return coords if p.discrete_tag is None else f"{coords}#{p.discrete_tag}"


def parse_point(text: str, cls=StatePoint):
    if text == "-":
        return None
    coords, _, tag = text.partition("#")
    vals = tuple(float(c) for c in coords.split(",")) if coords else ()
    return cls(vals, int(tag) if tag else None)


# ---------------------------------------------------------------------------
# TSV exports


def _tsv(kind: str, meta: dict, columns: list[str], rows: list[list[str]]) -> str:
    buf = _io.StringIO()
    buf.write(f"# {version_line(kind)}\n")
    buf.write("# meta " + json.dumps(meta, sort_keys=True, default=str) + "\n")
    buf.write("\t".join(columns) + "\n")
    for r in rows:
        buf.write("\t".join(r) + "\n")
    return buf.getvalue()


def _read_tsv(text: str, kind: str):
    lines = text.splitlines()
    if len(lines) < 3:
        raise FormatError(f"truncated {kind} file")
    check_version(lines[0], kind)
    if not lines[1].startswith("# meta "):
        raise FormatError("missing meta line")
    meta = json.loads(lines[1][len("# meta ") :])
    columns = lines[2].split("\t")
    rows = [ln.split("\t") for ln in lines[3:] if ln]
    for r in rows:
        if len(r) != len(columns):
            raise FormatError(f"row has {len(r)} fields, expected {len(columns)}")
    return meta, columns, rows


TRACE_COLUMNS = ["step", "state", "action", "event", "lower", "upper", "store_size", "slack"]


def format_trace(rows, meta: dict) -> str:
    out = [
        [
            str(r.step),
            format_point(r.state),
            format_point(r.action),
            r.event,
            repr(float(r.lower)),
            repr(float(r.upper)),
            str(r.store_size),
            repr(float(r.slack)),
        ]
        for r in rows
    ]
    return _tsv("lipreach-trace", meta, TRACE_COLUMNS, out)


def parse_trace(text: str):
    from .solvers import IterationTrace

    meta, columns, rows = _read_tsv(text, "lipreach-trace")
    if columns != TRACE_COLUMNS:
        raise FormatError("unexpected trace columns")
    out = [
        IterationTrace(
            int(r[0]),
            parse_point(r[1]),
            parse_point(r[2], ActionPoint),
            r[3],
            float(r[4]),
            float(r[5]),
            int(r[6]),
            float(r[7]),
        )
        for r in rows
    ]
    return meta, out


def format_curve(points, lowers, uppers, meta: dict) -> str:
    rows = [[format_point(p), repr(float(lo)), repr(float(hi))] for p, lo, hi in zip(points, lowers, uppers)]
    return _tsv("lipreach-curve", meta, ["state", "lower", "upper"], rows)


def parse_curve(text: str):
    meta, _, rows = _read_tsv(text, "lipreach-curve")
    return meta, [parse_point(r[0]) for r in rows], [float(r[1]) for r in rows], [float(r[2]) for r in rows]


def format_action_map(points, action_sets, meta: dict) -> str:
    rows = [[format_point(p), "|".join(names)] for p, names in zip(points, action_sets)]
    return _tsv("lipreach-actions", meta, ["state", "greedy"], rows)


def parse_action_map(text: str):
    meta, _, rows = _read_tsv(text, "lipreach-actions")
    return meta, [parse_point(r[0]) for r in rows], [r[1].split("|") if r[1] else [] for r in rows]


def format_summary(items: dict, meta: dict, kind: str = "lipreach-summary") -> str:
    rows = [[k, json.dumps(items[k], sort_keys=True, default=str)] for k in items]
    return _tsv(kind, meta, ["key", "value"], rows)


def parse_summary(text: str, kind: str = "lipreach-summary"):
    meta, _, rows = _read_tsv(text, kind)
    return meta, {r[0]: json.loads(r[1]) for r in rows}


# ---------------------------------------------------------------------------
# store snapshots
#
# A snapshot is a flat record table: one record per line with columns
# s0..s{d-1}, state_tag, a0..a{k-1}, action_tag, lower, upper, region, step.
# Untagged points carry tag -1.  The meta line carries the model
# fingerprint, the declared constants and a sha256 of the record lines.


def snapshot_columns(state_dim: int, action_dim: int) -> list[str]:
    return (
        [f"s{i}" for i in range(state_dim)]
        + ["state_tag"]
        + [f"a{i}" for i in range(action_dim)]
        + ["action_tag", "lower", "upper", "region", "step"]
    )


def format_snapshot(store: BoundStore, model: MdpModel) -> str:
    cols = store.columns()
    rows = []
    for i in range(len(store)):
        rows.append(
            [repr(float(v)) for v in cols["state"][i]]
            + [str(int(cols["state_tag"][i]))]
            + [repr(float(v)) for v in cols["action"][i]]
            + [
                str(int(cols["action_tag"][i])),
                repr(float(cols["lower"][i])),
                repr(float(cols["upper"][i])),
                str(int(cols["region"][i])),
                str(int(cols["step"][i])),
            ]
        )
    body = "".join("\t".join(r) + "\n" for r in rows)
    meta = {
        "fingerprint": model.fingerprint(),
        "lipschitz_state": model.lipschitz_state,
        "lipschitz_pair": model.lipschitz_pair,
        "state_dim": store.state_dim,
        "action_dim": store.action_dim,
        "records": len(store),
        "sha256": hashlib.sha256(body.encode()).hexdigest(),
    }
    head = _tsv("lipreach-snapshot", meta, snapshot_columns(store.state_dim, store.action_dim), [])
    return head + body


def parse_snapshot(text: str) -> tuple[dict, dict]:
    """Checked parse: returns (meta, columns in BoundStore.columns layout)."""
    lines = text.splitlines(keepends=True)
    meta, columns, rows = _read_tsv(text, "lipreach-snapshot")
    body = "".join(lines[3:])
    if hashlib.sha256(body.encode()).hexdigest() != meta.get("sha256") or len(rows) != meta.get("records"):
        raise IntegrityError("snapshot checksum mismatch")
    d, k = int(meta["state_dim"]), int(meta["action_dim"])
    if columns != snapshot_columns(d, k):
        raise FormatError("unexpected snapshot columns")
    arr = np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(len(rows), d + k + 6)

    cols = {
        "state": arr[:, :d],
        "state_tag": arr[:, d].astype(np.int64),
        "action": arr[:, d + 1 : d + 1 + k],
        "action_tag": arr[:, d + 1 + k].astype(np.int64),
        "lower": arr[:, d + 2 + k],
        "upper": arr[:, d + 3 + k],
        "region": arr[:, d + 4 + k].astype(np.int64),
        "step": arr[:, d + 5 + k].astype(np.int64),
    }
    return meta, cols


def save_snapshot(path: str, store: BoundStore, model: MdpModel):
    atomic_write(path, format_snapshot(store, model))


def load_snapshot(text_or_path: str, model: MdpModel, store: BoundStore | None = None) -> BoundStore:
    """Restore records into a fresh store for `model`; the model fingerprint must match."""
    text = text_or_path
    if not text.startswith("#"):
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    meta, cols = parse_snapshot(text)
    if meta.get("fingerprint") != model.fingerprint():
        raise IntegrityError("snapshot belongs to a different model")
    store = store if store is not None else BoundStore.from_model(model)
    store.load_columns(cols)
    return store


# ---------------------------------------------------------------------------
# configuration


def config_from_dict(d: dict):
    """SolverConfig from a plain mapping; unknown keys are rejected."""
    from .solvers import SolverConfig

    fields = SolverConfig.__dataclass_fields__
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(unknown)}")
    return SolverConfig(**d)


def load_config(path: str):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(d, dict):
        raise ParseError("configuration must be a JSON object", 1, 1)
    return config_from_dict(d)
