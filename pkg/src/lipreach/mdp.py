"""Metric-space MDP abstraction: points, metrics, shapes, kernels, models.

States and actions are points made of real coordinates plus an optional
discrete tag.  The state metric is Euclidean on the coordinates plus the
discrete metric (distance 1) on tags; the pair metric is the sum of the state
and action metrics.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class UsageError(ValueError):
    """Raised on invalid arguments or inputs that violate an operation's preconditions."""


NO_TAG = -1

INSIDE = 1
OUTSIDE = 0
PARTIAL = 2


@dataclass(frozen=True)
class StatePoint:
    coords: tuple[float, ...] = ()
    discrete_tag: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class ActionPoint:
    coords: tuple[float, ...] = ()
    discrete_tag: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def _tag_distance(t1, t2) -> float:
    return 0.0 if t1 == t2 else 1.0


def _coord_distance(c1: tuple, c2: tuple) -> float:
    if len(c1) != len(c2):
        raise UsageError(f"dimension mismatch: {len(c1)} vs {len(c2)}")
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(c1, c2)))


def dist_state(s1: StatePoint, s2: StatePoint) -> float:
    """Euclidean distance on coordinates plus the discrete metric on tags."""
    return _coord_distance(s1.coords, s2.coords) + _tag_distance(s1.discrete_tag, s2.discrete_tag)


def dist_action(a1: ActionPoint, a2: ActionPoint) -> float:
    return _coord_distance(a1.coords, a2.coords) + _tag_distance(a1.discrete_tag, a2.discrete_tag)


def dist_pair(p1: tuple[StatePoint, ActionPoint], p2: tuple[StatePoint, ActionPoint]) -> float:
    """Sum metric on state-action pairs."""
    return dist_state(p1[0], p2[0]) + dist_action(p1[1], p2[1])


# ---------------------------------------------------------------------------
# Shapes: target, sink and partition regions


class Shape:
    """A decidable subset of the state space.

    Continuous shapes only contain untagged states; tag sets only contain
    tagged states.
    """

    def contains_coords(self, coords: np.ndarray) -> np.ndarray:
        """Membership for untagged states given as an (m, d) coordinate array."""
        return np.zeros(len(coords), dtype=bool)

    def contains_tag(self, tag: int) -> bool:
        return False

    def contains_point(self, coords: tuple) -> bool:
        """Membership of one untagged state; shapes override this for speed."""
        return bool(self.contains_coords(np.asarray([coords], dtype=float).reshape(1, -1))[0])

    def contains(self, s: StatePoint) -> bool:
        if s.discrete_tag is not None:
            return self.contains_tag(s.discrete_tag)
        return self.contains_point(s.coords)

    def classify_boxes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Classify closed coordinate boxes as INSIDE, OUTSIDE or PARTIAL."""
        return np.full(len(lo), OUTSIDE, dtype=np.int8)

    def describe(self) -> dict:
        raise NotImplementedError


class EmptyShape(Shape):
    def contains_point(self, coords):
        return False

    def describe(self) -> dict:
        return {"kind": "empty"}


@dataclass(eq=False)
class BoxShape(Shape):
    """Closed axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self._bounds = list(zip(self.lower.tolist(), self.upper.tolist()))

    def contains_point(self, coords):
        return len(coords) == len(self._bounds) and all(lo <= x <= hi for x, (lo, hi) in zip(coords, self._bounds))

    def contains_coords(self, coords):
        coords = np.asarray(coords, dtype=float)
        return np.all((coords >= self.lower) & (coords <= self.upper), axis=1)

    def classify_boxes(self, lo, hi):
        inside = np.all((lo >= self.lower) & (hi <= self.upper), axis=1)
        disjoint = np.any((hi < self.lower) | (lo > self.upper), axis=1)
        out = np.full(len(lo), PARTIAL, dtype=np.int8)
        out[inside] = INSIDE
        out[disjoint] = OUTSIDE
        return out

    def describe(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(eq=False)
class BallShape(Shape):
    """Open Euclidean ball {x : |x - center| < radius}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.radius = float(self.radius)
        self._center = self.center.tolist()

    def contains_point(self, coords):
        return math.hypot(*(x - c for x, c in zip(coords, self._center))) < self.radius

    def contains_coords(self, coords):
        d = np.linalg.norm(np.asarray(coords, dtype=float) - self.center, axis=1)
        return d < self.radius

    def classify_boxes(self, lo, hi):
        nearest = np.clip(self.center, lo, hi)
        dmin = np.linalg.norm(nearest - self.center, axis=1)
        far = np.maximum(np.abs(lo - self.center), np.abs(hi - self.center))
        dmax = np.linalg.norm(far, axis=1)
        out = np.full(len(lo), PARTIAL, dtype=np.int8)
        out[dmax < self.radius] = INSIDE
        out[dmin >= self.radius] = OUTSIDE
        return out

    def describe(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(eq=False)
class TagShape(Shape):
    tags: frozenset

    def __post_init__(self):
        self.tags = frozenset(int(t) for t in self.tags)

    def contains_tag(self, tag):
        return tag in self.tags

    def describe(self):
        return {"kind": "tags", "tags": sorted(self.tags)}


@dataclass(eq=False)
class UnionShape(Shape):
    parts: tuple

    def contains_coords(self, coords):
        out = np.zeros(len(coords), dtype=bool)
        for p in self.parts:
            out |= p.contains_coords(coords)
        return out

    def contains_point(self, coords):
        return any(p.contains_point(coords) for p in self.parts)

    def contains_tag(self, tag):
        return any(p.contains_tag(tag) for p in self.parts)

    def classify_boxes(self, lo, hi):
        out = np.full(len(lo), OUTSIDE, dtype=np.int8)
        for p in self.parts:
            c = p.classify_boxes(lo, hi)
            out = np.where(c == INSIDE, INSIDE, np.where((c == PARTIAL) & (out != INSIDE), PARTIAL, out))
        return out.astype(np.int8)

    def describe(self):
        return {"kind": "union", "parts": [p.describe() for p in self.parts]}


def union(*shapes: Shape) -> Shape:
    parts = []
    for s in shapes:
        if isinstance(s, EmptyShape):
            continue
        parts.extend(s.parts if isinstance(s, UnionShape) else [s])
    if not parts:
        return EmptyShape()
    if len(parts) == 1:
        return parts[0]
    return UnionShape(tuple(parts))


# ---------------------------------------------------------------------------
# Action sets


class ActionSet:
    finite: bool = False

    def contains(self, a: ActionPoint) -> bool:
        raise NotImplementedError

    def net(self, spacing: float) -> list[ActionPoint]:
        """Finite subset such that every member lies within `spacing` of a returned point."""
        raise NotImplementedError


class FiniteActionSet(ActionSet):
    finite = True

    def __init__(self, actions: Sequence[ActionPoint], names: Sequence[str] | None = None):
        if not actions:
            raise UsageError("action set must be non-empty")
        self.actions = tuple(actions)
        self.names = tuple(names) if names is not None else tuple(_default_action_name(a) for a in self.actions)
        self._members = set(self.actions)

    def contains(self, a):
        return a in self._members

    def net(self, spacing):
        return list(self.actions)

    def name_of(self, a: ActionPoint) -> str:
        return self.names[self.actions.index(a)]

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)


def _default_action_name(a: ActionPoint) -> str:
    if a.discrete_tag is not None and not a.coords:
        return f"a{a.discrete_tag}"
    return "(" + ",".join(f"{c:g}" for c in a.coords) + ")"


class BoxActionSet(ActionSet):
    """Compact box of real action coordinates (untagged)."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise UsageError("invalid action box")

    def contains(self, a):
        if a.discrete_tag is not None or len(a.coords) != len(self.lower):
            return False
        x = np.asarray(a.coords)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def center(self) -> ActionPoint:
        return ActionPoint(tuple((self.lower + self.upper) / 2))

    def net(self, spacing):
        if spacing <= 0:
            raise UsageError("net spacing must be positive")
        d = len(self.lower)
        edges = self.upper - self.lower
        # cells with half-diagonal <= spacing; their centers form the net
        per_dim = np.maximum(1, np.ceil(edges * math.sqrt(d) / (2 * spacing))).astype(int)
        axes = [self.lower[k] + (np.arange(per_dim[k]) + 0.5) * edges[k] / per_dim[k] for k in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return [ActionPoint(tuple(row)) for row in mesh]

    def net_size(self, spacing) -> int:
        d = len(self.lower)
        edges = self.upper - self.lower
        per_dim = np.maximum(1, np.ceil(edges * math.sqrt(d) / (2 * spacing)))
        return int(np.prod(per_dim))


# ---------------------------------------------------------------------------
# Transition kernels


class Kernel:
    def sample(self, rng: np.random.Generator) -> StatePoint:
        raise NotImplementedError

    def atoms(self, weight: float = 1.0) -> list:
        """Flatten into weighted atoms: ('point', w, StatePoint) or ('box', w, lo, hi)."""
        raise NotImplementedError


class DiscreteKernel(Kernel):
    def __init__(self, points: Sequence[StatePoint], probs: Sequence[float]):
        probs = np.asarray(probs, dtype=float)
        if len(points) == 0 or len(points) != len(probs):
            raise UsageError("discrete kernel needs matching non-empty points and probabilities")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise UsageError(f"discrete probabilities must be nonnegative and sum to 1 (sum={probs.sum()!r})")
        self.points = tuple(points)
        self.probs = probs
        self._cum = np.cumsum(probs)

    def sample(self, rng):
        i = int(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right"))
        return self.points[min(i, len(self.points) - 1)]

    def atoms(self, weight=1.0):
        return [("point", weight * p, s) for s, p in zip(self.points, self.probs) if p > 0]

    def __repr__(self):
        return f"DiscreteKernel({list(zip(self.points, self.probs.tolist()))})"


def dirac(s: StatePoint) -> DiscreteKernel:
    return DiscreteKernel([s], [1.0])


class UniformBoxKernel(Kernel):
    """Uniform distribution over a box of untagged states."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or not np.all(self.lower < self.upper):
            raise UsageError("uniform box must be non-empty")

    def sample(self, rng):
        return StatePoint(tuple(rng.uniform(self.lower, self.upper)))

    def atoms(self, weight=1.0):
        return [("box", weight, self.lower, self.upper)]

    def __repr__(self):
        return f"UniformBoxKernel({self.lower.tolist()}, {self.upper.tolist()})"


class MixtureKernel(Kernel):
    def __init__(self, weights: Sequence[float], components: Sequence[Kernel]):
        weights = np.asarray(weights, dtype=float)
        if len(weights) == 0 or len(weights) != len(components):
            raise UsageError("mixture needs matching non-empty weights and components")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise UsageError("mixture weights must be nonnegative and sum to 1")
        self.weights = weights
        self.components = tuple(components)
        self._cum = np.cumsum(weights)

    def sample(self, rng):
        i = int(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right"))
        return self.components[min(i, len(self.components) - 1)].sample(rng)

    def atoms(self, weight=1.0):
        out = []
        for w, k in zip(self.weights, self.components):
            if w > 0:
                out.extend(k.atoms(weight * w))
        return out

    def __repr__(self):
        return f"MixtureKernel({self.weights.tolist()}, {list(self.components)})"


def mixture(parts: Iterable[tuple[float, Kernel]]) -> Kernel:
    parts = [(w, k) for w, k in parts if w > 0]
    if len(parts) == 1:
        return parts[0][1]
    total = sum(w for w, _ in parts)
    return MixtureKernel([w / total for w, _ in parts], [k for _, k in parts])


def folded_uniform(center, halfwidth, lower, upper) -> Kernel:
    """Uniform box around `center`, reflected back into [lower, upper] at the walls.

    Reflection is applied per coordinate; the result is a mixture of up to 2^d
    uniform boxes.  Requires the center inside the box and halfwidth at most
    half the box edge.
    """
    center = [float(c) for c in np.asarray(center, dtype=float).reshape(-1)]
    hw = np.asarray(halfwidth, dtype=float).reshape(-1).tolist()
    if len(hw) == 1:
        hw = hw * len(center)
    lower = np.asarray(lower, dtype=float).reshape(-1).tolist()
    upper = np.asarray(upper, dtype=float).reshape(-1).tolist()
    per_dim = []
    for k in range(len(center)):
        a, b = center[k] - hw[k], center[k] + hw[k]
        width = b - a
        pieces = []
        lo_in, hi_in = max(a, lower[k]), min(b, upper[k])
        pieces.append(((hi_in - lo_in) / width, lo_in, hi_in))
        if a < lower[k]:
            pieces.append(((lower[k] - a) / width, lower[k], 2 * lower[k] - a))
        if b > upper[k]:
            pieces.append(((b - upper[k]) / width, 2 * upper[k] - b, upper[k]))
        per_dim.append([p for p in pieces if p[2] > p[1] and p[0] > 0])
    parts = []
    for combo in _product(per_dim):
        w = math.prod(p[0] for p in combo)
        parts.append((w, UniformBoxKernel([p[1] for p in combo], [p[2] for p in combo])))
    total = sum(w for w, _ in parts)
    return mixture([(w / total, k) for w, k in parts])


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


# ---------------------------------------------------------------------------
# Partition and model


@dataclass
class Region:
    """A cell of a state-space partition.

    `shape` None marks the catch-all region (at most one, listed last).  A
    region with `fixed_value` has a known value (1 for target, 0 for sink) and
    needs no extrapolation.
    """

    name: str
    shape: Shape | None
    lipschitz_state: float | None = None
    lipschitz_pair: float | None = None
    fixed_value: float | None = None


class Partition:
    def __init__(self, regions: Sequence[Region]):
        self.regions = list(regions)
        rest = [i for i, r in enumerate(self.regions) if r.shape is None]
        if len(rest) > 1 or (rest and rest[0] != len(self.regions) - 1):
            raise UsageError("at most one catch-all region, and it must be last")

    def __len__(self):
        return len(self.regions)

    def region_of(self, s: StatePoint) -> int:
        for i, r in enumerate(self.regions):
            if r.shape is None or r.shape.contains(s):
                return i
        raise UsageError(f"state {s} lies in no partition region")

    def regions_of_coords(self, coords: np.ndarray) -> np.ndarray:
        out = np.full(len(coords), -1, dtype=np.int64)
        for i, r in enumerate(self.regions):
            free = out < 0
            if r.shape is None:
                out[free] = i
            else:
                hit = r.shape.contains_coords(coords) & free
                out[hit] = i
        if np.any(out < 0):
            raise UsageError("some states lie in no partition region")
        return out

    def classify_boxes(self, lo, hi) -> np.ndarray:
        """(m, n_regions) array of INSIDE/OUTSIDE/PARTIAL per region for boxes of untagged states."""
        m = len(lo)
        out = np.zeros((m, len(self.regions)), dtype=np.int8)
        covered = np.zeros(m, dtype=bool)  # fully covered by an earlier region
        touched = np.zeros(m, dtype=bool)
        for i, r in enumerate(self.regions):
            if r.shape is None:
                c = np.where(covered, OUTSIDE, np.where(touched, PARTIAL, INSIDE))
            else:
                c = r.shape.classify_boxes(lo, hi)
                # earlier regions take precedence
                c = np.where(covered, OUTSIDE, np.where((c == INSIDE) & touched, PARTIAL, c))
            out[:, i] = c
            covered |= c == INSIDE
            touched |= c != OUTSIDE
        return out

    def describe(self):
        return [
            {
                "name": r.name,
                "shape": None if r.shape is None else r.shape.describe(),
                "lipschitz_state": r.lipschitz_state,
                "lipschitz_pair": r.lipschitz_pair,
                "fixed_value": r.fixed_value,
            }
            for r in self.regions
        ]


class MdpModel:
    """Bundle of action sets, kernels, target/sink predicates and Lipschitz constants.

    Args:
        name: catalog or file name.
        state_lower, state_upper: compact box for untagged state coordinates
            (empty for purely discrete models).
        actions: an ActionSet shared by all states, or a callable StatePoint -> ActionSet.
        kernel: callable (StatePoint, ActionPoint) -> Kernel.
        target, sink: disjoint shapes.
        lipschitz_state, lipschitz_pair: declared constants C_S and C_x.
        initial_state: s0.
        discrete_states: tags of the discrete states of the model.
        continuous: whether untagged states inside the box belong to S.
        partition: optional Partition with local constants.
        params: constructor parameters, recorded in the fingerprint.
        notes: derivation note for the declared constants.
    """

    def __init__(
        self,
        name: str,
        state_lower,
        state_upper,
        actions,
        kernel: Callable[[StatePoint, ActionPoint], Kernel],
        target: Shape,
        sink: Shape,
        lipschitz_state: float,
        lipschitz_pair: float,
        initial_state: StatePoint,
        discrete_states: Sequence[int] = (),
        continuous: bool = True,
        partition: Partition | None = None,
        params: dict | None = None,
        notes: str = "",
        sink_representative: StatePoint | None = None,
    ):
        self.name = name
        self.state_lower = np.asarray(state_lower, dtype=float).reshape(-1)
        self.state_upper = np.asarray(state_upper, dtype=float).reshape(-1)
        if self.state_lower.shape != self.state_upper.shape or np.any(self.state_lower > self.state_upper):
            raise UsageError("invalid state box")
        self.dim = len(self.state_lower)
        self._lower_list = self.state_lower.tolist()
        self._upper_list = self.state_upper.tolist()
        self.continuous = bool(continuous) and self.dim > 0
        self.discrete_states = tuple(int(t) for t in discrete_states)
        if isinstance(actions, ActionSet):
            self.constant_actions: ActionSet | None = actions
            self._actions_fn = lambda s, _a=actions: _a
        else:
            self.constant_actions = None
            self._actions_fn = actions
        self._kernel_fn = kernel
        self.target = target
        self.sink = sink
        if lipschitz_state < 0 or lipschitz_pair < 0:
            raise UsageError("Lipschitz constants must be nonnegative")
        self.lipschitz_state = float(lipschitz_state)
        self.lipschitz_pair = float(lipschitz_pair)
        self.partition = partition
        self.params = dict(params or {})
        self.notes = notes
        self.sink_representative = sink_representative
        self.check_state(initial_state)
        self.initial_state = initial_state
        self.action_dim = self._infer_action_dim()

    def _infer_action_dim(self) -> int:
        acts = self.actions_at(self.initial_state)
        if isinstance(acts, BoxActionSet):
            return len(acts.lower)
        return len(acts.actions[0].coords)

    # -- states ------------------------------------------------------------
    def check_state(self, s: StatePoint):
        if s.discrete_tag is not None:
            if s.discrete_tag not in self.discrete_states:
                raise UsageError(f"unknown discrete state tag {s.discrete_tag}")
            if len(s.coords) != self.dim:
                raise UsageError(f"state dimension {len(s.coords)} != {self.dim}")
            return
        if not self.continuous:
            raise UsageError("model has no continuous states")
        if len(s.coords) != self.dim:
            raise UsageError(f"state dimension {len(s.coords)} != {self.dim}")
        x = np.asarray(s.coords)
        if np.any(x < self.state_lower - 1e-12) or np.any(x > self.state_upper + 1e-12):
            raise UsageError(f"state {s.coords} outside the state box")

    def is_target(self, s: StatePoint) -> bool:
        return self.target.contains(s)

    def is_sink(self, s: StatePoint) -> bool:
        return self.sink.contains(s)

    def region_of(self, s: StatePoint) -> int:
        return -1 if self.partition is None else self.partition.region_of(s)

    def region_pair_constant(self, region: int) -> float:
        if region < 0 or self.partition is None:
            return self.lipschitz_pair
        c = self.partition.regions[region].lipschitz_pair
        return self.lipschitz_pair if c is None else c

    def region_state_constant(self, region: int) -> float:
        if region < 0 or self.partition is None:
            return self.lipschitz_state
        c = self.partition.regions[region].lipschitz_state
        return self.lipschitz_state if c is None else c

    def region_fixed_value(self, region: int) -> float | None:
        if region < 0 or self.partition is None:
            return None
        return self.partition.regions[region].fixed_value

    # -- actions and kernels ---------------------------------------------------
    def actions_at(self, s: StatePoint) -> ActionSet:
        return self._actions_fn(s)

    def action_names(self) -> list[str] | None:
        acts = self.constant_actions
        if isinstance(acts, FiniteActionSet):
            return list(acts.names)
        return None

    def kernel_at(self, s: StatePoint, a: ActionPoint) -> Kernel:
        if not self.actions_at(s).contains(a):
            raise UsageError(f"action {a} not available in state {s}")
        k = self._kernel_fn(s, a)
        self._check_kernel(k)
        return k

    def _check_kernel(self, k: Kernel):
        lower = self._lower_list
        upper = self._upper_list
        for atom in k.atoms():
            if atom[0] == "box":
                lo, hi = atom[2].tolist(), atom[3].tolist()
                if (
                    not self.continuous
                    or len(lo) != self.dim
                    or any(x < b - 1e-9 for x, b in zip(lo, lower))
                    or any(x > b + 1e-9 for x, b in zip(hi, upper))
                ):
                    raise UsageError(f"uniform box {lo}..{hi} leaves the state box")

    def sample_successor(self, s: StatePoint, a: ActionPoint, rng: np.random.Generator) -> StatePoint:
        return self.kernel_at(s, a).sample(rng)

    # -- identity ---------------------------------------------------------------
    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "state_lower": self.state_lower.tolist(),
            "state_upper": self.state_upper.tolist(),
            "continuous": self.continuous,
            "discrete_states": list(self.discrete_states),
            "target": self.target.describe(),
            "sink": self.sink.describe(),
            "lipschitz_state": self.lipschitz_state,
            "lipschitz_pair": self.lipschitz_pair,
            "initial_state": [list(self.initial_state.coords), self.initial_state.discrete_tag],
            "partition": None if self.partition is None else self.partition.describe(),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:32]

    def __repr__(self):
        return f"MdpModel({self.name!r}, dim={self.dim})"


# ---------------------------------------------------------------------------
# Transformations and checks

DISCOUNT_SINK_TAG = 1_000_000_007


def discount_transform(model: MdpModel, gamma: float) -> MdpModel:
    """Turn discounting into reachability: each step survives with probability gamma.

    Every non-target kernel becomes gamma * original + (1 - gamma) * Dirac(sink
    representative).  A fresh absorbing discrete sink state is synthesized
    when the model has no sink representative.
    """
    if not (0.0 < gamma <= 1.0):
        raise UsageError("gamma must lie in (0, 1]")
    if gamma == 1.0:
        return model
    rep = model.sink_representative
    discrete = list(model.discrete_states)
    sink = model.sink
    if rep is None:
        rep = StatePoint(tuple(model.state_lower), DISCOUNT_SINK_TAG)
        discrete.append(DISCOUNT_SINK_TAG)
        sink = union(model.sink, TagShape(frozenset([DISCOUNT_SINK_TAG])))

    base_actions = model._actions_fn
    base_kernel = model._kernel_fn
    canonical = _canonical_action(model)

    def actions(s):
        if s == rep and rep.discrete_tag == DISCOUNT_SINK_TAG:
            return canonical
        return base_actions(s)

    def kernel(s, a):
        if s == rep and rep.discrete_tag == DISCOUNT_SINK_TAG:
            return dirac(rep)
        k = base_kernel(s, a)
        if model.target.contains(s):
            return k
        return mixture([(gamma, k), (1.0 - gamma, dirac(rep))])

    partition = model.partition
    if partition is not None and rep.discrete_tag == DISCOUNT_SINK_TAG:
        regions = [Region("discount-sink", TagShape(frozenset([DISCOUNT_SINK_TAG])), fixed_value=0.0)]
        partition = Partition(regions + partition.regions)

    return MdpModel(
        name=f"{model.name}+discount",
        state_lower=model.state_lower,
        state_upper=model.state_upper,
        actions=model.constant_actions if model.constant_actions is not None else actions,
        kernel=kernel,
        target=model.target,
        sink=sink,
        lipschitz_state=model.lipschitz_state,
        lipschitz_pair=model.lipschitz_pair,
        initial_state=model.initial_state,
        discrete_states=discrete,
        continuous=model.continuous,
        partition=partition,
        params={**model.params, "base": model.fingerprint(), "gamma": gamma},
        notes=model.notes,
        sink_representative=rep,
    )


def _canonical_action(model: MdpModel) -> ActionSet:
    acts = model.actions_at(model.initial_state)
    if isinstance(acts, FiniteActionSet):
        return FiniteActionSet(list(acts.actions), list(acts.names))
    return acts


def sample_state(model: MdpModel, rng: np.random.Generator) -> StatePoint:
    """Uniform draw from the continuous box, or from the discrete states for purely discrete models."""
    if model.continuous:
        return StatePoint(tuple(rng.uniform(model.state_lower, model.state_upper)))
    tag = model.discrete_states[int(rng.integers(len(model.discrete_states)))]
    return StatePoint(tuple(model.state_lower), tag)


def sample_action(actions: ActionSet, rng: np.random.Generator) -> ActionPoint:
    if isinstance(actions, FiniteActionSet):
        return actions.actions[int(rng.integers(len(actions)))]
    return ActionPoint(tuple(rng.uniform(actions.lower, actions.upper)))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_model(model: MdpModel, samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Dry-run checks on sampled states: metric axioms, predicate disjointness, kernel validity."""
    rng = np.random.default_rng(seed)
    report = ValidationReport()
    states = [sample_state(model, rng) for _ in range(samples)]
    states += [StatePoint(tuple(model.state_lower), t) for t in model.discrete_states]
    for s in states:
        if model.is_target(s) and model.is_sink(s):
            report.errors.append(f"state {s} is both target and sink")
            break
    for _ in range(min(samples, 1000)):
        a, b, c = (states[int(i)] for i in rng.integers(len(states), size=3))
        dab, dba = dist_state(a, b), dist_state(b, a)
        if dab != dba or dab < 0:
            report.errors.append("state metric not symmetric/nonnegative")
            break
        if dist_state(a, c) > dab + dist_state(b, c) + 1e-12:
            report.errors.append("state metric violates the triangle inequality")
            break
    for s in states[: min(len(states), 200)]:
        if model.is_target(s) or model.is_sink(s):
            continue
        acts = model.actions_at(s)
        chosen = acts.net(0.5) if isinstance(acts, BoxActionSet) else list(acts)
        for a in chosen[:8]:
            try:
                model.kernel_at(s, a)
            except UsageError as exc:
                report.errors.append(f"kernel at {s}, {a}: {exc}")
                return report
    if model.lipschitz_pair < model.lipschitz_state:
        report.warnings.append("pair constant below state constant; state-level bounds use the pair constant")
    return report
