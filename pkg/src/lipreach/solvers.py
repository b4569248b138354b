"""Anytime reachability solvers built on the bound store.

* solve_vi_lower: lower bounds only; answers "yes" once L(s0) exceeds a threshold.
* solve_brtdp: lower and upper bounds, stops when their gap at s0 drops below epsilon.
* solve_step_bounded: n-step reachability with one store per remaining-step count.
* solve_reach_avoid: reachability while avoiding a region, via an extra sink.

Successor expectations go through a backend.  ExactBackend evaluates the
store envelopes with the certified approximation routines and works for any
model.  CacheBackend uses an EnvelopeCache and is selected automatically for
one- and two-dimensional models with finite action sets.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .approx import ApproxRequest, CellIntegrand, approx_expectation
from .cache import EnvelopeCache, cache_supported
from .mdp import (
    INSIDE,
    OUTSIDE,
    BoxActionSet,
    FiniteActionSet,
    MdpModel,
    Partition,
    Region,
    Shape,
    StatePoint,
    UsageError,
    union,
)
from .samplers import (
    GlobalRandomSampler,
    GuidedPathSampler,
    MixtureSampler,
    Sampler,
    StepPathSampler,
    make_sampler,
)
from .store import BoundCrossingError, BoundStore

MODES = ("vi-lower", "brtdp", "step-bounded", "reach-avoid")
CROSS_TOL = 1e-9


class StagnationError(RuntimeError):
    """The bounds at s0 stopped moving; usually the model is not absorbing."""

    def __init__(self, lower: float, upper: float, steps: int, window: int):
        self.lower = lower
        self.upper = upper
        self.steps = steps
        self.window = window
        self.trace: list = []
        super().__init__(f"bounds [{lower:.6g}, {upper:.6g}] unchanged for {window} steps (step {steps})")


@dataclass
class SolverConfig:
    mode: str = "brtdp"
    epsilon: float = 0.01
    xi: float = 0.5
    horizon: int = 0
    sampler: str = "mixture"
    nu: float = 0.5
    seed: int = 0
    max_steps: int = 10_000_000
    max_seconds: float | None = None
    probe_every: int = 32
    trace_every: int = 1
    max_path_len: int = 256
    guidance_tolerance: float | None = None
    precision_floor: float | None = None
    stagnation_window: int | None = 2_000_000
    backend: str = "auto"
    cache_resolution: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if not self.epsilon > 0:
            raise UsageError("epsilon must be positive")
        if not 0.0 <= self.xi < 1.0:
            raise UsageError("xi must lie in [0, 1)")
        if self.horizon < 0:
            raise UsageError("horizon must be nonnegative")
        if self.probe_every < 1 or self.trace_every < 1 or self.max_steps < 0:
            raise UsageError("probe_every, trace_every must be positive and max_steps nonnegative")
        if self.backend not in ("auto", "exact", "cache"):
            raise UsageError(f"unknown backend {self.backend!r}")

    @property
    def floor(self) -> float:
        if self.precision_floor is not None:
            return self.precision_floor
        if self.mode == "vi-lower":
            return min(0.01, max(1e-4, (1.0 - self.xi) / 16))
        return self.epsilon / 8

    def precision(self, t: int) -> float:
        """Precision(t) = max(1/t, floor)."""
        return max(1.0 / max(t, 1), self.floor)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class IterationTrace:
    step: int
    state: StatePoint | None
    action: object
    event: str
    lower: float
    upper: float
    store_size: int
    slack: float


@dataclass
class SolverResult:
    outcome: str  # yes | bounds | budget-exhausted
    lower: float
    upper: float
    steps: int
    wall_time: float
    store: BoundStore | None
    trace: list = field(default_factory=list)
    config: SolverConfig | None = None
    backend: str = ""
    stores: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper - self.lower


# ---------------------------------------------------------------------------
# value sources


def fixed_value(model: MdpModel, s: StatePoint) -> float | None:
    """Known value of s: 1 on the target, 0 on the sink, or a fixed partition value."""
    if model.is_target(s):
        return 1.0
    if model.is_sink(s):
        return 0.0
    return model.region_fixed_value(model.region_of(s))


class _Labels:
    """Fixed-value shapes and Lipschitz regions of a model, for classifying boxes."""

    def __init__(self, model: MdpModel):
        self.fixed: list[tuple[Shape, float]] = [(model.target, 1.0), (model.sink, 0.0)]
        self.free: list[tuple[Shape | None, int]] = []
        if model.partition is None:
            self.free.append((None, -1))
        else:
            for i, r in enumerate(model.partition.regions):
                if r.fixed_value is not None:
                    self.fixed.append((r.shape, float(r.fixed_value)))
                else:
                    self.free.append((r.shape, i))

    def classify(self, lo: np.ndarray, hi: np.ndarray):
        """Yields (kind, value_or_region, hit mask) for every label meeting some box."""
        m = len(lo)
        covered = np.zeros(m, dtype=bool)
        out = []
        for shape, v in self.fixed:
            c = shape.classify_boxes(lo, hi)
            c = np.where(covered, OUTSIDE, c)
            if np.any(c != OUTSIDE):
                out.append(("fixed", v, c != OUTSIDE))
            covered |= c == INSIDE
        for shape, region in self.free:
            if shape is None:
                c = np.where(covered, OUTSIDE, INSIDE)
            else:
                c = np.where(covered, OUTSIDE, shape.classify_boxes(lo, hi))
            if np.any(c != OUTSIDE):
                out.append(("free", region, c != OUTSIDE))
            covered |= c == INSIDE
        return out


class StoreValues:
    """Certified pointwise and cellwise bounds of the store envelopes."""

    def __init__(self, model: MdpModel, store: BoundStore):
        self.model = model
        self.store = store
        self.labels = _Labels(model) if model.continuous else None

    def point(self, s: StatePoint, precision: float) -> tuple[float, float]:
        v = fixed_value(self.model, s)
        if v is not None:
            return v, v
        acts = self.model.actions_at(s)
        return (
            self.store.lower_state(s, precision, acts),
            self.store.upper_state(s, precision, acts),
        )

    def _action_list(self, region: int, precision: float):
        acts = self.model.constant_actions
        if acts is None:
            raise UsageError("cell integration needs a state-independent action set")
        if isinstance(acts, FiniteActionSet):
            return list(acts.actions), 0.0
        c = self.store.constant_for(region)
        if c == 0:
            return [acts.center()], 0.0
        spacing = precision / (2 * c)
        return acts.net(spacing), c * spacing

    def cells(self, lo: np.ndarray, hi: np.ndarray, precision: float) -> tuple[np.ndarray, np.ndarray]:
        m = len(lo)
        low = np.full(m, np.inf)
        high = np.full(m, -np.inf)
        centers = (lo + hi) / 2
        radius = np.sqrt(np.sum(((hi - lo) / 2) ** 2, axis=1))
        for kind, v, hit in self.labels.classify(lo, hi):
            if kind == "fixed":
                low[hit] = np.minimum(low[hit], v)
                high[hit] = np.maximum(high[hit], v)
                continue
            acts, extra = self._action_list(v, precision)
            c = self.store.constant_for(v)
            el, eu = self.store.state_envelopes(centers[hit], v, acts)
            low[hit] = np.minimum(low[hit], np.maximum(0.0, el - c * radius[hit]))
            high[hit] = np.maximum(high[hit], np.minimum(1.0, eu + extra + c * radius[hit]))
        return low, high


class IndicatorValues:
    """Exact values of the zero-step problem: 1 on the target, 0 elsewhere."""

    def __init__(self, model: MdpModel):
        self.model = model

    def point(self, s, precision):
        v = 1.0 if self.model.is_target(s) else 0.0
        return v, v

    def cells(self, lo, hi, precision):
        c = self.model.target.classify_boxes(lo, hi)
        return (c == INSIDE).astype(float), (c != OUTSIDE).astype(float)


class _Integrand(CellIntegrand):
    def __init__(self, values, precision: float, direction: str):
        self.values = values
        self.precision = precision
        self.side = 0 if direction == "under" else 1

    def point(self, s):
        return self.values.point(s, self.precision)[self.side]

    def cells(self, lo, hi, direction):
        return self.values.cells(lo, hi, self.precision)[self.side]


def expectation_bounds(model: MdpModel, kernel, values, precision: float, lipschitz: float, upper=True):
    lo = approx_expectation(kernel, _Integrand(values, precision, "under"), ApproxRequest("under", precision, lipschitz))
    if not upper:
        return lo, 1.0
    hi = approx_expectation(kernel, _Integrand(values, precision, "over"), ApproxRequest("over", precision, lipschitz))
    return lo, hi


# ---------------------------------------------------------------------------
# backends


class ExactBackend:
    name = "exact"

    def __init__(self, model: MdpModel, store: BoundStore, config: SolverConfig, successor_values=None):
        self.model = model
        self.store = store
        self.config = config
        self.values = successor_values if successor_values is not None else StoreValues(model, store)
        self.updates = 0

    def _lipschitz(self) -> float:
        if self.model.partition is None:
            return self.model.lipschitz_state
        return max(self.model.region_state_constant(i) for i in range(len(self.model.partition)))

    def update(self, s, a, t: int, upper: bool = True):
        p = self.config.precision(t)
        kernel = self.model.kernel_at(s, a)
        lo, hi = expectation_bounds(self.model, kernel, self.values, p, self._lipschitz(), upper)
        lo = min(1.0, max(0.0, lo))
        hi = min(1.0, max(0.0, hi))
        cur_lo, cur_hi = self.store.bounds_at((s, a))
        if lo > cur_hi + CROSS_TOL or hi < cur_lo - CROSS_TOL:
            raise BoundCrossingError((s, a), max(lo, cur_lo), min(hi, cur_hi), "update")
        # keep the stored values at least as tight as the current envelope at this pair
        self.store.record_update((s, a), max(lo, cur_lo), max(min(hi, cur_hi), max(lo, cur_lo)), t)
        self.updates += 1

    def terminal(self, s, value: float, t: int):
        acts = self.model.actions_at(s)
        cand = list(acts.actions) if isinstance(acts, FiniteActionSet) else [acts.center()]
        # records in a fixed region of the same value only meet records of that region
        checked = self.model.region_fixed_value(self.model.region_of(s)) != value
        for a in cand:
            if not checked:
                self.store.record_update((s, a), value, value, t)
                continue
            cur_lo, cur_hi = self.store.bounds_at((s, a))
            if value > cur_hi + CROSS_TOL or value < cur_lo - CROSS_TOL:
                raise BoundCrossingError((s, a), max(value, cur_lo), min(value, cur_hi), "terminal")
            self.store.record_update((s, a), value, value, t)

    def greedy(self, s, tolerance):
        if fixed_value(self.model, s) is not None:
            acts = self.model.actions_at(s)
            return list(acts.actions) if isinstance(acts, FiniteActionSet) else [acts.center()]
        return self.store.greedy_actions(s, tolerance, self.model.actions_at(s))

    def probe(self, s, precision):
        return probe_bounds(self.store, self.model, s, precision)


class CacheBackend(ExactBackend):
    name = "cache"

    def __init__(self, model, store, config):
        super().__init__(model, store, config)
        self.cache = EnvelopeCache(model, store, config.cache_resolution)
        self.actions = list(model.constant_actions.actions)
        for i in range(len(store)):
            rec = store.record(i)
            if self._free(rec.state):
                self.cache.apply_record(rec.state, rec.action, rec.lower, rec.upper)

    def _free(self, s):
        return fixed_value(self.model, s) is None

    def _expect(self, kernel):
        lo = hi = 0.0
        for atom in kernel.atoms():
            if atom[0] == "point":
                w, x = atom[1], atom[2]
                pl, pu = self.values.point(x, self.config.floor)
                lo += w * pl
                hi += w * pu
            else:
                w, blo, bhi = atom[1], atom[2], atom[3]
                el, eu = self.cache.box_expectation(blo, bhi)
                lo += w * el
                hi += w * eu
        return min(1.0, max(0.0, lo)), min(1.0, max(0.0, hi))

    def update(self, s, a, t, upper=True):
        lo, hi = self._expect(self.model.kernel_at(s, a))
        if not upper:
            hi = 1.0
        if self._free(s):
            bound = float(self.cache.MU[self.cache.action_index[a]][self.cache.cell_of(s.coords)])
            if lo > bound + CROSS_TOL:
                raise BoundCrossingError((s, a), lo, bound, "update")
        i = self.store.record_update((s, a), lo, hi, t)
        if self._free(s):
            vals = self.store._vals.view[i]
            self.cache.apply_record(s, a, float(vals[0]), float(vals[1]))
        self.updates += 1

    def greedy(self, s, tolerance):
        if not self._free(s):
            return list(self.actions)
        ub = self.cache.action_upper(s)
        best = float(np.max(ub))
        return [a for a, u in zip(self.actions, ub) if u >= best - tolerance]


def make_backend(model: MdpModel, store: BoundStore, config: SolverConfig):
    kind = config.backend
    if kind == "auto":
        kind = "cache" if cache_supported(model) else "exact"
    if kind == "cache":
        return CacheBackend(model, store, config)
    return ExactBackend(model, store, config)


# ---------------------------------------------------------------------------
# probes and loop


def probe_bounds(store: BoundStore, model: MdpModel, s: StatePoint, precision: float) -> tuple[float, float, float]:
    """(lower, upper, slack) at s; slack is the approximation error allowed in each bound."""
    if not precision > 0:
        raise UsageError("precision must be positive")
    v = fixed_value(model, s)
    if v is not None:
        return v, v, 0.0
    acts = model.actions_at(s)
    lo = store.lower_state(s, precision, acts)
    hi = store.upper_state(s, precision, acts)
    slack = 0.0 if isinstance(acts, FiniteActionSet) else precision
    return lo, hi, slack


class _Loop:
    """Shared bookkeeping: probes, trace rows, budgets and stagnation."""

    def __init__(self, config: SolverConfig, sampler: Sampler, stagnation: bool):
        self.config = config
        self.sampler = sampler
        self.stagnation = stagnation and config.stagnation_window is not None
        self.trace: list[IterationTrace] = []
        self.start = time.perf_counter()
        self.probes = 0
        self.last = None
        self.last_change = 0

    def record(self, t, pair, event, lo, hi, size, slack, force=False):
        if force or self.probes % self.config.trace_every == 0:
            s, a = pair if pair is not None else (None, None)
            self.trace.append(IterationTrace(t, s, a, event, lo, hi, size, slack))
        self.probes += 1
        self.sampler.observe_gap(hi - lo)
        if self.last != (lo, hi):
            self.last = (lo, hi)
            self.last_change = t
        elif self.stagnation and t - self.last_change >= self.config.stagnation_window:
            err = StagnationError(lo, hi, t, self.config.stagnation_window)
            err.trace = self.trace
            raise err

    def out_of_budget(self, t) -> bool:
        if t >= self.config.max_steps:
            return True
        limit = self.config.max_seconds
        return limit is not None and time.perf_counter() - self.start > limit

    def elapsed(self):
        return time.perf_counter() - self.start


def _build_sampler(config: SolverConfig, guide) -> Sampler:
    return make_sampler(config.sampler, config.seed, config.nu, config.max_path_len, config.guidance_tolerance, guide)


def _attach(err, loop):
    if not getattr(err, "trace", None):
        err.trace = loop.trace
    return err


def _run(model: MdpModel, config: SolverConfig, lower_only: bool, store: BoundStore | None = None) -> SolverResult:
    store = store if store is not None else BoundStore.from_model(model)
    backend = make_backend(model, store, config)
    sampler = _build_sampler(config, backend.greedy)
    loop = _Loop(config, sampler, stagnation=not lower_only)
    s0 = model.initial_state
    t = 0
    pair, event = None, "start"
    try:
        while True:
            if t % config.probe_every == 0 or loop.out_of_budget(t):
                lo, hi, slack = backend.probe(s0, config.precision(t))
                if lower_only:
                    hi = 1.0 if fixed_value(model, s0) is None else hi
                done = lo > config.xi if lower_only else hi - lo < config.epsilon
                exhausted = loop.out_of_budget(t)
                loop.record(t, pair, event, lo, hi, len(store), slack, force=done or exhausted)
                if done or exhausted:
                    outcome = ("yes" if lower_only else "bounds") if done else "budget-exhausted"
                    return SolverResult(
                        outcome, lo, hi, t, loop.elapsed(), store, loop.trace, config, backend.name
                    )
            s, a = sampler.next_pair(model, store)
            t += 1
            pair = (s, a)
            if model.is_target(s):
                backend.terminal(s, 1.0, t)
                event = "target-hit"
            elif model.is_sink(s) and not lower_only:
                backend.terminal(s, 0.0, t)
                event = "sink-hit"
            else:
                backend.update(s, a, t, upper=not lower_only)
                event = "backprop"
    except (BoundCrossingError, StagnationError) as err:
        raise _attach(err, loop)


def solve_vi_lower(model: MdpModel, config: SolverConfig | None = None, store: BoundStore | None = None) -> SolverResult:
    """Lower-bound iteration; outcome "yes" certifies V(s0) > xi."""
    config = config or SolverConfig(mode="vi-lower")
    return _run(model, config, lower_only=True, store=store)


def solve_brtdp(model: MdpModel, config: SolverConfig | None = None, store: BoundStore | None = None) -> SolverResult:
    """Lower and upper bounds at s0 until their gap is below epsilon."""
    config = config or SolverConfig()
    return _run(model, config, lower_only=False, store=store)


# ---------------------------------------------------------------------------
# step-bounded reachability


def solve_step_bounded(model: MdpModel, horizon: int, config: SolverConfig | None = None) -> SolverResult:
    """Bounds on the probability of reaching the target within `horizon` steps.

    Store i holds records for i remaining steps; an update at level i
    integrates the level i-1 envelopes, and level 0 is the target indicator.
    Records never extrapolate across levels.  Sink states are treated like
    any other state.
    """
    config = config or SolverConfig(mode="step-bounded")
    if horizon < 0:
        raise UsageError("horizon must be nonnegative")
    s0 = model.initial_state
    if horizon == 0:
        v = 1.0 if model.is_target(s0) else 0.0
        row = IterationTrace(0, None, None, "start", v, v, 0, 0.0)
        return SolverResult("bounds", v, v, 0, 0.0, None, [row], config, "exact")

    def fresh():
        return BoundStore(model.dim, model.action_dim, model.lipschitz_pair, actions=model.constant_actions)

    stores = [fresh() for _ in range(horizon)]
    values = [IndicatorValues(model)] + [_TargetOnly(model, st) for st in stores[:-1]]
    backends = [ExactBackend(model, stores[i], config, values[i]) for i in range(horizon)]

    def guide(s, tol, level):
        if model.is_target(s):
            acts = model.actions_at(s)
            return list(acts.actions) if isinstance(acts, FiniteActionSet) else [acts.center()]
        return stores[level - 1].greedy_actions(s, tol, model.actions_at(s))

    sampler = StepPathSampler(horizon, config.seed, config.nu, guide, config.guidance_tolerance)
    loop = _Loop(config, sampler, stagnation=False)
    top = _TargetOnly(model, stores[-1])
    t = 0
    pair, event = None, "start"
    try:
        while True:
            if t % config.probe_every == 0 or loop.out_of_budget(t):
                p = config.precision(t)
                lo, hi = top.point(s0, p)
                slack = 0.0 if isinstance(model.actions_at(s0), FiniteActionSet) else p
                done = hi - lo < config.epsilon
                exhausted = loop.out_of_budget(t)
                loop.record(t, pair, event, lo, hi, sum(len(st) for st in stores), slack, force=done or exhausted)
                if done or exhausted:
                    return SolverResult(
                        "bounds" if done else "budget-exhausted",
                        lo, hi, t, loop.elapsed(), stores[-1], loop.trace, config, "exact", stores,
                    )
            s, a, level = sampler.next_triple(model)
            t += 1
            pair = (s, a)
            if model.is_target(s):
                backends[level - 1].terminal(s, 1.0, t)
                event = "target-hit"
            else:
                backends[level - 1].update(s, a, t)
                event = "backprop"
    except BoundCrossingError as err:
        raise _attach(err, loop)


class _TargetOnly(StoreValues):
    """Store envelopes where only the target has a fixed value (no sink short-cut)."""

    def point(self, s, precision):
        if self.model.is_target(s):
            return 1.0, 1.0
        acts = self.model.actions_at(s)
        return self.store.lower_state(s, precision, acts), self.store.upper_state(s, precision, acts)

    def cells(self, lo, hi, precision):
        m = len(lo)
        low = np.full(m, np.inf)
        high = np.full(m, -np.inf)
        centers = (lo + hi) / 2
        radius = np.sqrt(np.sum(((hi - lo) / 2) ** 2, axis=1))
        c = self.model.target.classify_boxes(lo, hi)
        hit = c != OUTSIDE
        low[hit], high[hit] = 1.0, 1.0
        rest = c != INSIDE
        acts, extra = self._action_list(-1, precision)
        cst = self.store.lipschitz
        el, eu = self.store.state_envelopes(centers[rest], -1, acts)
        low[rest] = np.minimum(low[rest], np.maximum(0.0, el - cst * radius[rest]))
        high[rest] = np.maximum(high[rest], np.minimum(1.0, eu + extra + cst * radius[rest]))
        return low, high


# ---------------------------------------------------------------------------
# reach-avoid


def with_avoid(model: MdpModel, avoid: Shape) -> MdpModel:
    """Copy of `model` where `avoid` is merged into the sink and carved out as a fixed-0 region."""
    if model.partition is not None:
        regions = [Region("avoid", avoid, fixed_value=0.0)] + list(model.partition.regions)
    elif model.continuous:
        regions = [
            Region("target", model.target, fixed_value=1.0),
            Region("avoid", avoid, fixed_value=0.0),
            Region("sink", model.sink, fixed_value=0.0),
            Region("free", None, model.lipschitz_state, model.lipschitz_pair),
        ]
    else:
        regions = None
    return MdpModel(
        name=f"{model.name}+avoid",
        state_lower=model.state_lower,
        state_upper=model.state_upper,
        actions=model.constant_actions if model.constant_actions is not None else model._actions_fn,
        kernel=model._kernel_fn,
        target=model.target,
        sink=union(model.sink, avoid),
        lipschitz_state=model.lipschitz_state,
        lipschitz_pair=model.lipschitz_pair,
        initial_state=model.initial_state,
        discrete_states=model.discrete_states,
        continuous=model.continuous,
        partition=None if regions is None else Partition(regions),
        params={**model.params, "avoid": avoid.describe()},
        notes=model.notes,
        sink_representative=model.sink_representative,
    )


def solve_reach_avoid(model: MdpModel, avoid: Shape, config: SolverConfig | None = None) -> SolverResult:
    """Probability of reaching the target while never entering `avoid`."""
    if model.is_target(model.initial_state) and avoid.contains(model.initial_state):
        raise UsageError("the avoid region must be disjoint from the target")
    return solve_brtdp(with_avoid(model, avoid), config)
