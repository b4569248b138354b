"""Pair samplers: the strategies that pick the next state-action pair to update.

Every sampler exposes `next_pair(model, store)`.  The guided sampler also
accepts a `guide` callable (state, tolerance) -> candidate actions so that
solvers can steer it with whatever upper-bound source they maintain; the
default guide asks the store for its greedy actions.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .mdp import BoxActionSet, FiniteActionSet, MdpModel, StatePoint, UsageError, sample_action, sample_state
from .store import BoundStore

SAMPLER_KINDS = ("grid", "random", "guided", "mixture")
MIN_PATH_LEN = 256


def _rng(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key) if key else seed)


class Sampler:
    kind = ""

    def next_pair(self, model: MdpModel, store: BoundStore | None = None):
        raise NotImplementedError

    def observe_gap(self, gap: float):
        """Solvers report the current gap at s0 after each probe."""


class GridRefineSampler(Sampler):
    """Enumerates a grid of states times an action net, then halves the spacing and repeats.

    At level l the state grid has spacing (box edge) * 2^-l on every axis, box
    endpoints included.  Finite action sets are enumerated in full; box action
    sets use a net whose covering radius halves with each level.  Discrete
    state tags are enumerated at every level.
    """

    kind = "grid"

    def __init__(self, start_level: int = 0):
        self.level = start_level
        self._iter = None

    def _level_pairs(self, model: MdpModel):
        states = []
        if model.continuous:
            n = 2**self.level
            axes = [np.linspace(model.state_lower[k], model.state_upper[k], n + 1) for k in range(model.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
            states += [StatePoint(tuple(float(v) for v in p)) for p in pts]
        states += [StatePoint(tuple(float(v) for v in model.state_lower), t) for t in model.discrete_states]
        for s in states:
            acts = model.actions_at(s)
            if isinstance(acts, FiniteActionSet):
                cand = acts.actions
            else:
                diam = float(np.linalg.norm(acts.upper - acts.lower))
                cand = acts.net(max(diam, 1e-12) * 2.0 ** (-self.level) / 2)
            for a in cand:
                yield s, a

    def next_pair(self, model, store=None):
        while True:
            if self._iter is None:
                self._iter = self._level_pairs(model)
            pair = next(self._iter, None)
            if pair is not None:
                return pair
            self.level += 1
            self._iter = None


class GlobalRandomSampler(Sampler):
    """Uniform state from the state box (or the discrete states) and uniform action."""

    kind = "random"

    def __init__(self, seed: int = 0):
        self.rng = _rng(seed)

    def next_pair(self, model, store=None):
        n_disc = len(model.discrete_states)
        if model.continuous and n_disc:
            # discrete states get a share proportional to their count among grid-like points
            if self.rng.random() < n_disc / (n_disc + 16):
                tag = model.discrete_states[int(self.rng.integers(n_disc))]
                s = StatePoint(tuple(float(v) for v in model.state_lower), tag)
            else:
                s = StatePoint(tuple(float(v) for v in self.rng.uniform(model.state_lower, model.state_upper)))
        else:
            s = sample_state(model, self.rng)
            if s.discrete_tag is None:
                s = StatePoint(tuple(float(v) for v in s.coords))
        return s, sample_action(model.actions_at(s), self.rng)


class GuidedPathSampler(Sampler):
    """Simulates a path from s0 along near-greedy actions and emits its pairs in reverse.

    A path stops at the target, at the sink, or after max_path_len steps.  The
    terminal state is emitted first (with an arbitrary action) so that the
    target or sink rule fires before the backward sweep.  Greedy candidates
    are actions whose upper bound lies within the guidance tolerance of the
    best, where the tolerance is 5% of the current gap, floored at 1e-3.
    """

    kind = "guided"

    def __init__(
        self,
        seed: int = 0,
        max_path_len: int = MIN_PATH_LEN,
        tolerance: float | None = None,
        guide: Callable | None = None,
        start: StatePoint | None = None,
    ):
        if max_path_len < 1:
            raise UsageError("max_path_len must be positive")
        self.rng = _rng(seed)
        self.max_path_len = int(max_path_len)
        self.fixed_tolerance = tolerance
        self.guide = guide
        self.start = start
        self.gap = 1.0
        self._pending: list = []
        self.paths = 0

    def observe_gap(self, gap):
        self.gap = float(gap)

    @property
    def tolerance(self) -> float:
        if self.fixed_tolerance is not None:
            return self.fixed_tolerance
        return max(0.05 * self.gap, 1e-3)

    def _candidates(self, model, store, s):
        if self.guide is not None:
            return self.guide(s, self.tolerance)
        if store is None or len(store) == 0:
            acts = model.actions_at(s)
            return list(acts.actions) if isinstance(acts, FiniteActionSet) else None
        return store.greedy_actions(s, self.tolerance, model.actions_at(s))

    def _choose(self, model, store, s):
        cand = self._candidates(model, store, s)
        if not cand:
            return sample_action(model.actions_at(s), self.rng)
        return cand[int(self.rng.integers(len(cand)))]

    def simulate(self, model: MdpModel, store: BoundStore | None = None) -> list:
        """One path from the start state, in visiting order."""
        s = self.start if self.start is not None else model.initial_state
        path = []
        while True:
            a = self._choose(model, store, s)
            path.append((s, a))
            if model.is_target(s) or model.is_sink(s) or len(path) >= self.max_path_len:
                return path
            s = model.sample_successor(s, a, self.rng)

    def next_pair(self, model, store=None):
        if not self._pending:
            self._pending = self.simulate(model, store)
            self.paths += 1
        return self._pending.pop()


class MixtureSampler(Sampler):
    """With probability nu the guided sampler, otherwise the safe sampler.

    The coin and the two components draw from independent streams, so with
    nu = 0 the emitted pairs equal those of the safe sampler alone.
    """

    kind = "mixture"

    def __init__(self, guided: Sampler, safe: Sampler, nu: float = 0.5, seed: int = 0):
        if not 0.0 <= nu <= 1.0:
            raise UsageError("nu must lie in [0, 1]")
        self.guided = guided
        self.safe = safe
        self.nu = float(nu)
        self.coin = _rng(seed, 2)
        self._in_path = False

    def observe_gap(self, gap):
        self.guided.observe_gap(gap)
        self.safe.observe_gap(gap)

    def next_pair(self, model, store=None):
        # finish a started path before flipping again so back-propagation stays in order
        if isinstance(self.guided, GuidedPathSampler) and self.guided._pending:
            return self.guided.next_pair(model, store)
        if self.nu > 0 and self.coin.random() < self.nu:
            return self.guided.next_pair(model, store)
        return self.safe.next_pair(model, store)


def make_sampler(
    kind: str,
    seed: int = 0,
    nu: float = 0.5,
    max_path_len: int = MIN_PATH_LEN,
    tolerance: float | None = None,
    guide: Callable | None = None,
) -> Sampler:
    if kind == "grid":
        return GridRefineSampler()
    if kind == "random":
        return GlobalRandomSampler(seed)
    if kind == "guided":
        return GuidedPathSampler(seed, max_path_len, tolerance, guide)
    if kind == "mixture":
        guided = GuidedPathSampler(int(_rng(seed, 1).integers(2**63)), max_path_len, tolerance, guide)
        return MixtureSampler(guided, GlobalRandomSampler(seed), nu, seed)
    raise UsageError(f"unknown sampler {kind!r}; expected one of {', '.join(SAMPLER_KINDS)}")


class StepPathSampler(Sampler):
    """Sampler for step-bounded problems: emits (state, action, remaining steps).

    With probability nu it simulates a path from (s0, horizon), decreasing the
    remaining steps along the way, and emits its triples in reverse; otherwise
    it draws a uniform state, action and level in 1..horizon.
    """

    kind = "step-path"

    def __init__(self, horizon: int, seed: int = 0, nu: float = 0.5, guide: Callable | None = None, tolerance=None):
        if horizon < 1:
            raise UsageError("horizon must be positive")
        self.horizon = int(horizon)
        self.nu = float(nu)
        self.guide = guide
        self.fixed_tolerance = tolerance
        self.gap = 1.0
        self.rng = _rng(seed)
        self.coin = _rng(seed, 2)
        self.random = GlobalRandomSampler(int(_rng(seed, 3).integers(2**63)))
        self._pending: list = []

    def observe_gap(self, gap):
        self.gap = float(gap)

    @property
    def tolerance(self) -> float:
        if self.fixed_tolerance is not None:
            return self.fixed_tolerance
        return max(0.05 * self.gap, 1e-3)

    def _choose(self, model, s, level):
        cand = self.guide(s, self.tolerance, level) if self.guide is not None else None
        if not cand:
            return sample_action(model.actions_at(s), self.rng)
        return cand[int(self.rng.integers(len(cand)))]

    def simulate(self, model: MdpModel) -> list:
        s = model.initial_state
        path = []
        for level in range(self.horizon, 0, -1):
            a = self._choose(model, s, level)
            path.append((s, a, level))
            if model.is_target(s):
                break
            s = model.sample_successor(s, a, self.rng)
        return path

    def next_triple(self, model: MdpModel):
        if self._pending:
            return self._pending.pop()
        if self.coin.random() < self.nu:
            self._pending = self.simulate(model)
            return self._pending.pop()
        s, a = self.random.next_pair(model)
        return s, a, int(self.rng.integers(1, self.horizon + 1))

    def next_pair(self, model, store=None):
        s, a, _ = self.next_triple(model)
        return s, a
