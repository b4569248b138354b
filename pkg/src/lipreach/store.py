"""Sampled state-action records and their Lipschitz envelopes.

Each record carries a certified lower value and upper value for one
state-action pair.  A query point p receives

    lower_at(p) = max(0, max_i  lower_i - C_i * d(p, p_i))
    upper_at(p) = min(1, min_i  upper_i + C_i * d(p, p_i))

where the extremum ranges over records in the same partition region as p and
C_i is that region's pair constant.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mdp import NO_TAG, ActionPoint, ActionSet, BoxActionSet, FiniteActionSet, MdpModel, StatePoint, UsageError


class BoundCrossingError(RuntimeError):
    """A lower bound exceeded an upper bound: some declared input is unsound."""

    def __init__(self, pair, lower: float, upper: float, detail: str = ""):
        self.pair = pair
        self.lower = float(lower)
        self.upper = float(upper)
        msg = f"bound crossing at {pair}: lower {self.lower!r} > upper {self.upper!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class SampleRecord:
    state: StatePoint
    action: ActionPoint
    lower: float
    upper: float
    region: int
    step: int


def _tag(t) -> int:
    return NO_TAG if t is None else int(t)


class _Growable:
    """Column arrays with amortized append."""

    def __init__(self, width: int, dtype, capacity: int = 256):
        self.width = width
        self.data = np.zeros((capacity, width), dtype=dtype) if width else np.zeros((capacity, 0), dtype=dtype)
        self.n = 0

    def append(self, row):
        if self.n == len(self.data):
            grown = np.zeros((2 * len(self.data), self.width), dtype=self.data.dtype)
            grown[: self.n] = self.data[: self.n]
            self.data = grown
        self.data[self.n] = row
        self.n += 1

    @property
    def view(self) -> np.ndarray:
        return self.data[: self.n]


class BoundStore:
    """Growing set of sampled records with extrapolation queries.

    Args:
        state_dim, action_dim: coordinate dimensions of states and actions.
        lipschitz: pair constant C used by records outside any partition.
        region_lipschitz: optional per-region pair constants.
        region_of: optional callable StatePoint -> region id; queries only
            consult records with the same region id.
        dedupe_radius: records closer than this are merged.
        scan_threshold: below this many records queries scan linearly.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        lipschitz: float = 1.0,
        region_lipschitz: Sequence[float] | None = None,
        region_of: Callable[[StatePoint], int] | None = None,
        dedupe_radius: float = 1e-9,
        scan_threshold: int = 512,
        actions: ActionSet | None = None,
    ):
        if lipschitz < 0 or dedupe_radius < 0:
            raise UsageError("lipschitz and dedupe_radius must be nonnegative")
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.lipschitz = float(lipschitz)
        self.region_lipschitz = None if region_lipschitz is None else np.asarray(region_lipschitz, dtype=float)
        self.region_of = region_of
        self.dedupe_radius = float(dedupe_radius)
        self.scan_threshold = int(scan_threshold)
        self.actions = actions

        self._s = _Growable(self.state_dim, float)
        self._a = _Growable(self.action_dim, float)
        self._meta = _Growable(3, np.int64)  # state tag, action tag, region
        self._vals = _Growable(2, float)  # lower, upper
        self._step = _Growable(1, np.int64)
        self.version = 0  # bumped on every change

        consts = [self.lipschitz] if self.region_lipschitz is None else list(self.region_lipschitz) + [self.lipschitz]
        c_min = min(consts)
        dim = self.state_dim + self.action_dim
        self._use_index = c_min > 0
        self._tags_in_key = c_min >= 1.0
        self._reach = 1.0 / c_min if c_min > 0 else math.inf
        self._k = 2 if dim <= 2 else 1
        self._edge = self._reach / self._k if self._use_index else math.inf
        if self._use_index and self.dedupe_radius >= self._edge:
            self._use_index = False
        self._offsets = list(itertools.product(range(-self._k, self._k + 1), repeat=dim)) if self._use_index else []
        self._buckets: dict[tuple, list[int]] = {}
        self._dups: dict[tuple, list[int]] = {}
        self._dup_offsets = list(itertools.product((-1, 0, 1), repeat=dim))

    @classmethod
    def from_model(cls, model: MdpModel, **kwargs) -> "BoundStore":
        region_lipschitz = None
        region_of = None
        if model.partition is not None:
            region_lipschitz = [model.region_pair_constant(i) for i in range(len(model.partition))]
            region_of = model.partition.region_of
        return cls(
            state_dim=model.dim,
            action_dim=model.action_dim,
            lipschitz=model.lipschitz_pair,
            region_lipschitz=region_lipschitz,
            region_of=region_of,
            actions=model.constant_actions,
            **kwargs,
        )

    # -- basic access --------------------------------------------------------------
    def __len__(self):
        return self._vals.n

    def constant_for(self, region: int) -> float:
        if region < 0 or self.region_lipschitz is None:
            return self.lipschitz
        return float(self.region_lipschitz[region])

    def region(self, s: StatePoint) -> int:
        return -1 if self.region_of is None else int(self.region_of(s))

    def record(self, i: int) -> SampleRecord:
        st, at, reg = self._meta.view[i]
        return SampleRecord(
            StatePoint(tuple(self._s.view[i]), None if st == NO_TAG else int(st)),
            ActionPoint(tuple(self._a.view[i]), None if at == NO_TAG else int(at)),
            float(self._vals.view[i, 0]),
            float(self._vals.view[i, 1]),
            int(reg),
            int(self._step.view[i, 0]),
        )

    def records(self) -> list[SampleRecord]:
        return [self.record(i) for i in range(len(self))]

    # -- index -----------------------------------------------------------------
    def _cell(self, coords: np.ndarray) -> tuple:
        return tuple(np.floor(coords / self._edge).astype(np.int64).tolist())

    def _key_prefix(self, region, stag, atag) -> tuple:
        return (region, stag, atag) if self._tags_in_key else (region,)

    def _candidates(self, sc, stag, ac, atag, region, use_index=True) -> np.ndarray:
        n = len(self)
        if not use_index or not self._use_index or n < self.scan_threshold:
            meta = self._meta.view
            return np.nonzero(meta[:, 2] == region)[0]
        prefix = self._key_prefix(region, stag, atag)
        base = self._cell(np.concatenate([sc, ac]))
        found = []
        for off in self._offsets:
            b = self._buckets.get(prefix + tuple(x + o for x, o in zip(base, off)))
            if b:
                found.append(b)
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.fromiter(itertools.chain.from_iterable(found), dtype=np.int64)

    def _distances(self, idx, sc, stag, ac, atag) -> np.ndarray:
        d = np.zeros(len(idx))
        if self.state_dim:
            d += np.sqrt(np.sum((self._s.view[idx] - sc) ** 2, axis=1))
        if self.action_dim:
            d += np.sqrt(np.sum((self._a.view[idx] - ac) ** 2, axis=1))
        meta = self._meta.view[idx]
        d += (meta[:, 0] != stag).astype(float)
        d += (meta[:, 1] != atag).astype(float)
        return d

    def _unpack(self, p):
        s, a = p
        sc = np.asarray(s.coords, dtype=float)
        ac = np.asarray(a.coords, dtype=float)
        if len(sc) != self.state_dim or len(ac) != self.action_dim:
            raise UsageError("query dimension does not match the store")
        return sc, _tag(s.discrete_tag), ac, _tag(a.discrete_tag)

    # -- queries -----------------------------------------------------------------
    def bounds_at(self, p, use_index: bool = True, region: int | None = None) -> tuple[float, float]:
        """(lower_at(p), upper_at(p)) in one pass."""
        sc, stag, ac, atag = self._unpack(p)
        if region is None:
            region = self.region(p[0])
        idx = self._candidates(sc, stag, ac, atag, region, use_index)
        if len(idx) == 0:
            return 0.0, 1.0
        c = self.constant_for(region)
        d = self._distances(idx, sc, stag, ac, atag)
        vals = self._vals.view[idx]
        lo = float(np.max(vals[:, 0] - c * d))
        hi = float(np.min(vals[:, 1] + c * d))
        return min(1.0, max(0.0, lo)), max(0.0, min(1.0, hi))

    def lower_at(self, p, use_index: bool = True) -> float:
        return self.bounds_at(p, use_index)[0]

    def upper_at(self, p, use_index: bool = True) -> float:
        return self.bounds_at(p, use_index)[1]

    # -- updates ---------------------------------------------------------------
    def record_update(self, p, new_lower: float, new_upper: float, step: int = 0) -> int:
        """Merge certified values for p into the store; returns the record index."""
        if not (0.0 <= new_lower <= 1.0 and 0.0 <= new_upper <= 1.0):
            raise UsageError(f"bounds must lie in [0, 1], got ({new_lower}, {new_upper})")
        sc, stag, ac, atag = self._unpack(p)
        region = self.region(p[0])
        i, d = self._nearest_duplicate(sc, stag, ac, atag, region)
        if i >= 0:
            # shift by C*d so the merged value stays valid at the kept location
            c = self.constant_for(region) * d
            vals = self._vals.data[i]
            lo = max(vals[0], new_lower - c)
            hi = min(vals[1], new_upper + c)
            if lo > hi:
                raise BoundCrossingError(p, lo, hi, "merge")
            vals[0], vals[1] = lo, hi
            self._step.data[i, 0] = step
            self.version += 1
            return i
        if new_lower > new_upper:
            raise BoundCrossingError(p, new_lower, new_upper, "insert")
        i = len(self)
        self._s.append(sc)
        self._a.append(ac)
        self._meta.append((stag, atag, region))
        self._vals.append((new_lower, new_upper))
        self._step.append((step,))
        if self._use_index:
            key = self._key_prefix(region, stag, atag) + self._cell(np.concatenate([sc, ac]))
            self._buckets.setdefault(key, []).append(i)
        self._register_duplicate_key(i, sc, stag, ac, atag, region)
        self.version += 1
        return i

    def _dup_cell(self, sc, ac) -> tuple:
        if self.dedupe_radius <= 0:
            return tuple(np.concatenate([sc, ac]).tolist())
        return tuple(np.floor(np.concatenate([sc, ac]) / self.dedupe_radius).astype(np.int64).tolist())

    def _register_duplicate_key(self, i, sc, stag, ac, atag, region):
        key = (region, stag, atag) + self._dup_cell(sc, ac)
        self._dups.setdefault(key, []).append(i)

    def _nearest_duplicate(self, sc, stag, ac, atag, region) -> tuple[int, float]:
        """Closest record within dedupe_radius of the pair (same region and tags), or (-1, inf)."""
        base = self._dup_cell(sc, ac)
        prefix = (region, stag, atag)
        offsets = self._dup_offsets if self.dedupe_radius > 0 else [(0,) * len(base)]
        found = []
        for off in offsets:
            b = self._dups.get(prefix + tuple(x + o for x, o in zip(base, off)))
            if b:
                found.extend(b)
        if not found:
            return -1, math.inf
        idx = np.asarray(found, dtype=np.int64)
        d = self._distances(idx, sc, stag, ac, atag)
        j = int(np.argmin(d))
        if d[j] <= self.dedupe_radius:
            return int(idx[j]), float(d[j])
        return -1, math.inf

    # -- state-level bounds ----------------------------------------------------
    def _action_set(self, s: StatePoint, actions: ActionSet | None) -> ActionSet:
        acts = actions if actions is not None else self.actions
        if acts is None:
            raise UsageError("an action set is required for state-level queries")
        return acts

    def action_bounds(self, s: StatePoint, actions: Sequence[ActionPoint]) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(len(actions))
        hi = np.empty(len(actions))
        region = self.region(s)
        for k, a in enumerate(actions):
            lo[k], hi[k] = self.bounds_at((s, a), region=region)
        return lo, hi

    def lower_state(self, s: StatePoint, precision: float = 1e-3, actions: ActionSet | None = None) -> float:
        """Under-approximation of max_a lower_at(s, a) within `precision`."""
        from .approx import ApproxRequest, approx_max

        acts = self._action_set(s, actions)
        if isinstance(acts, FiniteActionSet):
            return float(np.max(self.action_bounds(s, acts.actions)[0]))
        req = ApproxRequest("under", precision, self.constant_for(self.region(s)))
        return max(0.0, approx_max(acts, lambda a: self.lower_at((s, a)), req))

    def upper_state(self, s: StatePoint, precision: float = 1e-3, actions: ActionSet | None = None) -> float:
        """Over-approximation of max_a upper_at(s, a) within `precision`."""
        from .approx import ApproxRequest, approx_max

        acts = self._action_set(s, actions)
        if isinstance(acts, FiniteActionSet):
            return float(np.max(self.action_bounds(s, acts.actions)[1]))
        req = ApproxRequest("over", precision, self.constant_for(self.region(s)))
        return min(1.0, approx_max(acts, lambda a: self.upper_at((s, a)), req))

    def greedy_actions(self, s: StatePoint, tolerance: float, actions: ActionSet | None = None) -> list[ActionPoint]:
        """Actions whose upper bound lies within `tolerance` of the best upper bound at s.

        Box action sets are represented by a net whose spacing keeps the
        Lipschitz error below the tolerance.
        """
        if tolerance <= 0:
            raise UsageError("tolerance must be positive")
        acts = self._action_set(s, actions)
        if isinstance(acts, BoxActionSet):
            c = self.constant_for(self.region(s))
            cand = acts.net(tolerance / (2 * c)) if c > 0 else [acts.center()]
        else:
            cand = list(acts.actions)
        _, hi = self.action_bounds(s, cand)
        best = float(np.max(hi))
        return [a for a, u in zip(cand, hi) if u >= best - tolerance]

    # -- batch evaluation --------------------------------------------------------
    def state_envelopes(
        self, coords: np.ndarray, region: int, actions: Sequence[ActionPoint], stag: int = NO_TAG
    ) -> tuple[np.ndarray, np.ndarray]:
        """State-level lower and upper envelopes at many points of one region.

        Returns (max_a lower_at, max_a upper_at) over the given finite action
        list, evaluated with every point treated as lying in `region`.
        """
        coords = np.asarray(coords, dtype=float).reshape(-1, self.state_dim)
        m = len(coords)
        meta = self._meta.view
        idx = np.nonzero(meta[:, 2] == region)[0]
        lo = np.zeros(m)
        hi = np.zeros(m)
        if len(idx) == 0:
            hi[:] = 1.0
            return lo, hi
        c = self.constant_for(region)
        svals = self._s.view[idx]
        avals = self._a.view[idx]
        vals = self._vals.view[idx]
        tagpen = (meta[idx, 0] != stag).astype(float)
        chunk = max(1, 2_000_000 // max(1, len(idx)))
        for start in range(0, m, chunk):
            block = coords[start : start + chunk]
            if self.state_dim:
                ds = np.sqrt(((block[:, None, :] - svals[None, :, :]) ** 2).sum(axis=2))
            else:
                ds = np.zeros((len(block), len(idx)))
            ds += tagpen[None, :]
            blo = np.zeros(len(block))
            bhi = np.zeros(len(block))
            for a in actions:
                ac = np.asarray(a.coords, dtype=float)
                da = (meta[idx, 1] != _tag(a.discrete_tag)).astype(float)
                if self.action_dim:
                    da = da + np.sqrt(((avals - ac) ** 2).sum(axis=1))
                dist = ds + da[None, :]
                blo = np.maximum(blo, np.max(vals[:, 0][None, :] - c * dist, axis=1))
                bhi = np.maximum(bhi, np.minimum(1.0, np.min(vals[:, 1][None, :] + c * dist, axis=1)))
            lo[start : start + chunk] = np.clip(blo, 0.0, 1.0)
            hi[start : start + chunk] = np.clip(bhi, 0.0, 1.0)
        return lo, hi

    # -- export ------------------------------------------------------------------
    def columns(self) -> dict[str, np.ndarray]:
        return {
            "state": self._s.view.copy(),
            "state_tag": self._meta.view[:, 0].copy(),
            "action": self._a.view.copy(),
            "action_tag": self._meta.view[:, 1].copy(),
            "lower": self._vals.view[:, 0].copy(),
            "upper": self._vals.view[:, 1].copy(),
            "region": self._meta.view[:, 2].copy(),
            "step": self._step.view[:, 0].copy(),
        }

    def load_columns(self, cols: dict[str, np.ndarray]):
        """Append raw records (used when restoring a snapshot)."""
        n = len(cols["lower"])
        for i in range(n):
            sc = np.asarray(cols["state"][i], dtype=float).reshape(self.state_dim)
            ac = np.asarray(cols["action"][i], dtype=float).reshape(self.action_dim)
            stag, atag, region = int(cols["state_tag"][i]), int(cols["action_tag"][i]), int(cols["region"][i])
            self._s.append(sc)
            self._a.append(ac)
            self._meta.append((stag, atag, region))
            self._vals.append((cols["lower"][i], cols["upper"][i]))
            self._step.append((int(cols["step"][i]),))
            if self._use_index:
                key = self._key_prefix(region, stag, atag) + self._cell(np.concatenate([sc, ac]))
                self._buckets.setdefault(key, []).append(len(self) - 1)
            self._register_duplicate_key(len(self) - 1, sc, stag, ac, atag, region)
        self.version += 1
