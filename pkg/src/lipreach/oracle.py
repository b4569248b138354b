"""Independent reference solvers used to check the main algorithms.

* exact value iteration (lower and upper) on finite MDPs, guarded by a
  maximal end component check;
* finite-horizon dynamic programming;
* grid discretization of continuous models with certified value intervals;
* closed-form values of small models.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .mdp import (
    INSIDE,
    OUTSIDE,
    BoxActionSet,
    FiniteActionSet,
    MdpModel,
    StatePoint,
    UsageError,
)


@dataclass
class FiniteMdp:
    """Explicit finite MDP.

    Transitions are stored per state-action pair: pair p belongs to state
    pair_state[p], and its successor distribution is
    cols[row_ptr[p]:row_ptr[p+1]] with probabilities probs[...].
    Pairs are sorted by state.
    """

    n_states: int
    pair_state: np.ndarray
    pair_action: np.ndarray
    row_ptr: np.ndarray
    cols: np.ndarray
    probs: np.ndarray
    target: np.ndarray
    sink: np.ndarray
    initial: int = 0
    state_names: list = field(default_factory=list)
    action_names: list = field(default_factory=list)

    def __post_init__(self):
        self.pair_state = np.asarray(self.pair_state, dtype=np.int64)
        self.pair_action = np.asarray(self.pair_action, dtype=np.int64)
        self.row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=float)
        self.target = np.asarray(self.target, dtype=bool)
        self.sink = np.asarray(self.sink, dtype=bool)
        if np.any(np.diff(self.pair_state) < 0):
            raise UsageError("pairs must be sorted by state")
        if len(np.unique(self.pair_state)) != self.n_states:
            raise UsageError("every state needs at least one action")
        sums = np.add.reduceat(self.probs, self.row_ptr[:-1]) if len(self.probs) else np.zeros(0)
        if np.any(np.abs(sums - 1.0) > 1e-12) or np.any(self.probs < 0):
            raise UsageError("transition rows must be nonnegative and sum to 1 within 1e-12")
        if np.any(self.target & self.sink):
            raise UsageError("target and sink overlap")
        self._pair_row = np.repeat(np.arange(self.n_pairs), np.diff(self.row_ptr))
        self._state_start = np.searchsorted(self.pair_state, np.arange(self.n_states))

    @property
    def n_pairs(self) -> int:
        return len(self.pair_state)

    @classmethod
    def from_rows(cls, n_states, rows, target, sink, initial=0, state_names=None, action_names=None):
        """Build from rows given as a list of (state, action, {successor: prob})."""
        rows = sorted(rows, key=lambda r: (r[0], r[1]))
        pair_state, pair_action, row_ptr, cols, probs = [], [], [0], [], []
        for s, a, dist in rows:
            pair_state.append(s)
            pair_action.append(a)
            for t, p in sorted(dist.items()):
                cols.append(t)
                probs.append(p)
            row_ptr.append(len(cols))
        tmask = np.zeros(n_states, dtype=bool)
        smask = np.zeros(n_states, dtype=bool)
        tmask[list(target)] = True
        smask[list(sink)] = True
        return cls(
            n_states,
            pair_state,
            pair_action,
            row_ptr,
            cols,
            probs,
            tmask,
            smask,
            initial,
            list(state_names or []),
            list(action_names or []),
        )

    def bellman(self, v: np.ndarray) -> np.ndarray:
        """One synchronous backup: max_a sum_s' P(s,a,s') v(s'), with target fixed at 1."""
        q = np.bincount(self._pair_row, weights=self.probs * v[self.cols], minlength=self.n_pairs)
        out = np.maximum.reduceat(q, self._state_start)
        out[self.target] = 1.0
        return out

    def pair_values(self, v: np.ndarray) -> np.ndarray:
        return np.bincount(self._pair_row, weights=self.probs * v[self.cols], minlength=self.n_pairs)


# ---------------------------------------------------------------------------
# End components


def maximal_end_components(m: FiniteMdp) -> list[tuple[set, dict]]:
    """Maximal end components as (states, {state: allowed pair ids}).

    Iterated strongly-connected-component refinement: drop pairs that can
    leave their component, drop states left without pairs, repeat.
    """
    alive = np.ones(m.n_pairs, dtype=bool)
    while True:
        rows = m._pair_row[alive[m._pair_row]]
        src = m.pair_state[rows]
        dst = m.cols[alive[m._pair_row]]
        pr = m.probs[alive[m._pair_row]]
        keep = pr > 0
        graph = csr_matrix((np.ones(int(keep.sum())), (src[keep], dst[keep])), shape=(m.n_states, m.n_states))
        _, comp = connected_components(graph, directed=True, connection="strong")
        has_pair = np.zeros(m.n_states, dtype=bool)
        has_pair[m.pair_state[alive]] = True
        leaves = np.zeros(m.n_pairs, dtype=bool)
        bad_edge = (m.probs > 0) & (comp[m.cols] != comp[m.pair_state[m._pair_row]])
        bad_edge |= (m.probs > 0) & ~has_pair[m.cols]
        np.logical_or.at(leaves, m._pair_row[bad_edge], True)
        new_alive = alive & ~leaves
        if np.array_equal(new_alive, alive):
            break
        alive = new_alive
    comps: dict[int, tuple[set, dict]] = {}
    for p in np.nonzero(alive)[0]:
        s = int(m.pair_state[p])
        states, acts = comps.setdefault(int(comp[s]), (set(), {}))
        states.add(s)
        acts.setdefault(s, []).append(int(p))
    return list(comps.values())


def absorption_holds(m: FiniteMdp) -> bool:
    """True when every end component lies inside target or sink."""
    terminal = m.target | m.sink
    for states, _ in maximal_end_components(m):
        if any(not terminal[s] for s in states):
            return False
    return True


# ---------------------------------------------------------------------------
# Value iteration


@dataclass
class ValueBounds:
    lower: np.ndarray
    upper: np.ndarray | None
    iterations: int
    warning: str = ""


def exact_value_iteration(m: FiniteMdp, tol: float = 1e-10, max_iter: int = 10_000_000) -> ValueBounds:
    """Lower iteration from the target indicator; upper iteration when absorption holds.

    Iteration stops when the sup-norm step is below tol * 1e-3.  The upper
    run starts from 1 on non-sink states and is skipped, with a warning, if
    some end component avoids target and sink.
    """
    if tol <= 0:
        raise UsageError("tol must be positive")
    stop = tol * 1e-3
    lo = m.target.astype(float)
    it = 0
    while it < max_iter:
        nxt = m.bellman(lo)
        nxt[m.sink] = 0.0
        it += 1
        if np.max(np.abs(nxt - lo)) < stop:
            lo = nxt
            break
        lo = nxt
    if not absorption_holds(m):
        msg = "end component outside target and sink; upper iteration skipped"
        warnings.warn(msg)
        return ValueBounds(lo, None, it, msg)
    hi = np.where(m.sink, 0.0, 1.0)
    while it < 2 * max_iter:
        nxt = m.bellman(hi)
        nxt[m.sink] = 0.0
        it += 1
        if np.max(np.abs(nxt - hi)) < stop:
            hi = nxt
            break
        hi = nxt
    return ValueBounds(lo, hi, it)


def n_step_dp(m: FiniteMdp, n: int) -> np.ndarray:
    """Probability of reaching the target within n steps, maximized over strategies."""
    if n < 0:
        raise UsageError("horizon must be nonnegative")
    v = m.target.astype(float)
    for _ in range(n):
        v = m.bellman(v)
    return v


def finite_from_model(model: MdpModel) -> tuple[FiniteMdp, list[int]]:
    """Explicit table of a purely discrete model; returns the MDP and its state tags."""
    if model.continuous:
        raise UsageError("model has continuous states")
    tags = list(model.discrete_states)
    index = {t: i for i, t in enumerate(tags)}
    coords = tuple(model.state_lower)
    rows = []
    names = None
    for t in tags:
        s = StatePoint(coords, t)
        acts = model.actions_at(s)
        if not isinstance(acts, FiniteActionSet):
            raise UsageError("finite conversion needs finite action sets")
        names = acts.names
        for k, a in enumerate(acts.actions):
            dist: dict[int, float] = {}
            for atom in model.kernel_at(s, a).atoms():
                if atom[0] != "point":
                    raise UsageError("finite conversion needs discrete kernels")
                j = index[atom[2].discrete_tag]
                dist[j] = dist.get(j, 0.0) + atom[1]
            rows.append((index[t], k, dist))
    target = [index[t] for t in tags if model.is_target(StatePoint(coords, t))]
    sink = [index[t] for t in tags if model.is_sink(StatePoint(coords, t))]
    m = FiniteMdp.from_rows(
        len(tags), rows, target, sink, index[model.initial_state.discrete_tag], [str(t) for t in tags], names
    )
    return m, tags


# ---------------------------------------------------------------------------
# Discretization with certified intervals

FIXED_TARGET = -10
FIXED_SINK = -11


class _Labeler:
    """Assigns region parts an integer label: a fixed value or a Lipschitz region.

    Label -1 marks a box that meets several labels.
    """

    def __init__(self, model: MdpModel):
        self.model = model
        shapes = [(model.target, ("fixed", 1.0)), (model.sink, ("fixed", 0.0))]
        if model.partition is not None:
            for i, r in enumerate(model.partition.regions):
                if r.fixed_value is not None:
                    shapes.append((r.shape, ("fixed", float(r.fixed_value))))
                else:
                    shapes.append((r.shape, ("lip", i)))
        else:
            shapes.append((None, ("lip", -1)))
        self.shapes = [s for s, _ in shapes]
        self.labels = [lab for _, lab in shapes]
        self.is_fixed = np.array([lab[0] == "fixed" for lab in self.labels] + [False])
        self.value = np.array([lab[1] if lab[0] == "fixed" else 0.0 for lab in self.labels] + [0.0])
        self.lip = np.array(
            [0.0 if lab[0] == "fixed" else model.region_state_constant(lab[1]) for lab in self.labels] + [0.0]
        )

    def boxes(self, lo, hi) -> np.ndarray:
        m = len(lo)
        covered = np.zeros(m, dtype=bool)
        touched = np.zeros(m, dtype=bool)
        out = np.full(m, -1, dtype=np.int64)
        for k, shape in enumerate(self.shapes):
            if shape is None:
                c = np.where(touched, 2, INSIDE)
            else:
                c = shape.classify_boxes(lo, hi)
            c = np.where(covered, OUTSIDE, c)
            out[(c == INSIDE) & ~touched] = k
            covered |= c == INSIDE
            touched |= c != OUTSIDE
        out[~covered] = -1
        return out

    def points(self, coords) -> np.ndarray:
        m = len(coords)
        out = np.full(m, -1, dtype=np.int64)
        for k, shape in enumerate(self.shapes):
            free = out < 0
            hit = free if shape is None else (shape.contains_coords(coords) & free)
            out[hit] = k
        return out

    def tag(self, tag: int) -> int:
        s = StatePoint(tuple(self.model.state_lower), tag)
        if self.model.is_target(s):
            return 0
        if self.model.is_sink(s):
            return 1
        if self.model.partition is not None:
            r = self.model.partition.region_of(s)
            for k, lab in enumerate(self.labels):
                if lab == ("lip", r) or (lab[0] == "fixed" and self.shapes[k] is self.model.partition.regions[r].shape):
                    return k
        return len(self.labels) - 1


@dataclass
class Discretization:
    """Grid abstraction of a continuous model.

    States 0..G-1 are grid points (row-major), followed by the model's
    discrete states.  `mdp` is the plain abstraction (masses moved to the
    nearest grid point); the certified tables bound the continuous value.
    """

    model: MdpModel
    h: float
    axes: list
    points: np.ndarray
    tags: list
    mdp: FiniteMdp
    cert_pair: np.ndarray
    cert_col: np.ndarray
    cert_mass: np.ndarray
    cert_radius: np.ndarray
    cert_const: np.ndarray
    const_lo: np.ndarray
    const_hi: np.ndarray
    fixed: np.ndarray  # per state: nan or fixed value
    labels: np.ndarray  # region label code per state

    @property
    def n_grid(self) -> int:
        return len(self.points)

    def index_of(self, s: StatePoint) -> int:
        if s.discrete_tag is not None:
            return self.n_grid + self.tags.index(s.discrete_tag)
        idx = 0
        for k, axis in enumerate(self.axes):
            i = int(np.argmin(np.abs(axis - s.coords[k])))
            idx = idx * len(axis) + i
        return idx


def _axis_parts(axis: np.ndarray, h: float, a: float, b: float, lo_box: float, hi_box: float):
    """Grid indices whose Voronoi cell meets [a, b], with overlap intervals."""
    n = len(axis)
    i0 = max(0, int(math.floor((a - axis[0]) / h + 0.5)) - 1)
    i1 = min(n - 1, int(math.ceil((b - axis[0]) / h - 0.5)) + 1)
    idx = np.arange(i0, i1 + 1)
    cl = np.maximum(axis[idx] - h / 2, lo_box)
    ch = np.minimum(axis[idx] + h / 2, hi_box)
    pl = np.maximum(cl, a)
    ph = np.minimum(ch, b)
    ok = ph > pl
    return idx[ok], pl[ok], ph[ok]


def discretize(model: MdpModel, h: float, subdivide: int = 8) -> Discretization:
    """Grid abstraction at spacing h with exact cell masses and certified tables.

    Certified tables: for each state-action pair, the successor mass is split
    over grid cells and region parts.  A part that lies wholly in a fixed-value
    region (target, sink) contributes that value; a part in a Lipschitz region
    whose grid point shares that region contributes (mass, grid point, r) with
    r an upper bound on the mean distance of the part's mass to the grid point;
    other parts are split `subdivide` times per axis and whatever stays
    ambiguous contributes 0 to the lower table and 1 to the upper table.
    """
    if h <= 0:
        raise UsageError("spacing must be positive")
    if not model.continuous:
        raise UsageError("discretize needs a continuous state box")
    axes = []
    for k in range(model.dim):
        lo, hi = model.state_lower[k], model.state_upper[k]
        n = (hi - lo) / h
        if abs(n - round(n)) > 1e-9:
            raise UsageError("spacing must divide the state box")
        axes.append(lo + h * np.arange(int(round(n)) + 1))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    tags = list(model.discrete_states)
    G = len(mesh)
    n_states = G + len(tags)
    lab = _Labeler(model)
    grid_code = np.concatenate([lab.points(mesh), np.array([lab.tag(t) for t in tags], dtype=np.int64)])
    fixed = np.where(lab.is_fixed[grid_code], lab.value[grid_code], np.nan)
    box_lo, box_hi = model.state_lower, model.state_upper
    tag_index = {t: G + i for i, t in enumerate(tags)}
    strides = np.cumprod([1] + [len(a) for a in axes[::-1]])[:-1][::-1]

    rows = []
    cert = _CertTable()
    pair_id = 0
    all_states = [StatePoint(tuple(p)) for p in mesh] + [StatePoint(tuple(model.state_lower), t) for t in tags]
    for si, s in enumerate(all_states):
        acts = model.actions_at(s)
        actions = acts.net(h) if isinstance(acts, BoxActionSet) else list(acts.actions)
        if lab.is_fixed[grid_code[si]]:
            rows.append((si, 0, {si: 1.0}))
            v = lab.value[grid_code[si]]
            cert.constant(v, v)
            pair_id += 1
            continue
        for ai, a in enumerate(actions):
            dist: dict[int, float] = {}
            for atom in model.kernel_at(s, a).atoms():
                if atom[0] == "point":
                    w, t = atom[1], atom[2]
                    if t.discrete_tag is not None:
                        j = tag_index[t.discrete_tag]
                        code = np.array([grid_code[j]])
                        pos = np.zeros((1, model.dim))
                        ref = pos
                    else:
                        x = np.asarray(t.coords)
                        multi = np.array([int(np.argmin(np.abs(axes[k] - x[k]))) for k in range(model.dim)])
                        j = int(multi @ strides)
                        code = lab.points(x[None, :])
                        pos = x[None, :]
                        ref = mesh[j][None, :]
                    dist[j] = dist.get(j, 0.0) + w
                    rad = np.linalg.norm(pos - ref, axis=1)
                    cert.add(pair_id, np.array([j]), np.array([w]), rad, code, grid_code, lab)
                    continue
                _, w, lo, hi = atom
                vol = float(np.prod(hi - lo))
                per_axis = [_axis_parts(axes[k], h, lo[k], hi[k], box_lo[k], box_hi[k]) for k in range(model.dim)]
                grids = np.meshgrid(*[np.arange(len(p[0])) for p in per_axis], indexing="ij")
                combos = np.stack([g.reshape(-1) for g in grids], axis=1)
                plo = np.stack([per_axis[k][1][combos[:, k]] for k in range(model.dim)], axis=1)
                phi = np.stack([per_axis[k][2][combos[:, k]] for k in range(model.dim)], axis=1)
                gidx = np.zeros(len(combos), dtype=np.int64)
                for k in range(model.dim):
                    gidx += per_axis[k][0][combos[:, k]] * strides[k]
                mass = w * np.prod(phi - plo, axis=1) / vol
                for j, mj in zip(gidx.tolist(), mass.tolist()):
                    dist[j] = dist.get(j, 0.0) + mj
                codes = lab.boxes(plo, phi)
                sure = codes >= 0
                cert.add(
                    pair_id,
                    gidx[sure],
                    mass[sure],
                    _mean_distance_bounds(plo[sure], phi[sure], mesh[gidx[sure]]),
                    codes[sure],
                    grid_code,
                    lab,
                )
                for q in np.nonzero(~sure)[0]:
                    slo, shi = _subdivide(plo[q], phi[q], subdivide)
                    smass = mass[q] * np.prod(shi - slo, axis=1) / np.prod(phi[q] - plo[q])
                    scodes = lab.boxes(slo, shi)
                    j = np.full(len(slo), gidx[q])
                    cert.add(
                        pair_id,
                        j,
                        smass,
                        _mean_distance_bounds(slo, shi, mesh[j]),
                        scodes,
                        grid_code,
                        lab,
                    )
            total = sum(dist.values())
            rows.append((si, ai, {j: p / total for j, p in dist.items()}))
            cert.close_pair()
            pair_id += 1
    target = [i for i in range(n_states) if fixed[i] == 1.0]
    sink = [i for i in range(n_states) if fixed[i] == 0.0]
    init = _initial_index(model, axes, G, tags)
    mdp = FiniteMdp.from_rows(n_states, rows, target, sink, init)
    return Discretization(
        model,
        h,
        axes,
        mesh,
        tags,
        mdp,
        np.concatenate(cert.pair) if cert.pair else np.zeros(0, dtype=np.int64),
        np.concatenate(cert.col) if cert.col else np.zeros(0, dtype=np.int64),
        np.concatenate(cert.mass) if cert.mass else np.zeros(0),
        np.concatenate(cert.rad) if cert.rad else np.zeros(0),
        np.concatenate(cert.lip) if cert.lip else np.zeros(0),
        np.asarray(cert.const_lo, dtype=float),
        np.asarray(cert.const_hi, dtype=float),
        fixed,
        grid_code,
    )


class _CertTable:
    """Accumulates certified table entries pair by pair."""

    def __init__(self):
        self.pair, self.col, self.mass, self.rad, self.lip = [], [], [], [], []
        self.const_lo, self.const_hi = [], []
        self._lo = 0.0
        self._hi = 0.0

    def constant(self, lo, hi):
        self.const_lo.append(lo)
        self.const_hi.append(hi)

    def add(self, pair_id, cols, mass, rad, codes, grid_code, lab):
        mixed = codes < 0
        safe = np.where(mixed, 0, codes)
        fixed = ~mixed & lab.is_fixed[safe]
        lip_ok = ~mixed & ~fixed & (grid_code[cols] == codes)
        rest = ~(fixed | lip_ok)
        self._lo += float(np.sum(mass[fixed] * lab.value[safe[fixed]]))
        self._hi += float(np.sum(mass[fixed] * lab.value[safe[fixed]])) + float(np.sum(mass[rest]))
        if np.any(lip_ok):
            self.pair.append(np.full(int(lip_ok.sum()), pair_id, dtype=np.int64))
            self.col.append(np.asarray(cols[lip_ok], dtype=np.int64))
            self.mass.append(np.asarray(mass[lip_ok], dtype=float))
            self.rad.append(np.asarray(rad[lip_ok], dtype=float))
            self.lip.append(lab.lip[safe[lip_ok]])

    def close_pair(self):
        self.constant(self._lo, self._hi)
        self._lo = 0.0
        self._hi = 0.0


def _initial_index(model, axes, G, tags) -> int:
    s = model.initial_state
    if s.discrete_tag is not None:
        return G + tags.index(s.discrete_tag)
    idx = 0
    for k, axis in enumerate(axes):
        idx = idx * len(axis) + int(np.argmin(np.abs(axis - s.coords[k])))
    return idx


def _mean_distance_bounds(lo: np.ndarray, hi: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Row-wise upper bound on E|X - g| for X uniform on [lo, hi], namely sqrt(E|X - g|^2)."""
    center = (lo + hi) / 2
    ext = hi - lo
    return np.sqrt(np.sum((center - g) ** 2, axis=1) + np.sum(ext**2, axis=1) / 12.0)


def _subdivide(lo, hi, n):
    d = len(lo)
    edges = [np.linspace(lo[k], hi[k], n + 1) for k in range(d)]
    idx = np.stack(np.meshgrid(*[np.arange(n)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    slo = np.stack([edges[k][idx[:, k]] for k in range(d)], axis=1)
    shi = np.stack([edges[k][idx[:, k] + 1] for k in range(d)], axis=1)
    return slo, shi


@dataclass
class CertifiedValues:
    lower: np.ndarray
    upper: np.ndarray
    plain: np.ndarray
    iterations: int


def certified_values(disc: Discretization, tol: float = 1e-9, max_iter: int = 200_000) -> CertifiedValues:
    """Sound lower and upper bounds on the continuous value at every grid state.

    The lower table iterates
        l(s) <- max_a [ const_lo + sum m * max(0, l(g) - C r) ],
    started from the fixed values (0 elsewhere).  If l <= V at grid points then
    V(x) >= l(g) - C|x - g| on each part, and Jensen's inequality for the
    convex map z -> max(0, l - C z) lets r bound the mean distance; so every
    iterate stays below V.  The upper table is the dual, started from 1.
    """
    m = disc.mdp
    fixed_mask = ~np.isnan(disc.fixed)
    lo = np.where(fixed_mask, disc.fixed, 0.0)
    hi = np.where(fixed_mask, disc.fixed, 1.0)
    P = m.n_pairs
    starts = m._state_start
    it = 0
    for it in range(1, max_iter + 1):
        lv = disc.const_lo + np.bincount(
            disc.cert_pair,
            weights=disc.cert_mass * np.maximum(0.0, lo[disc.cert_col] - disc.cert_const * disc.cert_radius),
            minlength=P,
        )
        hv = disc.const_hi + np.bincount(
            disc.cert_pair,
            weights=disc.cert_mass * np.minimum(1.0, hi[disc.cert_col] + disc.cert_const * disc.cert_radius),
            minlength=P,
        )
        nlo = np.maximum(lo, np.clip(np.maximum.reduceat(lv, starts), 0.0, 1.0))
        nhi = np.minimum(hi, np.clip(np.maximum.reduceat(hv, starts), 0.0, 1.0))
        nlo[fixed_mask] = disc.fixed[fixed_mask]
        nhi[fixed_mask] = disc.fixed[fixed_mask]
        change = max(np.max(nlo - lo), np.max(hi - nhi))
        lo, hi = nlo, nhi
        if change < tol:
            break
    plain = _plain_values(m)
    return CertifiedValues(lo, hi, plain, it)


def _plain_values(m: FiniteMdp, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    v = m.target.astype(float)
    for _ in range(max_iter):
        nxt = m.bellman(v)
        nxt[m.sink] = 0.0
        if np.max(np.abs(nxt - v)) < tol:
            return nxt
        v = nxt
    return v


def certified_interval(disc: Discretization, cert: CertifiedValues, s: StatePoint) -> tuple[float, float]:
    """Certified interval for V(s) from the nearest grid state."""
    j = disc.index_of(s)
    if s.discrete_tag is not None or j >= disc.n_grid:
        return float(cert.lower[j]), float(cert.upper[j])
    lab = _Labeler(disc.model)
    code = int(lab.points(np.asarray([s.coords]))[0])
    if lab.is_fixed[code]:
        return float(lab.value[code]), float(lab.value[code])
    if code != int(disc.labels[j]):
        return 0.0, 1.0
    d = float(np.linalg.norm(np.asarray(s.coords) - disc.points[j]))
    c = lab.lip[code]
    return max(0.0, float(cert.lower[j]) - c * d), min(1.0, float(cert.upper[j]) + c * d)


# ---------------------------------------------------------------------------
# Closed forms


def geometric_reach(p_target: float, p_sink: float) -> float:
    """Value of a state that each round moves to target w.p. p_target, sink w.p. p_sink, else retries."""
    return p_target / (p_target + p_sink)


def discounted_self_loop(p: float, gamma: float) -> float:
    """Reachability after discounting for a state reaching target w.p. p per step, else staying."""
    return gamma * p / (1.0 - gamma * (1.0 - p))


def triangle(x):
    return 1.0 - np.abs(2.0 * np.asarray(x, dtype=float) - 1.0)


def sine_squared(x):
    return np.sin(np.pi * np.asarray(x, dtype=float)) ** 2


def frequency_value(s: float, k: int, f=triangle) -> float:
    """Value of the frequency chain at s in [0, 1]: f applied to the phase of s*k."""
    x = s * k
    j = max(0, math.ceil(x) - 1)
    return float(f(x - j))


def uniform_expectation_pl(knots_x, knots_y, a: float, b: float) -> float:
    """Exact mean of the piecewise-linear interpolant (knots_x, knots_y) over U[a, b]."""
    xs = np.asarray(knots_x, dtype=float)
    ys = np.asarray(knots_y, dtype=float)
    pts = np.unique(np.concatenate([[a, b], xs[(xs > a) & (xs < b)]]))
    vals = np.interp(pts, xs, ys)
    return float(np.sum((vals[1:] + vals[:-1]) / 2 * np.diff(pts)) / (b - a))


def pl_lipschitz(knots_x, knots_y) -> float:
    return float(np.max(np.abs(np.diff(knots_y) / np.diff(knots_x))))
