"""Grid cache of certified envelope bounds for fast successor expectations.

The cache covers the state box with a regular grid.  For every cell it keeps

* EL: a lower bound on the cell average of the state-level lower envelope,
* EU: an upper bound on the cell average of the state-level upper bound,
* MU[a]: an upper bound on max over the cell of the action-a upper envelope.

A record at x with lower value l contributes l - C * rms(cell, x) to EL,
where rms(cell, x) = sqrt(E|Y - x|^2) for Y uniform on the cell: the average
of l - C|Y - x| over the cell is at least that.  EU uses state-level upper
values u(x) >= max_a U(x, a) the same way, and MU uses the largest distance
from the cell to x.  All grids only move monotonically as records improve.

Cells inside a fixed-value region hold that value.  Cells that meet both the
Lipschitz region and a fixed-value region hold the worst case over the parts
they meet, where the Lipschitz part is widened by C times half the cell
diagonal so that it bounds every point of the cell, not just the average.
Cells cut by a box boundary are widened the same way when integrated.
"""
from __future__ import annotations

import math

import numpy as np

from .mdp import INSIDE, OUTSIDE, ActionPoint, FiniteActionSet, MdpModel, StatePoint
from .store import BoundStore


def cache_supported(model: MdpModel) -> bool:
    if not model.continuous or model.discrete_states or model.dim not in (1, 2):
        return False
    if not isinstance(model.constant_actions, FiniteActionSet):
        return False
    if model.partition is not None:
        free = [r for r in model.partition.regions if r.fixed_value is None]
        if len(free) != 1:
            return False
    return True


DEFAULT_RESOLUTION = {1: 2**17, 2: 512}


class EnvelopeCache:
    def __init__(self, model: MdpModel, store: BoundStore, resolution: int | None = None):
        if not cache_supported(model):
            raise ValueError("model not supported by the envelope cache")
        self.model = model
        self.store = store
        self.dim = model.dim
        n = resolution or DEFAULT_RESOLUTION[self.dim]
        self.n = np.full(self.dim, int(n))
        self.lo = model.state_lower.copy()
        self.hi = model.state_upper.copy()
        self.h = (self.hi - self.lo) / self.n
        self.centers = [self.lo[k] + (np.arange(self.n[k]) + 0.5) * self.h[k] for k in range(self.dim)]
        self.edges = [self.lo[k] + np.arange(self.n[k] + 1) * self.h[k] for k in range(self.dim)]
        self.var = float(np.sum(self.h**2) / 12.0)
        self.actions = list(model.constant_actions.actions)
        self.action_index = {a: i for i, a in enumerate(self.actions)}

        if model.partition is not None:
            free = [i for i, r in enumerate(model.partition.regions) if r.fixed_value is None][0]
            self.free_region = free
        else:
            self.free_region = -1
        self.C = model.region_pair_constant(self.free_region)
        self.slack = self.C * math.sqrt(float(np.sum(self.h**2))) / 2.0
        self._classify()

        shape = tuple(self.n)
        self.MU = np.ones((len(self.actions),) + shape)
        self.EL = np.where(self.free, 0.0, self.fixed_lo)
        self.EU = np.where(self.free, 1.0, self.fixed_hi)
        self.pure = self.free & ~self.has_fixed
        # cells meeting both kinds of region, kept as a short list
        mixed = np.nonzero((self.free & self.has_fixed).reshape(-1))[0]
        self.mixed_flat = mixed
        cidx = np.unravel_index(mixed, shape)
        self.mixed_idx = cidx
        self.mixed_centers = np.stack([self.centers[k][cidx[k]] for k in range(self.dim)], axis=1)
        self.mixed_al = np.zeros(len(mixed))
        self.mixed_au = np.ones(len(mixed))
        self._refresh_mixed()

    # -- setup -------------------------------------------------------------------
    def _cell_boxes(self):
        mesh = np.meshgrid(*[np.arange(k) for k in self.n], indexing="ij")
        idx = np.stack([m.reshape(-1) for m in mesh], axis=1)
        clo = np.stack([self.edges[k][idx[:, k]] for k in range(self.dim)], axis=1)
        chi = np.stack([self.edges[k][idx[:, k] + 1] for k in range(self.dim)], axis=1)
        return clo, chi

    def _classify(self):
        """Per cell: does it meet the Lipschitz region, and which fixed values does it meet."""
        clo, chi = self._cell_boxes()
        m = len(clo)
        fixed_lo = np.full(m, np.inf)
        fixed_hi = np.full(m, -np.inf)
        covered = np.zeros(m, dtype=bool)
        shapes = [(self.model.target, 1.0), (self.model.sink, 0.0)]
        free_shape = None
        if self.model.partition is not None:
            for i, r in enumerate(self.model.partition.regions):
                if r.fixed_value is not None:
                    shapes.append((r.shape, float(r.fixed_value)))
                elif i == self.free_region:
                    free_shape = r.shape
        for shape, value in shapes:
            c = shape.classify_boxes(clo, chi)
            c = np.where(covered, OUTSIDE, c)
            meet = c != OUTSIDE
            fixed_lo[meet] = np.minimum(fixed_lo[meet], value)
            fixed_hi[meet] = np.maximum(fixed_hi[meet], value)
            covered |= c == INSIDE
        free = ~covered
        if free_shape is not None:
            free &= free_shape.classify_boxes(clo, chi) != OUTSIDE
        shape = tuple(self.n)
        self.free = free.reshape(shape)
        self.fixed_lo = fixed_lo.reshape(shape)
        self.fixed_hi = fixed_hi.reshape(shape)
        self.has_fixed = np.isfinite(self.fixed_lo)

    # -- maintenance ----------------------------------------------------------------
    def _refresh_mixed(self):
        if not len(self.mixed_flat):
            return
        flo = self.fixed_lo[self.mixed_idx]
        fhi = self.fixed_hi[self.mixed_idx]
        self.EL[self.mixed_idx] = np.minimum(flo, np.maximum(0.0, self.mixed_al - self.slack))
        self.EU[self.mixed_idx] = np.maximum(fhi, np.minimum(1.0, self.mixed_au + self.slack))

    def _mixed_rms(self, x):
        d2 = np.sum((self.mixed_centers - x) ** 2, axis=1)
        return np.sqrt(d2 + self.var)

    def _window(self, x: np.ndarray, radius: float):
        win = []
        offs = []
        for k in range(self.dim):
            i0 = max(0, int(math.floor((x[k] - radius - self.lo[k]) / self.h[k])))
            i1 = min(int(self.n[k]) - 1, int(math.floor((x[k] + radius - self.lo[k]) / self.h[k])))
            if i1 < i0:
                return None, None
            win.append(slice(i0, i1 + 1))
            offs.append(self.centers[k][i0 : i1 + 1] - x[k])
        return tuple(win), offs

    def _rms(self, offs):
        if self.dim == 1:
            return np.sqrt(offs[0] ** 2 + self.var)
        return np.sqrt(offs[0][:, None] ** 2 + offs[1][None, :] ** 2 + self.var)

    def _maxdist(self, offs):
        a = [np.abs(o) + self.h[k] / 2 for k, o in enumerate(offs)]
        if self.dim == 1:
            return a[0]
        return np.sqrt(a[0][:, None] ** 2 + a[1][None, :] ** 2)

    def cell_of(self, x) -> tuple:
        return tuple(
            min(int(self.n[k]) - 1, max(0, int((x[k] - self.lo[k]) / self.h[k]))) for k in range(self.dim)
        )

    def apply_record(self, s: StatePoint, a: ActionPoint, lower: float, upper: float):
        """Fold an updated record (state in the Lipschitz region) into the grids."""
        x = np.asarray(s.coords, dtype=float)
        C = self.C
        if C <= 0:
            return
        touched_mixed = False
        if lower > 0:
            win, offs = self._window(x, lower / C)
            if win is not None:
                el = self.EL[win]
                np.maximum(el, lower - C * self._rms(offs), out=el, where=self.pure[win])
                if len(self.mixed_flat):
                    np.maximum(self.mixed_al, lower - C * self._mixed_rms(x), out=self.mixed_al)
                    touched_mixed = True
        ai = self.action_index[a]
        if upper < 1:
            win, offs = self._window(x, (1 - upper) / C)
            if win is not None:
                mu = self.MU[ai][win]
                np.minimum(mu, upper + C * self._maxdist(offs), out=mu)
        # state-level upper value at x: the record bounds action a, the grids bound the rest
        cell = self.cell_of(x)
        state_upper = upper
        for bi in range(len(self.actions)):
            if bi != ai:
                state_upper = max(state_upper, float(self.MU[bi][cell]))
        if state_upper < 1:
            win, offs = self._window(x, (1 - state_upper) / C)
            if win is not None:
                eu = self.EU[win]
                np.minimum(eu, state_upper + C * self._rms(offs), out=eu, where=self.pure[win])
                if len(self.mixed_flat):
                    np.minimum(self.mixed_au, state_upper + C * self._mixed_rms(x), out=self.mixed_au)
                    touched_mixed = True
        if touched_mixed:
            self._refresh_mixed()

    # -- queries -------------------------------------------------------------------
    def action_upper(self, s: StatePoint) -> np.ndarray:
        """Per-action upper bounds at s (cell-wide, so valid for every point of the cell)."""
        cell = self.cell_of(s.coords)
        return self.MU[(slice(None),) + cell].copy()

    def _axis_overlap(self, k, a, b):
        i0 = max(0, int(math.floor((a - self.lo[k]) / self.h[k])))
        i1 = min(int(self.n[k]) - 1, int(math.ceil((b - self.lo[k]) / self.h[k])) - 1)
        i1 = max(i1, i0)
        e = self.edges[k]
        over = np.minimum(b, e[i0 + 1 : i1 + 2]) - np.maximum(a, e[i0 : i1 + 1])
        over = np.maximum(over, 0.0)
        frac = over / (b - a)
        partial = over < self.h[k] * (1 - 1e-9)
        return slice(i0, i1 + 1), frac, partial

    def _widen(self, el, eu, pure):
        """Cell-wide bounds for cells only partly covered by a box."""
        return (
            np.where(pure, np.maximum(0.0, el - self.slack), el),
            np.where(pure, np.minimum(1.0, eu + self.slack), eu),
        )

    def box_expectation(self, lo, hi) -> tuple[float, float]:
        """Certified (under, over) bounds on E[V] for the uniform distribution on [lo, hi]."""
        parts = [self._axis_overlap(k, lo[k], hi[k]) for k in range(self.dim)]
        if self.dim == 1:
            sl, f, partial = parts[0]
            el = self.EL[sl].copy()
            eu = self.EU[sl].copy()
            if partial.any():
                el[partial], eu[partial] = self._widen(el[partial], eu[partial], self.pure[sl][partial])
            return float(f @ el), float(f @ eu)
        (s0, f0, p0), (s1, f1, p1) = parts
        el = self.EL[s0, s1].copy()
        eu = self.EU[s0, s1].copy()
        pure = self.pure[s0, s1]
        rows = np.nonzero(p0)[0]
        if len(rows):
            el[rows, :], eu[rows, :] = self._widen(el[rows, :], eu[rows, :], pure[rows, :])
        cols = np.nonzero(p1)[0]
        if len(cols):
            # corner cells were widened with the rows; widening twice stays sound
            el[:, cols], eu[:, cols] = self._widen(el[:, cols], eu[:, cols], pure[:, cols])
        return float(f0 @ el @ f1), float(f0 @ eu @ f1)
