"""Certified one-sided approximations of action maxima and successor expectations.

Both oracles use deterministic nets: a Lipschitz function sampled on a net
with covering radius r is within L*r of its value anywhere, which yields
guaranteed under- and over-approximations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mdp import ActionPoint, ActionSet, BoxActionSet, FiniteActionSet, Kernel, StatePoint, UsageError

DEFAULT_BUDGET = 1_000_000


class BudgetExceededError(RuntimeError):
    """The requested precision needs more evaluations than the budget allows."""

    def __init__(self, requested: float, achieved: float, evaluations: int):
        self.requested = requested
        self.achieved = achieved
        self.evaluations = evaluations
        super().__init__(
            f"precision {requested:g} needs {evaluations} evaluations; best within budget is {achieved:g}"
        )


@dataclass(frozen=True)
class ApproxRequest:
    direction: str  # "under" or "over"
    precision: float
    lipschitz_bound: float
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.direction not in ("under", "over"):
            raise UsageError(f"direction must be 'under' or 'over', not {self.direction!r}")
        if not self.precision > 0:
            raise UsageError("precision must be positive")
        if self.lipschitz_bound < 0:
            raise UsageError("lipschitz_bound must be nonnegative")


def approx_max(actions: ActionSet, f: Callable[[ActionPoint], float], req: ApproxRequest) -> float:
    """Certified approximation of max_a f(a).

    Finite sets are enumerated exactly.  For a box, f is evaluated on a net of
    covering radius precision / L; the net maximum is an under-approximation
    and net maximum + L * radius an over-approximation.  The result is not
    clamped.
    """
    if isinstance(actions, FiniteActionSet):
        return max(float(f(a)) for a in actions)
    if not isinstance(actions, BoxActionSet):
        raise UsageError(f"unsupported action set {type(actions).__name__}")
    lip = req.lipschitz_bound
    if lip == 0:
        return float(f(actions.center()))
    spacing = req.precision / lip
    size = actions.net_size(spacing)
    if size > req.budget:
        achieved = _achievable_max_precision(actions, lip, req.budget)
        raise BudgetExceededError(req.precision, achieved, size)
    net = actions.net(spacing)
    if not net:
        raise UsageError("empty action net")
    best = max(float(f(a)) for a in net)
    return best + lip * spacing if req.direction == "over" else best


def _achievable_max_precision(actions: BoxActionSet, lip: float, budget: int) -> float:
    lo, hi = 1e-300, 1e300
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if actions.net_size(mid / lip) <= budget:
            hi = mid
        else:
            lo = mid
    return hi


class CellIntegrand:
    """Integrand that supplies certified bounds over whole cells.

    Subclasses implement `point(s)` (value at a single state) and
    `cells(lo, hi, direction)` (per-cell lower or upper bounds of the integrand
    over closed boxes).  Used when the integrand is only piecewise Lipschitz.
    """

    def point(self, s: StatePoint) -> float:
        raise NotImplementedError

    def cells(self, lo: np.ndarray, hi: np.ndarray, direction: str) -> np.ndarray:
        raise NotImplementedError


class LipschitzIntegrand(CellIntegrand):
    """Wraps a plain Lipschitz function with values in [0, 1]."""

    def __init__(self, g: Callable[[StatePoint], float], lipschitz: float, batch: Callable | None = None):
        self.g = g
        self.lipschitz = float(lipschitz)
        self.batch = batch

    def point(self, s):
        return float(self.g(s))

    def cells(self, lo, hi, direction):
        centers = (lo + hi) / 2
        radius = np.sqrt(np.sum(((hi - lo) / 2) ** 2, axis=1))
        if self.batch is not None:
            vals = np.asarray(self.batch(centers), dtype=float)
        else:
            vals = np.array([self.g(StatePoint(tuple(c))) for c in centers])
        if direction == "under":
            return np.maximum(0.0, vals - self.lipschitz * radius)
        return np.minimum(1.0, vals + self.lipschitz * radius)


def dyadic_level(extent: np.ndarray, lipschitz: float, precision: float) -> int:
    """Smallest j such that 2^j cells per axis keep lipschitz * cell radius <= precision / 2."""
    diag = float(np.linalg.norm(extent))
    if lipschitz * diag <= 0:
        return 0
    return max(0, math.ceil(math.log2(lipschitz * diag / precision)))


def dyadic_cells(lo: np.ndarray, hi: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    n = 2**level
    d = len(lo)
    edges = [np.linspace(lo[k], hi[k], n + 1) for k in range(d)]
    idx = np.stack(np.meshgrid(*[np.arange(n)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    clo = np.stack([edges[k][idx[:, k]] for k in range(d)], axis=1)
    chi = np.stack([edges[k][idx[:, k] + 1] for k in range(d)], axis=1)
    return clo, chi


def approx_expectation(kernel: Kernel, g, req: ApproxRequest) -> float:
    """Certified approximation of E[g] under `kernel`.

    `g` is either a callable StatePoint -> [0, 1] (Lipschitz with
    req.lipschitz_bound) or a CellIntegrand.  Discrete atoms are summed
    exactly.  A uniform box is split into 2^j cells per axis with the cell
    radius small enough that the Lipschitz remainder stays within half the
    precision; each cell contributes its certified bound times its mass.
    Each mixture component receives the full precision, so the weighted total
    error stays within it.
    """
    integrand = g if isinstance(g, CellIntegrand) else LipschitzIntegrand(g, req.lipschitz_bound)
    lip = req.lipschitz_bound
    total = 0.0
    for atom in kernel.atoms():
        if atom[0] == "point":
            total += atom[1] * integrand.point(atom[2])
            continue
        _, w, lo, hi = atom
        level = dyadic_level(hi - lo, lip, req.precision)
        count = (2**level) ** len(lo)
        if count > req.budget:
            achievable = lip * float(np.linalg.norm(hi - lo))
            per_axis = int(math.floor(req.budget ** (1.0 / len(lo))))
            achieved = achievable / max(1, 2 ** int(math.floor(math.log2(max(1, per_axis)))))
            raise BudgetExceededError(req.precision, achieved, count)
        clo, chi = dyadic_cells(lo, hi, level)
        vals = integrand.cells(clo, chi, req.direction)
        total += w * float(np.mean(vals))
    return total
