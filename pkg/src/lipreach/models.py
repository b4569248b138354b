"""Built-in models: 1D gravity, 2D navigation, frequency chain, small finite models."""
from __future__ import annotations

import math

import numpy as np

from .mdp import (
    ActionPoint,
    BallShape,
    BoxShape,
    DiscreteKernel,
    EmptyShape,
    FiniteActionSet,
    MdpModel,
    Partition,
    Region,
    StatePoint,
    TagShape,
    UniformBoxKernel,
    UsageError,
    dirac,
    folded_uniform,
    mixture,
)
from .oracle import FiniteMdp, sine_squared, triangle


def _tag_actions(names) -> FiniteActionSet:
    return FiniteActionSet([ActionPoint((), i) for i in range(len(names))], list(names))


# ---------------------------------------------------------------------------
# 1D gravity


GRAVITY_ACTIONS = ("idle", "left", "right", "emergency")


def gravity_1d(
    band: float = 0.05,
    noise: float = 0.05,
    thrust: float = 0.05,
    emergency_thrust: float = 0.2,
    emergency_noise: float = 0.04,
    explode: float = 0.2,
    target_pull: float = 0.02,
    sink_pull: float = 0.15,
    pull_cap: float = 0.15,
    initial: float = 0.0,
) -> MdpModel:
    """Spacecraft on [-1, 1] between a target body at +1 and a sink body at -1.

    Each step the craft moves by its thrust plus the gravitational pulls
    coef / distance^2 of both bodies (each pull capped at `pull_cap`), and the
    outcome is uniform within `noise` of that point (centre kept inside the
    box).  Emergency thrust explodes with probability `explode` (the wreck
    lands at -1); otherwise it moves by `emergency_thrust` with noise
    `emergency_noise`.  Target band [1 - band, 1], sink band [-1, -1 + band].

    Lipschitz constant: the centre map s -> s + thrust + pull(s) has slope at
    most K = 1 + max|pull'|, and two uniform kernels of half-width w whose
    centres differ by d are d / (2 w) apart in total variation.  Values lie
    in [0, 1], so |V(x, a) - V(y, a)| <= K |x - y| / (2 w) for every action,
    and the emergency mixture gives (1 - explode) K / (2 w_e).
    """
    params = dict(
        band=band,
        noise=noise,
        thrust=thrust,
        emergency_thrust=emergency_thrust,
        emergency_noise=emergency_noise,
        explode=explode,
        target_pull=target_pull,
        sink_pull=sink_pull,
        pull_cap=pull_cap,
        initial=initial,
    )
    if not (0 < noise < 0.5 and 0 < emergency_noise < 0.5 and 0 <= explode < 1):
        raise UsageError("invalid gravity parameters")

    def pull(s: float) -> float:
        dt = 1.0 - s
        dr = 1.0 + s
        to_t = pull_cap if dt <= 0 else min(pull_cap, target_pull / dt**2)
        to_r = pull_cap if dr <= 0 else min(pull_cap, sink_pull / dr**2)
        return to_t - to_r

    thrusts = (0.0, -thrust, thrust)
    sink_point = StatePoint((-1.0,))

    def kernel(s: StatePoint, a: ActionPoint):
        x = s.coords[0]
        if a.discrete_tag == 3:
            c = min(max(x + emergency_thrust + pull(x), -1 + emergency_noise), 1 - emergency_noise)
            moved = UniformBoxKernel([c - emergency_noise], [c + emergency_noise])
            return mixture([(explode, dirac(sink_point)), (1 - explode, moved)])
        c = min(max(x + thrusts[a.discrete_tag] + pull(x), -1 + noise), 1 - noise)
        return UniformBoxKernel([c - noise], [c + noise])

    slope = _max_pull_slope(target_pull, pull_cap) + _max_pull_slope(sink_pull, pull_cap)
    k = 1.0 + slope
    c_state = max(k / (2 * noise), (1 - explode) * k / (2 * emergency_noise))
    c_state = math.ceil(c_state * 100) / 100
    target = BoxShape([1 - band], [1.0])
    sink = BoxShape([-1.0], [-1 + band])
    partition = Partition(
        [
            Region("target", target, fixed_value=1.0),
            Region("sink", sink, fixed_value=0.0),
            Region("interior", None, c_state, max(c_state, 1.0)),
        ]
    )
    notes = (
        f"K = 1 + {slope:.4f}; C_S = max(K/(2*{noise}), {1 - explode}*K/(2*{emergency_noise})) "
        f"rounded up = {c_state}; C_x = max(C_S, 1) since distinct actions are 1 apart"
    )
    return MdpModel(
        name="gravity-1d",
        state_lower=[-1.0],
        state_upper=[1.0],
        actions=_tag_actions(GRAVITY_ACTIONS),
        kernel=kernel,
        target=target,
        sink=sink,
        lipschitz_state=c_state,
        lipschitz_pair=max(c_state, 1.0),
        initial_state=StatePoint((initial,)),
        partition=partition,
        params=params,
        notes=notes,
    )


def _max_pull_slope(coef: float, cap: float) -> float:
    """Largest |d/dd min(cap, coef/d^2)|: attained where the cap stops binding."""
    if coef <= 0:
        return 0.0
    d = math.sqrt(coef / cap)
    return 2 * coef / d**3


# ---------------------------------------------------------------------------
# 2D navigation


NAVIGATION_ACTIONS = ("north", "east")


def navigation_2d(
    step: float = 0.15,
    noise: float = 0.2,
    radius: float = 0.05,
    sink_pull: float = 0.25,
    sink_range: float = 0.3,
    capture: float = 0.1,
    dock: float = 0.8,
    dock_range: float = 0.4,
    initial=(0.3125, 0.1875),
) -> MdpModel:
    """Point robot on [0, 1]^2 moving north or east towards a disk at (1, 1).

    A step moves by `step` in the chosen direction, then a tent-shaped
    attraction pulls towards the sink disk centre (0.5, 0.5) with strength
    `sink_pull` fading to zero at distance `sink_range`, then a capture drift
    moves the point `capture` closer to (1, 1).  The outcome is uniform in a
    square of half-width `noise` around that point, reflected at the walls.
    Close to (1, 1) a docking beacon takes over: with probability
    dock * (1 - |s - (1, 1)| / dock_range), clipped at 0, the robot lands on
    (1, 1) directly.  Target: open disk of radius `radius` at (1, 1); sink:
    same at (0.5, 0.5).

    Lipschitz constant: the tent attraction has slope at most `sink_pull`,
    the capture drift (a proximal step towards (1, 1)) and the clipping are
    non-expansive, reflection does not increase total variation, and two
    uniform squares of half-width w whose centres differ by d are at most
    sqrt(2) d / (2 w) apart in total variation.  The docking weight adds its
    slope dock / dock_range.
    """
    params = dict(
        step=step, noise=noise, radius=radius, sink_pull=sink_pull, sink_range=sink_range, capture=capture,
        dock=dock, dock_range=dock_range, initial=list(initial),
    )
    target_c = np.array([1.0, 1.0])
    sink_c = np.array([0.5, 0.5])
    moves = (np.array([0.0, step]), np.array([step, 0.0]))

    def centre(x: np.ndarray, a: int) -> np.ndarray:
        y = x + moves[a]
        v = sink_c - x
        dv = float(np.linalg.norm(v))
        if dv < sink_range:
            y = y + sink_pull * v * (1.0 - dv / sink_range)
        u = target_c - y
        du = float(np.linalg.norm(u))
        y = target_c.copy() if du <= capture else y + u * (capture / du)
        return np.clip(y, 0.0, 1.0)

    target_point = StatePoint((1.0, 1.0))

    def kernel(s: StatePoint, a: ActionPoint):
        x = np.asarray(s.coords)
        moved = folded_uniform(centre(x, a.discrete_tag), noise, [0.0, 0.0], [1.0, 1.0])
        p = dock * max(0.0, 1.0 - float(np.linalg.norm(target_c - x)) / dock_range)
        return mixture([(p, dirac(target_point)), (1.0 - p, moved)])

    k = 1.0 + sink_pull
    c_state = math.ceil((dock / dock_range + math.sqrt(2) * k / (2 * noise)) * 100) / 100
    target = BallShape(target_c, radius)
    sink = BallShape(sink_c, radius)
    partition = Partition(
        [
            Region("target", target, fixed_value=1.0),
            Region("sink", sink, fixed_value=0.0),
            Region("free", None, c_state, max(c_state, 1.0)),
        ]
    )
    notes = (
        f"K = 1 + {sink_pull}; C_S = {dock}/{dock_range} + sqrt(2)*K/(2*{noise}) rounded up = {c_state}; "
        "C_x = max(C_S, 1)"
    )
    return MdpModel(
        name="navigation-2d",
        state_lower=[0.0, 0.0],
        state_upper=[1.0, 1.0],
        actions=_tag_actions(NAVIGATION_ACTIONS),
        kernel=kernel,
        target=target,
        sink=sink,
        lipschitz_state=c_state,
        lipschitz_pair=max(c_state, 1.0),
        initial_state=StatePoint(tuple(float(v) for v in initial)),
        partition=partition,
        params=params,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Frequency chain

PLUS_TAG = 1
MINUS_TAG = 2


def frequency_chain(k: int = 4, f: str = "triangle", bad_constant: float | None = None, initial: float = 0.3):
    """Markov chain on [0, 1] whose value oscillates k times.

    For s > 1/k the chain moves deterministically to s - 1/k; for s <= 1/k it
    moves to the absorbing target s+ with probability f(s k) and to the
    absorbing sink s- otherwise.  The value is f applied to the phase of
    s k, whose Lipschitz constant is k * L_f.  With `bad_constant` the model
    declares that (wrong) constant instead.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise UsageError("k must be a positive integer")
    if f == "triangle":
        fn, lf = triangle, 2.0
    elif f == "sine":
        fn, lf = sine_squared, math.pi
    else:
        raise UsageError(f"unknown frequency function {f!r}")
    correct = k * lf
    c = correct if bad_constant is None else float(bad_constant)
    plus = StatePoint((0.0,), PLUS_TAG)
    minus = StatePoint((0.0,), MINUS_TAG)

    def kernel(s: StatePoint, a: ActionPoint):
        if s.discrete_tag is not None:
            return dirac(s)
        x = s.coords[0]
        if x > 1.0 / k:
            return dirac(StatePoint((x - 1.0 / k,)))
        p = float(np.clip(fn(x * k), 0.0, 1.0))
        if p >= 1.0:
            return dirac(plus)
        if p <= 0.0:
            return dirac(minus)
        return DiscreteKernel([plus, minus], [p, 1.0 - p])

    return MdpModel(
        name="frequency-chain",
        state_lower=[0.0],
        state_upper=[1.0],
        actions=_tag_actions(("step",)),
        kernel=kernel,
        target=TagShape([PLUS_TAG]),
        sink=TagShape([MINUS_TAG]),
        lipschitz_state=c,
        lipschitz_pair=max(c, 1.0),
        initial_state=StatePoint((initial,)),
        discrete_states=[PLUS_TAG, MINUS_TAG],
        params=dict(k=int(k), f=f, bad_constant=bad_constant, initial=initial),
        notes=f"value is f(frac(s k)); correct constant k * L_f = {correct:g}; declared {c:g}",
    )


# ---------------------------------------------------------------------------
# Finite models


def finite_model(m: FiniteMdp, name: str = "finite", params: dict | None = None) -> MdpModel:
    """Wrap an explicit finite MDP as a model under the discrete metric.

    Distinct states are 1 apart, so C = 1 is valid for any value in [0, 1].
    State i carries tag i; actions of state s are tags 0..n_s - 1.
    """
    rows: dict[tuple[int, int], DiscreteKernel] = {}
    n_actions = np.zeros(m.n_states, dtype=int)
    for p in range(m.n_pairs):
        s, a = int(m.pair_state[p]), int(m.pair_action[p])
        lo, hi = m.row_ptr[p], m.row_ptr[p + 1]
        succ = [StatePoint((), int(t)) for t in m.cols[lo:hi]]
        rows[(s, a)] = DiscreteKernel(succ, m.probs[lo:hi])
        n_actions[s] = max(n_actions[s], a + 1)
    names = m.action_names or None
    sets = {}
    for s in range(m.n_states):
        acts = [ActionPoint((), a) for a in range(n_actions[s]) if (s, a) in rows]
        labels = [names[a.discrete_tag] if names and a.discrete_tag < len(names) else f"a{a.discrete_tag}" for a in acts]
        sets[s] = FiniteActionSet(acts, labels)
    uniform = len({tuple(x.actions) for x in sets.values()}) == 1

    def actions(s: StatePoint):
        return sets[s.discrete_tag]

    def kernel(s: StatePoint, a: ActionPoint):
        return rows[(s.discrete_tag, a.discrete_tag)]

    target = TagShape(np.nonzero(m.target)[0].tolist())
    sink = TagShape(np.nonzero(m.sink)[0].tolist())
    return MdpModel(
        name=name,
        state_lower=[],
        state_upper=[],
        actions=sets[0] if uniform else actions,
        kernel=kernel,
        target=target if m.target.any() else EmptyShape(),
        sink=sink if m.sink.any() else EmptyShape(),
        lipschitz_state=1.0,
        lipschitz_pair=1.0,
        initial_state=StatePoint((), int(m.initial)),
        discrete_states=range(m.n_states),
        continuous=False,
        params=params or {"n_states": m.n_states, "rows": _row_digest(m)},
        notes="discrete metric: distinct states are 1 apart, so C = 1 bounds any [0, 1] value",
        sink_representative=StatePoint((), int(np.nonzero(m.sink)[0][0])) if m.sink.any() else None,
    )


def _row_digest(m: FiniteMdp) -> str:
    import hashlib

    h = hashlib.sha256()
    for arr in (m.pair_state, m.pair_action, m.row_ptr, m.cols):
        h.update(np.asarray(arr, dtype=np.int64).tobytes())
    h.update(np.round(m.probs, 15).tobytes())
    h.update(m.target.tobytes())
    h.update(m.sink.tobytes())
    return h.hexdigest()[:16]


def random_finite_mdp(seed: int, n_states: int = 8, n_actions: int = 3) -> FiniteMdp:
    """Random absorbing finite MDP.

    The last state is the target and the one before it the sink, both
    self-looping.  Every other row sends a fraction q in [0.01, 0.3] of its
    mass straight to target or sink and spreads the rest over a random support
    with Dirichlet weights, so every end component lies in target or sink.
    """
    if n_states < 3 or n_actions < 1:
        raise UsageError("need at least 3 states and 1 action")
    rng = np.random.default_rng(seed)
    t, r = n_states - 1, n_states - 2
    rows = [(t, 0, {t: 1.0}), (r, 0, {r: 1.0})]
    for s in range(n_states - 2):
        for a in range(n_actions):
            q = rng.uniform(0.01, 0.3)
            k = int(rng.integers(1, min(4, n_states) + 1))
            support = rng.choice(n_states, size=k, replace=False)
            weights = rng.dirichlet(np.ones(k)) * (1 - q)
            to_t = rng.uniform()
            dist: dict[int, float] = {}
            for j, w in zip(support.tolist(), weights.tolist()):
                dist[j] = dist.get(j, 0.0) + w
            dist[t] = dist.get(t, 0.0) + q * to_t
            dist[r] = dist.get(r, 0.0) + q * (1 - to_t)
            total = sum(dist.values())
            rows.append((s, a, {j: p / total for j, p in dist.items()}))
    return FiniteMdp.from_rows(n_states, rows, [t], [r], 0)


def random_finite(seed: int, n_states: int = 8, n_actions: int = 3) -> MdpModel:
    m = random_finite_mdp(seed, n_states, n_actions)
    return finite_model(m, "random-finite", {"seed": seed, "n_states": n_states, "n_actions": n_actions})


def two_state_chain(p: float = 0.5) -> MdpModel:
    """s0 moves to the target with probability p and to an absorbing sink otherwise."""
    m = FiniteMdp.from_rows(3, [(0, 0, {1: p, 2: 1 - p}), (1, 0, {1: 1.0}), (2, 0, {2: 1.0})], [1], [2], 0)
    return finite_model(m, "two-state-chain", {"p": p})


def self_loop_chain(p: float = 0.5) -> MdpModel:
    """s0 reaches the target with probability p per step and otherwise stays (no sink)."""
    m = FiniteMdp.from_rows(2, [(0, 0, {1: p, 0: 1 - p}), (1, 0, {1: 1.0})], [1], [], 0)
    return finite_model(m, "self-loop-chain", {"p": p})


def retry_loop(p_target: float = 0.3, p_sink: float = 0.1) -> MdpModel:
    """Three-state loop: each round reaches target w.p. p_target, sink w.p. p_sink, else retries."""
    rest = 1.0 - p_target - p_sink
    rows = [(0, 0, {1: 1.0}), (1, 0, {2: p_target, 3: p_sink, 0: rest}), (2, 0, {2: 1.0}), (3, 0, {3: 1.0})]
    m = FiniteMdp.from_rows(4, rows, [2], [3], 0)
    return finite_model(m, "retry-loop", {"p_target": p_target, "p_sink": p_sink})


CATALOG = {
    "gravity-1d": gravity_1d,
    "navigation-2d": navigation_2d,
    "frequency-chain": frequency_chain,
    "random-finite": random_finite,
    "two-state-chain": two_state_chain,
    "self-loop-chain": self_loop_chain,
    "retry-loop": retry_loop,
}
