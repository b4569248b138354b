from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipreach.approx import ApproxRequest, BudgetExceededError, approx_expectation, approx_max
from lipreach.mdp import (
    ActionPoint,
    BoxActionSet,
    FiniteActionSet,
    StatePoint,
    UniformBoxKernel,
    UsageError,
    dirac,
    folded_uniform,
    mixture,
)


def test_finite_max_is_exact():
    a1, a2 = ActionPoint((), 1), ActionPoint((), 2)
    vals = {a1: 0.2, a2: 0.7}
    for eps in (1e-6, 0.5):
        assert approx_max(FiniteActionSet([a1, a2]), vals.get, ApproxRequest("under", eps, 1.0)) == 0.7


def test_tent_max_contracts():
    acts = BoxActionSet([0.0], [1.0])
    f = lambda a: 1 - abs(a.coords[0] - 0.5)  # noqa: E731
    under = approx_max(acts, f, ApproxRequest("under", 0.1, 1.0))
    over = approx_max(acts, f, ApproxRequest("over", 0.1, 1.0))
    assert 0.9 <= under <= 1.0
    assert 1.0 <= over <= 1.1


def test_dirac_expectation_is_exact():
    g = lambda s: s.coords[0] ** 2  # noqa: E731
    assert approx_expectation(dirac(StatePoint((0.3,))), g, ApproxRequest("under", 0.01, 1.0)) == pytest.approx(0.09)


def test_uniform_identity_expectation():
    g = lambda s: s.coords[0]  # noqa: E731
    v = approx_expectation(UniformBoxKernel([0.0], [1.0]), g, ApproxRequest("under", 0.05, 1.0))
    assert 0.45 <= v <= 0.5


def test_zigzag_expectation():
    # |frac(2x) - 0.5| * 2 has mean 0.5 on [0, 1]
    g = lambda s: abs((2 * s.coords[0]) % 1.0 - 0.5) * 2  # noqa: E731
    v = approx_expectation(UniformBoxKernel([0.0], [1.0]), g, ApproxRequest("under", 0.02, 4.0))
    assert 0.48 <= v <= 0.5
    w = approx_expectation(UniformBoxKernel([0.0], [1.0]), g, ApproxRequest("over", 0.02, 4.0))
    assert 0.5 <= w <= 0.52


def test_request_validation():
    with pytest.raises(UsageError):
        ApproxRequest("sideways", 0.1, 1.0)
    with pytest.raises(UsageError):
        ApproxRequest("under", 0.0, 1.0)


def test_budget_exceeded_reports_achievable_precision():
    acts = BoxActionSet([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(BudgetExceededError) as info:
        approx_max(acts, lambda a: 0.0, ApproxRequest("under", 1e-6, 1.0, budget=100))
    assert info.value.achieved > 1e-6


def _sandwich_case(rng):
    """Random Lipschitz integrand g(x) = 0.5 + amp * sin(freq * x + phase), L = amp * freq."""
    amp = rng.uniform(0.05, 0.5)
    freq = rng.uniform(0.5, 8.0)
    phase = rng.uniform(0, 2 * np.pi)
    lo = rng.uniform(-1, 0.5)
    width = rng.uniform(0.01, 0.5)
    c = rng.uniform(-0.9, 0.9)
    kernel = mixture(
        [
            (0.3, dirac(StatePoint((float(c),)))),
            (0.7, folded_uniform([lo + width / 2], [width / 2], [-1.0], [1.0])),
        ]
    )
    g = lambda s: 0.5 + amp * np.sin(freq * s.coords[0] + phase)  # noqa: E731
    # exact mean of sin over [a, b]
    exact = 0.0
    for kind, w, *rest in kernel.atoms():
        if kind == "point":
            exact += w * g(rest[0])
        else:
            a, b = float(rest[0][0]), float(rest[1][0])
            mean = (np.cos(freq * a + phase) - np.cos(freq * b + phase)) / (freq * (b - a))
            exact += w * (0.5 + amp * mean)
    return kernel, g, amp * freq, exact


def test_expectation_sandwich_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        kernel, g, lip, exact = _sandwich_case(rng)
        eps = float(rng.uniform(0.005, 0.1))
        under = approx_expectation(kernel, g, ApproxRequest("under", eps, lip))
        over = approx_expectation(kernel, g, ApproxRequest("over", eps, lip))
        assert exact - eps - 1e-12 <= under <= exact + 1e-12
        assert exact - 1e-12 <= over <= exact + eps + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0.1, 4.0), st.floats(0.01, 0.2))
def test_max_sandwich_property(peak, lip, eps):
    acts = BoxActionSet([0.0], [1.0])
    f = lambda a: max(0.0, 1 - lip * abs(a.coords[0] - peak))  # noqa: E731
    under = approx_max(acts, f, ApproxRequest("under", eps, lip))
    over = approx_max(acts, f, ApproxRequest("over", eps, lip))
    assert 1.0 - eps - 1e-12 <= under <= 1.0 + 1e-12
    assert 1.0 - 1e-12 <= over <= 1.0 + eps + 1e-12
