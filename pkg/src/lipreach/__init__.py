"""Anytime certified bounds on maximal reachability probabilities in continuous MDPs."""
from __future__ import annotations

from .mdp import (
    ActionPoint,
    BallShape,
    BoxActionSet,
    BoxShape,
    FiniteActionSet,
    MdpModel,
    Partition,
    Region,
    StatePoint,
    TagShape,
    UsageError,
    discount_transform,
    dist_action,
    dist_pair,
    dist_state,
)
from .store import BoundCrossingError, BoundStore

__version__ = "0.1.0"
