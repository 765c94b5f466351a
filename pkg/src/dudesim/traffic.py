"""Flow-level traffic: exponential idle waits and flow sizes per UE.

Each UE carries at most one flow at a time: it idles for a drawn wait,
transmits the drawn flow until its queue empties, then idles again.
Waits are quantized to whole subframes; the engine is subframe-synchronous.
"""

import math
from dataclasses import dataclass

from .errors import SchedulerError


@dataclass(frozen=True)
class FlowModel:
    mean_flow_size_bits: float = 1e6
    mean_wait_subframes: float = 100.0

    def __post_init__(self):
        if self.mean_flow_size_bits <= 0 or self.mean_wait_subframes <= 0:
            raise ValueError("flow model means must be strictly positive")


@dataclass(frozen=True)
class UeQueue:
    """Per-UE uplink state: pending bits while active, countdown while idle."""

    pending_bits: float = 0.0
    wait_remaining: int = 0

    @property
    def is_active(self) -> bool:
        return self.pending_bits > 0.0


@dataclass(frozen=True)
class FlowArrived:
    size_bits: float


@dataclass(frozen=True)
class FlowCompleted:
    pass


def draw_wait(model: FlowModel, rng) -> int:
    """Exponential idle wait, rounded up to at least one subframe."""
    return max(1, math.ceil(rng.exponential(model.mean_wait_subframes)))


def draw_flow_size(model: FlowModel, rng) -> float:
    """Exponential flow size in bits, floored at one bit."""
    return max(1.0, rng.exponential(model.mean_flow_size_bits))


def tick_queue(queue: UeQueue, served_bits: float, model: FlowModel, rng):
    """Advance one UE queue by one subframe.

    Active: drain ``served_bits``; on emptying, emit FlowCompleted and start
    a fresh idle wait.  Idle: count the wait down; at zero, draw the next
    flow and emit FlowArrived.  Serving an idle UE signals a scheduler bug.
    Returns (new queue, event or None); at most one event per tick.
    """
    if served_bits < 0:
        raise ValueError("served_bits must be >= 0")
    if queue.is_active:
        remaining = max(0.0, queue.pending_bits - served_bits)
        if remaining == 0.0:
            return UeQueue(0.0, draw_wait(model, rng)), FlowCompleted()
        return UeQueue(remaining, 0), None
    if served_bits > 0:
        raise SchedulerError("served bits granted to an idle UE")
    wait = queue.wait_remaining - 1
    if wait <= 0:
        size = draw_flow_size(model, rng)
        return UeQueue(size, 0), FlowArrived(size)
    return UeQueue(0.0, wait), None
