"""Simulated-clock accounting shared by the slice loop and the verifier.

The clock charges only executor-reported seconds (latencies or penalties);
algorithmic overhead costs zero simulated time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .executor import EvalOutcome, EvalRequest


class BudgetExhausted(Exception):
    """Raised when an evaluation would start after the budget ran out."""


class Clock:
    def __init__(self, budget: float):
        if not budget > 0:
            raise ValueError("budget must be positive")
        self.budget = budget
        self.elapsed = 0.0

    @property
    def exhausted(self) -> bool:
        return self.elapsed >= self.budget

    def charge(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot charge negative time")
        self.elapsed += seconds


@dataclass
class EvalContext:
    """Executor plus clock plus an event hook for trace emission."""

    executor: object
    clock: Clock
    on_event: Callable[[str, EvalRequest, EvalOutcome], None] | None = None
    evaluations: int = field(default=0)

    def evaluate(self, req: EvalRequest, event: str) -> EvalOutcome:
        if self.clock.exhausted:
            raise BudgetExhausted
        outcome = self.executor.evaluate(req)
        self.clock.charge(outcome.total)
        self.evaluations += 1
        if self.on_event is not None:
            self.on_event(event, req, outcome)
        return outcome
