"""Plain report records shared by the verification routines."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ConditionReport:
    """Outcome of one hypothesis check.

    ``worst`` is the worst observed margin in the check's own units (a ratio
    for inequality checks, an error for identities); ``detail`` is a one-line
    human summary.
    """

    name: str
    passed: bool
    worst: float = 0.0
    detail: str = ""
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<14} {status}  worst={self.worst:.12g}  {self.detail}"
