from __future__ import annotations

from dataclasses import dataclass
from typing import Any

BRACKET_SLACK = 1e-9


@dataclass
class Bracket:
    """Certified interval ``lower <= value <= upper``.

    The certificates are whatever object justifies each end: a dual
    solution, a witness pair, an explicit separable decomposition.
    """

    lower: float
    upper: float
    lower_certificate: Any = None
    upper_certificate: Any = None

    def __post_init__(self):
        if self.lower > self.upper + BRACKET_SLACK * max(1.0, abs(self.upper)):
            raise ValueError(f"bracket lower {self.lower!r} exceeds upper {self.upper!r}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def center(self) -> float:
        return (self.lower + self.upper) / 2

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack
