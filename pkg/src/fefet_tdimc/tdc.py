"""Flash time-to-digital converter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class BubbleError(ValueError):
    """Thermometer code with a 1 after a 0; carries the raw bits."""

    def __init__(self, bits):
        self.bits = tuple(bits)
        super().__init__(f"bubble in thermometer code {''.join(map(str, self.bits))}")


@dataclass(frozen=True)
class TdcConfig:
    n_refs: int = 3
    step_s: float = 550e-12
    shift_s: float = 0.0
    tie_rule: str = "reference_wins"

    def __post_init__(self):
        if self.n_refs < 1:
            raise ValueError("n_refs must be >= 1")
        if not self.step_s > 0:
            raise ValueError("step_s must be positive")
        if self.tie_rule != "reference_wins":
            raise ValueError(f"unsupported tie rule {self.tie_rule!r}")


@dataclass(frozen=True)
class ThermometerCode:
    bits: tuple[int, ...]

    @property
    def is_valid(self) -> bool:
        return all(a >= b for a, b in zip(self.bits, self.bits[1:]))

    def __str__(self):
        return "".join(str(b) for b in self.bits)

    def __len__(self):
        return len(self.bits)


def generate_references(cfg: TdcConfig) -> list[float]:
    return [cfg.shift_s + (i + 1) * cfg.step_s for i in range(cfg.n_refs)]


def perturb_references(refs: Sequence[float], sigma: float, rng: np.random.Generator) -> list[float]:
    """Independent Gaussian error on each reference edge (RDL mismatch)."""
    return list(np.asarray(refs, dtype=float) + rng.normal(0.0, 1.0, len(refs)) * sigma)


def digitize(t_edge: float, refs: Sequence[float], check_sorted: bool = True) -> ThermometerCode:
    """Sample the edge against every reference; a tie samples as 0.

    Noisy references may be out of order; pass ``check_sorted=False`` to
    sample them anyway (the code may then contain bubbles).
    """
    refs = list(refs)
    if check_sorted and any(b < a for a, b in zip(refs, refs[1:])):
        raise ValueError("references must be sorted ascending")
    return ThermometerCode(tuple(int(t_edge > r) for r in refs))


def therm_to_binary(code: ThermometerCode) -> int:
    if not code.is_valid:
        raise BubbleError(code.bits)
    return sum(code.bits)
