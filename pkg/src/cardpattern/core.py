"""Domain types, configuration and shared numeric conventions."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np


class CardPatternError(Exception):
    """Base class for every error raised by the package."""


class NonPositiveAmount(CardPatternError):
    def __init__(self, index: int, amount: float):
        super().__init__(f"transaction {index} has non-positive amount {amount!r}")
        self.index = index
        self.amount = amount


class SeriesTooShort(CardPatternError):
    pass


class ZeroVariance(CardPatternError):
    pass


class InvalidValue(CardPatternError, ValueError):
    pass


class Label(str, enum.Enum):
    LEGITIMATE = "L"
    FRAUDULENT = "F"


@dataclass(frozen=True)
class Transaction:
    amount: float
    region: int
    index: int

    def __post_init__(self):
        if not self.amount > 0:
            raise NonPositiveAmount(self.index, self.amount)
        if int(self.region) != self.region or self.region < 1:
            raise InvalidValue(f"region must be an integer >= 1, got {self.region!r}")
        if self.index < 1:
            raise InvalidValue(f"index must be >= 1, got {self.index!r}")


@dataclass(frozen=True)
class TransactionSequence:
    """Ordered transactions; `label` describes the trailing test block."""

    transactions: tuple
    label: Label = Label.LEGITIMATE

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        for pos, t in enumerate(self.transactions, start=1):
            if t.index != pos:
                raise InvalidValue(f"indices must be contiguous 1..N; position {pos} has index {t.index}")

    @classmethod
    def from_columns(cls, amounts: Sequence[float], regions: Sequence[int],
                     label: Label = Label.LEGITIMATE) -> "TransactionSequence":
        if len(amounts) != len(regions):
            raise InvalidValue("amounts and regions differ in length")
        txs = [Transaction(float(a), int(r), i) for i, (a, r) in enumerate(zip(amounts, regions), start=1)]
        return cls(tuple(txs), label)

    def __len__(self):
        return len(self.transactions)

    def __getitem__(self, item):
        return self.transactions[item]

    @property
    def amounts(self) -> np.ndarray:
        return np.array([t.amount for t in self.transactions], dtype=float)

    @property
    def regions(self) -> list:
        return [t.region for t in self.transactions]


@dataclass(frozen=True)
class ConfidencePoint:
    """Region confidence `x` and amount confidence `y`, both on 0..100."""

    x: float
    y: float

    def __post_init__(self):
        for name in ("x", "y"):
            v = getattr(self, name)
            if not (0.0 <= v <= 100.0):
                raise InvalidValue(f"confidence {name}={v!r} outside [0, 100]")


@dataclass(frozen=True)
class ModelConfig:
    p: int = 5
    d: int = 0
    sd_multiplier: float = 2.0
    theta_ev: float = 0.6
    theta_xy: float = 40.0
    window: Optional[int] = None
    row_len: int = 10
    seed: int = 0
    lag_padding: str = "drop"
    evp_side: str = "folded"
    center: bool = False
    refit: str = "step"
    gp_restarts: int = 10
    thetas: tuple = field(default=(10.0, 20.0, 30.0, 40.0, 50.0))

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if self.p < 1:
            raise InvalidValue("p must be >= 1")
        if self.d < 0:
            raise InvalidValue("d must be >= 0")
        if not 0.0 <= self.theta_ev <= 1.0:
            raise InvalidValue("theta_ev must lie in [0, 1]")
        if not 0.0 <= self.theta_xy <= 100.0:
            raise InvalidValue("theta_xy must lie in [0, 100]")
        if self.row_len < 1:
            raise InvalidValue("row_len must be >= 1")
        if self.sd_multiplier <= 0:
            raise InvalidValue("sd_multiplier must be positive")
        if self.window is not None and self.window < 2:
            raise InvalidValue("window must be >= 2")
        if self.lag_padding not in ("drop", "zero"):
            raise InvalidValue(f"unknown lag_padding {self.lag_padding!r}")
        if self.evp_side not in ("folded", "upper"):
            raise InvalidValue(f"unknown evp_side {self.evp_side!r}")
        if self.refit not in ("step", "once"):
            raise InvalidValue(f"unknown refit policy {self.refit!r}")
        if self.gp_restarts < 1:
            raise InvalidValue("gp_restarts must be >= 1")
        if any(not 0.0 <= t <= 100.0 for t in self.thetas):
            raise InvalidValue("thresholds must lie in [0, 100]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thetas"] = list(self.thetas)
        return d


def log_transform(sequence) -> np.ndarray:
    """Natural log of every amount, in order.

    Accepts a `TransactionSequence` or a plain sequence of amounts.
    """
    if isinstance(sequence, TransactionSequence):
        amounts = [t.amount for t in sequence.transactions]
    else:
        amounts = list(sequence)
    for i, a in enumerate(amounts, start=1):
        if not a > 0:
            raise NonPositiveAmount(i, a)
    return np.array([math.log(a) for a in amounts], dtype=float)
