"""Parameter counting and the ``C = alpha * P * T_train + beta * T_opt`` cost summary."""

from __future__ import annotations

import csv
import os
from dataclasses import astuple, dataclass, fields

from .errors import ParameterError

COLUMNS = ("parameters", "train_seconds", "opt_seconds", "alpha_c", "beta_c", "complexity")


@dataclass(frozen=True)
class ComplexityRecord:
    """Units of the result depend on the coefficients (parameter-seconds when both are 1)."""

    parameters: int
    train_seconds: float
    opt_seconds: float
    alpha_c: float = 1.0
    beta_c: float = 1.0

    def validate(self) -> "ComplexityRecord":
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ParameterError(f"{f.name} must be >= 0, got {v}")
        return self


def complexity(record: ComplexityRecord) -> float:
    record.validate()
    return record.alpha_c * record.parameters * record.train_seconds + record.beta_c * record.opt_seconds


def count_parameters(model) -> int:
    """Trainable element count across all networks; running batch-norm statistics are excluded.

    Accepts a :class:`CycleGanModel`, a single parameter set, a dict of arrays, or ``None``.
    """
    if model is None:
        return 0
    if hasattr(model, "networks"):
        return sum(count_parameters(p) for p in model.networks().values())
    if hasattr(model, "tensors"):
        return int(sum(t.size for t in model.tensors.values()))
    return int(sum(getattr(a, "size", 0) for a in dict(model).values()))


def append_complexity_row(record: ComplexityRecord, path) -> None:
    """Append one CSV row (header written when the file is new)."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(COLUMNS)
        w.writerow(list(astuple(record)) + [complexity(record)])
