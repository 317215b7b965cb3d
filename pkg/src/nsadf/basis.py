"""Fixed covariate bases built from a time index and a within-year day index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    """Column layout of a covariate design matrix.

    Columns are, in order: an optional intercept, raw polynomial time terms
    ``t, t**2, ..., t**degree`` and harmonic pairs
    ``sin(2*pi*k*day/period), cos(2*pi*k*day/period)`` for ``k = 1..harmonics``.
    Columns are left on their natural scale; fitting routines standardise
    internally and report coefficients against these raw columns.
    """

    degree: int = 1
    harmonics: int = 0
    period: float = 90.0
    intercept: bool = True

    def __post_init__(self):
        if not 0 <= self.degree <= 3:
            raise ValueError(f"polynomial degree must be in 0..3, got {self.degree}")
        if not 0 <= self.harmonics <= 3:
            raise ValueError(f"harmonics must be in 0..3, got {self.harmonics}")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.n_columns == 0:
            raise ValueError("basis has no columns")

    @property
    def n_columns(self) -> int:
        return int(self.intercept) + self.degree + 2 * self.harmonics

    @property
    def names(self) -> list[str]:
        out = ["1"] if self.intercept else []
        out += ["t" if k == 1 else f"t^{k}" for k in range(1, self.degree + 1)]
        for k in range(1, self.harmonics + 1):
            out += [f"sin{k}(day)", f"cos{k}(day)"]
        return out

    @property
    def intercept_only(self) -> bool:
        return self.intercept and self.degree == 0 and self.harmonics == 0

    def design(self, t, day=None) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.ones_like(t)] if self.intercept else []
        cols += [t**k for k in range(1, self.degree + 1)]
        if self.harmonics:
            if day is None:
                raise ValueError("harmonic basis terms need a day index")
            d = np.broadcast_to(np.asarray(day, dtype=float), t.shape)
            for k in range(1, self.harmonics + 1):
                arg = 2.0 * np.pi * k * d / self.period
                cols += [np.sin(arg), np.cos(arg)]
        return np.column_stack(cols)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "harmonics": self.harmonics,
            "period": self.period,
            "intercept": self.intercept,
            "columns": self.names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(
            degree=int(d["degree"]),
            harmonics=int(d["harmonics"]),
            period=float(d["period"]),
            intercept=bool(d["intercept"]),
        )


def column_scales(design: np.ndarray) -> np.ndarray:
    """Largest absolute entry per column; zero columns are reported as singular."""
    scale = np.max(np.abs(design), axis=0)
    if np.any(scale == 0) or not np.all(np.isfinite(scale)):
        raise np.linalg.LinAlgError("design matrix has an all-zero or non-finite column")
    return scale
