"""Input validation helpers used at every public entry point."""
from __future__ import annotations

import numpy as np

from .errors import (
    InvalidBeta,
    InvalidLogits,
    InvalidProbability,
    InvalidTemperature,
    ShapeError,
)


def as_logits(values, *, name: str = "logits") -> np.ndarray:
    """Coerce to a 1-D float64 vector of finite scores, length >= 2."""
    z = np.asarray(values, dtype=np.float64)
    if z.ndim != 1:
        raise InvalidLogits(f"{name} must be 1-D, got shape {z.shape}")
    if z.shape[0] < 2:
        raise InvalidLogits(f"{name} needs at least 2 entries, got {z.shape[0]}")
    if not np.all(np.isfinite(z)):
        raise InvalidLogits(f"{name} contains non-finite entries")
    return z


def check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")


def check_beta(beta: float, *, allow_one: bool = False) -> float:
    beta = float(beta)
    hi_ok = beta <= 1.0 if allow_one else beta < 1.0
    if not (0.0 <= beta and hi_ok):
        top = "1]" if allow_one else "1)"
        raise InvalidBeta(f"beta must be in [0, {top}, got {beta}")
    return beta


def check_temperature(temperature: float) -> float:
    temperature = float(temperature)
    if not (0.0 < temperature <= 1.0):
        raise InvalidTemperature(f"temperature must be in (0, 1], got {temperature}")
    return temperature


def check_probability(p: float, *, name: str = "probability") -> float:
    p = float(p)
    if not (0.0 < p <= 1.0):
        raise InvalidProbability(f"{name} must be in (0, 1], got {p}")
    return p
