"""Numerically stable log-space categorical primitives.

All probability math stays in natural-log space; probabilities are
exponentiated only at read-out. Finite log-probs are floored at -745
(the float64 exp underflow edge) when exponentiating, so read-outs of
extremely unlikely tokens stay positive instead of collapsing to 0.0.
Hard zeros (-inf log-probs) exponentiate to exactly 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentKL, InvalidProbability
from .validation import as_logits, check_same_length, check_temperature

# exp(x) underflows to 0.0 below roughly -745.13 in IEEE float64.
EXP_FLOOR = -745.0

_LSE_TOL = 1e-9
_LOGPROB_TOL = 1e-12


def log_sum_exp(values: np.ndarray) -> float:
    """Stable log(sum(exp(values))); tolerates -inf entries."""
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


@dataclass(frozen=True, eq=False)
class Categorical:
    """A normalized distribution stored as natural-log probabilities.

    Entries may be -inf (hard zeros); everything else must be finite,
    nonpositive, and log-sum-exp to 0 within 1e-9.
    """

    log_probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 1 or lp.shape[0] < 2:
            raise InvalidProbability(f"log_probs must be 1-D of length >= 2, got shape {lp.shape}")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise InvalidProbability("log_probs contain NaN or +inf")
        if np.any(lp > _LOGPROB_TOL):
            raise InvalidProbability(f"log_probs exceed 0: max {lp.max()}")
        lse = log_sum_exp(lp)
        if abs(lse) > _LSE_TOL:
            raise InvalidProbability(f"log_probs not normalized: log-sum-exp = {lse}")
        lp = lp.copy()
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)

    def __len__(self) -> int:
        return int(self.log_probs.shape[0])

    @property
    def probs(self) -> np.ndarray:
        """Exponentiated read-out; finite entries floored at EXP_FLOOR."""
        lp = self.log_probs
        out = np.exp(np.maximum(lp, EXP_FLOOR))
        return np.where(np.isneginf(lp), 0.0, out)

    @classmethod
    def from_probs(cls, probs) -> "Categorical":
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] < 2:
            raise InvalidProbability(f"probs must be 1-D of length >= 2, got shape {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0):
            raise InvalidProbability("probs must be finite and nonnegative")
        total = p.sum()
        if total <= 0.0:
            raise InvalidProbability("probs sum to zero")
        with np.errstate(divide="ignore"):
            return cls(np.log(p / total))


def normalize(logits) -> Categorical:
    """Softmax-normalize a finite logit vector, in log space.

    Subtracts max(logits) before exponentiation; the result is exactly
    shift-invariant up to float rounding.
    """
    z = as_logits(logits)
    m = z.max()
    lp = z - (m + np.log(np.sum(np.exp(z - m))))
    return Categorical(lp)


def kl_divergence(p: Categorical, q: Categorical) -> float:
    """KL(p || q) in nats, with the 0*log(0/q) = 0 convention.

    Returns +inf (and warns DivergentKL) when q has a hard zero on a
    token where p has mass.
    """
    pl, ql = p.log_probs, q.log_probs
    check_same_length(pl, ql)
    support = ~np.isneginf(pl)
    if np.any(np.isneginf(ql[support])):
        warnings.warn("q assigns zero probability inside p's support", DivergentKL)
        return float("inf")
    terms = np.exp(pl[support]) * (pl[support] - ql[support])
    return max(float(terms.sum()), 0.0)


def entropy(p: Categorical) -> float:
    """Shannon entropy in nats; 0 for a point mass, log(V) for uniform."""
    lp = p.log_probs
    support = ~np.isneginf(lp)
    return max(float(-(np.exp(lp[support]) * lp[support]).sum()), 0.0)


def sharpen(p: Categorical, temperature: float) -> Categorical:
    """Renormalize p^(1/T) for T in (0, 1]; T = 1 is the identity."""
    t = check_temperature(temperature)
    scaled = p.log_probs / t
    m = scaled.max()
    lp = scaled - (m + np.log(np.sum(np.exp(scaled - m))))
    return Categorical(lp)
