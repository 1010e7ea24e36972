"""The veto objective: a product-of-experts target in logit space.

The target Q mixes the teacher's scores with the student's own scores,
Q proportional to exp(z_T + beta * z_S), i.e. Q = P_T * P_S^beta / Z.
A token the student assigns near-zero probability drags Q down on that
token, which vetoes the otherwise explosive teacher signal there.

Both KL regimes treat Q as a fixed target when differentiating (the
student logits inside Q carry no gradient); pass
``differentiate_through_target=True`` to study the fully coupled
variant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import Categorical, EXP_FLOOR, log_sum_exp
from .errors import InvalidToken
from .validation import as_logits, check_beta, check_probability, check_same_length

IGNORANT_TEACHER_MIN = 0.1
IGNORANT_STUDENT_MAX = 0.01


@dataclass(frozen=True)
class VetoTarget:
    """The mixed target distribution and the beta that produced it."""

    q: Categorical
    beta: float
    detached: bool = True


@dataclass(frozen=True)
class TokenLossRecord:
    """Per-token loss plus its exact gradient w.r.t. the student logits."""

    loss: float
    grad_wrt_student_logits: np.ndarray = field(repr=False)
    token_index: Optional[int] = None
    p_T_of_token: Optional[float] = None
    p_S_of_token: Optional[float] = None


def _mix_log_probs(z_T: np.ndarray, z_S: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (log P_T, log P_S, log Q), each normalized."""
    lt = z_T - log_sum_exp(z_T)
    ls = z_S - log_sum_exp(z_S)
    mixed = z_T + beta * z_S
    lq = mixed - log_sum_exp(mixed)
    return lt, ls, lq


def _exp(lp: np.ndarray) -> np.ndarray:
    return np.exp(np.maximum(lp, EXP_FLOOR))


def mix_logits(z_T, z_S, beta: float) -> VetoTarget:
    """Build Q from teacher and student logits; beta in [0, 1).

    At beta = 0 the target is exactly the normalized teacher. For
    uniform student logits the student factor cancels and Q = P_T.
    """
    z_T = as_logits(z_T, name="z_T")
    z_S = as_logits(z_S, name="z_S")
    check_same_length(z_T, z_S)
    beta = check_beta(beta)
    _, _, lq = _mix_log_probs(z_T, z_S, beta)
    return VetoTarget(q=Categorical(lq), beta=beta, detached=True)


def _token_fields(lt, ls, token):
    if token is None:
        return None, None, None
    v = lt.shape[0]
    token = int(token)
    if not (0 <= token < v):
        raise InvalidToken(f"token {token} outside [0, {v})")
    return (token,
            float(np.exp(max(lt[token], EXP_FLOOR))),
            float(np.exp(max(ls[token], EXP_FLOOR))))


def forward_veto_loss(z_T, z_S, beta: float, *, token: Optional[int] = None,
                      differentiate_through_target: bool = False) -> TokenLossRecord:
    """KL(Q || P_S) with exact gradient w.r.t. the student logits.

    With Q detached the gradient is the softmax cross-entropy identity
    P_S - Q. At beta = 0 this is standard forward KL against the
    teacher.
    """
    z_T = as_logits(z_T, name="z_T")
    z_S = as_logits(z_S, name="z_S")
    check_same_length(z_T, z_S)
    beta = check_beta(beta)
    lt, ls, lq = _mix_log_probs(z_T, z_S, beta)
    q = _exp(lq)
    p_s = _exp(ls)
    ratio = lq - ls
    loss = float((q * ratio).sum())
    grad = p_s - q
    if differentiate_through_target:
        # Extra term from letting the student logits move Q as well:
        # beta * Q * (log(Q/P_S) - KL(Q||P_S)).
        grad = grad + beta * q * (ratio - loss)
    tok, p_t_tok, p_s_tok = _token_fields(lt, ls, token)
    return TokenLossRecord(loss=loss, grad_wrt_student_logits=grad,
                           token_index=tok, p_T_of_token=p_t_tok, p_S_of_token=p_s_tok)


def reverse_veto_loss(z_T, z_S, beta: float, *, token: Optional[int] = None,
                      differentiate_through_target: bool = False) -> TokenLossRecord:
    """KL(P_S || Q) with exact gradient w.r.t. the student logits.

    With Q held fixed the gradient is P_S * (s - E_{P_S}[s]) where
    s = log P_S - log Q, which is the full-vocabulary evaluation of the
    REINFORCE form. At beta = 0 this is standard reverse KL.
    """
    z_T = as_logits(z_T, name="z_T")
    z_S = as_logits(z_S, name="z_S")
    check_same_length(z_T, z_S)
    beta = check_beta(beta)
    lt, ls, lq = _mix_log_probs(z_T, z_S, beta)
    p_s = _exp(ls)
    s = ls - lq
    loss = float((p_s * s).sum())
    grad = p_s * (s - loss)
    if differentiate_through_target:
        grad = grad - beta * (p_s - _exp(lq))
    tok, p_t_tok, p_s_tok = _token_fields(lt, ls, token)
    return TokenLossRecord(loss=loss, grad_wrt_student_logits=grad,
                           token_index=tok, p_T_of_token=p_t_tok, p_S_of_token=p_s_tok)


def veto_token_loss_limit(p: float, beta: float) -> float:
    """Dominant per-token forward term -p^beta * ln(p).

    For beta > 0 the polynomial factor wins and the value tends to 0 as
    p -> 0+; at beta = 0 it is -ln(p), which diverges.
    """
    p = check_probability(p, name="p")
    beta = check_beta(beta)
    return float(-(p ** beta) * np.log(p))


def advantage(p_T_y: float, p_S_y: float, beta: float) -> float:
    """REINFORCE weight -ln p_T(y) + (1 - beta) * ln p_S(y).

    The first term is the reward, the second a scaled entropy cost.
    beta = 1 is allowed here only, exposing the pure-reward endpoint.
    """
    p_T_y = check_probability(p_T_y, name="p_T_y")
    p_S_y = check_probability(p_S_y, name="p_S_y")
    beta = check_beta(beta, allow_one=True)
    return float(-np.log(p_T_y) + (1.0 - beta) * np.log(p_S_y))


def _advantage_vector(lt: np.ndarray, ls: np.ndarray, beta: float) -> np.ndarray:
    return -lt + (1.0 - beta) * ls


def reinforce_gradient_exact(z_T, z_S, beta: float) -> np.ndarray:
    """Exact enumeration of E_{y~P_S}[ (e_y - P_S) * A(y) ].

    This is the policy-gradient form of the reverse loss gradient,
    summed over the whole vocabulary instead of sampled. It matches the
    analytic reverse_veto_loss gradient to rounding error.
    """
    z_T = as_logits(z_T, name="z_T")
    z_S = as_logits(z_S, name="z_S")
    check_same_length(z_T, z_S)
    beta = check_beta(beta)
    lt = z_T - log_sum_exp(z_T)
    ls = z_S - log_sum_exp(z_S)
    p_s = _exp(ls)
    a = _advantage_vector(lt, ls, beta)
    # sum_y p(y) * (e_y - p) * A(y), vectorized over y
    return p_s * a - p_s * float(p_s @ a)


def reinforce_gradient_mc_stats(z_T, z_S, beta: float, n_samples: int, seed: int
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo REINFORCE gradient and its componentwise standard error.

    The instance is fully enumerable, so the standard error is computed
    exactly from the sampling distribution rather than estimated from
    the draws; an empirical estimate degenerates on components whose
    token is too rare to appear in the sample.
    """
    z_T = as_logits(z_T, name="z_T")
    z_S = as_logits(z_S, name="z_S")
    check_same_length(z_T, z_S)
    beta = check_beta(beta)
    n = int(n_samples)
    if n < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    lt = z_T - log_sum_exp(z_T)
    ls = z_S - log_sum_exp(z_S)
    p_s = _exp(ls)
    p_draw = p_s / p_s.sum()
    a = _advantage_vector(lt, ls, beta)
    rng = np.random.default_rng(seed)
    draws = rng.choice(p_s.shape[0], size=n, p=p_draw)
    counts = np.bincount(draws, minlength=p_s.shape[0]).astype(np.float64)
    mean = (counts * a) / n - p_s * float(counts @ a) / n
    # One draw contributes g_i = (delta_{i,y} - p_i) * A(y); with
    # delta^2 = delta the exact second moment per component is
    # p_i (1 - 2 p_i) A_i^2 + p_i^2 E[A^2].
    mu = p_s * (a - float(p_s @ a))
    second = p_s * (1.0 - 2.0 * p_s) * a * a + (p_s ** 2) * float(p_s @ (a * a))
    var = np.maximum(second - mu ** 2, 0.0)
    return mean, np.sqrt(var / n)


def reinforce_gradient_mc(z_T, z_S, beta: float, n_samples: int, seed: int) -> np.ndarray:
    """Sample-mean REINFORCE gradient over n i.i.d. draws y ~ P_S."""
    mean, _ = reinforce_gradient_mc_stats(z_T, z_S, beta, n_samples, seed)
    return mean


def is_ignorant_token(p_T_y: float, p_S_y: float, *,
                      teacher_min: float = IGNORANT_TEACHER_MIN,
                      student_max: float = IGNORANT_STUDENT_MAX) -> bool:
    """True iff the teacher backs the token but the student nearly excludes it.

    Both comparisons are strict: (0.5, 0.01) is not ignorant.
    """
    return (p_T_y > teacher_min) and (p_S_y < student_max)


def ignorant_mask(p_T: np.ndarray, p_S: np.ndarray, *,
                  teacher_min: float = IGNORANT_TEACHER_MIN,
                  student_max: float = IGNORANT_STUDENT_MAX) -> np.ndarray:
    """Vectorized is_ignorant_token over a vocabulary row."""
    return (p_T > teacher_min) & (p_S < student_max)
