"""Tabular autoregressive policies and synthetic sequence tasks.

A TabularPolicy maps the last ``context_len`` tokens to a logit row via
a base-V positional hash, so every gradient is exact and every oracle
enumerable. Tasks define a deterministic ground-truth continuation per
prompt; the analytic teacher built from a task decodes it perfectly by
construction.

Task ground truths:

* ``copy``     next token = the token context_len steps back, so the
               answer cycles the prompt.
* ``mod_sum``  next token = sum of the current window mod V; the first
               answer token is the sum of the prompt tokens mod V.
* ``reverse``  answer = the prompt reversed. The window must expose the
               whole prompt during every answer step, so the context
               length is prompt_len + answer_len and rows are keyed by
               bos-padded windows. The teacher also emits eos after the
               answer.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidLogits, InvalidToken, ShapeError
from .validation import as_logits

TASK_KINDS = ("copy", "reverse", "mod_sum")

_MAGIC = b"VKDP"
_FORMAT_VERSION = 1


def log_softmax_rows(theta: np.ndarray) -> np.ndarray:
    """Row-wise stable log-softmax of a logits table."""
    m = theta.max(axis=1, keepdims=True)
    return theta - (m + np.log(np.exp(theta - m).sum(axis=1, keepdims=True)))


@dataclass
class TabularPolicy:
    """Differentiable lookup-table policy over k-token contexts."""

    vocab_size: int
    context_len: int
    theta: np.ndarray
    bos_id: int = 0
    eos_id: Optional[int] = None

    def __post_init__(self):
        v, k = int(self.vocab_size), int(self.context_len)
        if v < 2:
            raise InvalidLogits(f"vocab_size must be >= 2, got {v}")
        if k < 0:
            raise InvalidLogits(f"context_len must be >= 0, got {k}")
        expected = (v ** k, v)
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != expected:
            raise InvalidLogits(f"theta shape {theta.shape} != {expected}")
        if not np.all(np.isfinite(theta)):
            raise InvalidLogits("theta contains non-finite entries")
        if not (0 <= int(self.bos_id) < v):
            raise InvalidToken(f"bos_id {self.bos_id} outside [0, {v})")
        if self.eos_id is not None and not (0 <= int(self.eos_id) < v):
            raise InvalidToken(f"eos_id {self.eos_id} outside [0, {v})")
        self.vocab_size, self.context_len, self.theta = v, k, theta

    @classmethod
    def zeros(cls, vocab_size: int, context_len: int, *, bos_id: int = 0,
              eos_id: Optional[int] = None) -> "TabularPolicy":
        theta = np.zeros((vocab_size ** context_len, vocab_size))
        return cls(vocab_size, context_len, theta, bos_id=bos_id, eos_id=eos_id)

    def context_index(self, window: Sequence[int]) -> int:
        """Base-V positional hash; injective on k-token windows."""
        if len(window) != self.context_len:
            raise InvalidToken(f"window length {len(window)} != context_len {self.context_len}")
        idx = 0
        for tok in window:
            tok = int(tok)
            if not (0 <= tok < self.vocab_size):
                raise InvalidToken(f"token {tok} outside [0, {self.vocab_size})")
            idx = idx * self.vocab_size + tok
        return idx

    def logits_for_context(self, window: Sequence[int]) -> np.ndarray:
        return self.theta[self.context_index(window)].copy()

    def set_row(self, window: Sequence[int], logits) -> None:
        self.theta[self.context_index(window)] = as_logits(logits)

    def clone(self) -> "TabularPolicy":
        return TabularPolicy(self.vocab_size, self.context_len, self.theta.copy(),
                             bos_id=self.bos_id, eos_id=self.eos_id)

    def save(self, path) -> None:
        """Binary artifact: magic, version, V, k, bos, eos, row-major float64 logits."""
        eos = -1 if self.eos_id is None else int(self.eos_id)
        header = _MAGIC + struct.pack("<IIIii", _FORMAT_VERSION, self.vocab_size,
                                      self.context_len, self.bos_id, eos)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.theta.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "TabularPolicy":
        with open(path, "rb") as fh:
            raw = fh.read()
        head = len(_MAGIC) + struct.calcsize("<IIIii")
        if raw[:len(_MAGIC)] != _MAGIC or len(raw) < head:
            raise InvalidLogits(f"{path} is not a policy artifact")
        version, v, k, bos, eos = struct.unpack("<IIIii", raw[len(_MAGIC):head])
        if version != _FORMAT_VERSION:
            raise InvalidLogits(f"unsupported policy format version {version}")
        theta = np.frombuffer(raw[head:], dtype="<f8").reshape(v ** k, v).copy()
        return cls(v, k, theta, bos_id=bos, eos_id=None if eos < 0 else eos)


def pad_window(tokens: Sequence[int], context_len: int, bos_id: int) -> tuple[int, ...]:
    """Last context_len tokens, left-padded with bos for early steps."""
    tail = tuple(int(t) for t in tokens[-context_len:]) if context_len else ()
    if len(tail) < context_len:
        tail = (bos_id,) * (context_len - len(tail)) + tail
    return tail


@dataclass(frozen=True)
class Trajectory:
    """A prompt plus the sampled continuation and its bookkeeping."""

    prompt: tuple[int, ...]
    tokens: tuple[int, ...]
    per_step_contexts: tuple[tuple[int, ...], ...]
    per_step_student_logprob: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = len(self.tokens)
        if len(self.per_step_contexts) != n or len(self.per_step_student_logprob) != n:
            raise ShapeError("per-step bookkeeping length mismatch")


@dataclass(frozen=True)
class SyntheticTask:
    """A deterministic-ground-truth sequence task.

    ``copy`` and ``mod_sum`` are single-rule tasks: the correct next
    token is the same function of the current window at every step, so
    the required context length equals prompt_len. ``reverse`` needs
    full prompt visibility: context length prompt_len + answer_len.
    """

    kind: str
    vocab_size: int = 8
    prompt_len: int = 2
    answer_len: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.prompt_len < 1 or self.answer_len < 1:
            raise ValueError("prompt_len and answer_len must be >= 1")
        if self.kind == "reverse":
            if self.answer_len != self.prompt_len:
                raise ValueError("reverse requires answer_len == prompt_len")
            if self.vocab_size < 3:
                raise ValueError("reverse requires vocab_size >= 3 (token 0 is reserved)")

    @property
    def context_len(self) -> int:
        if self.kind == "reverse":
            return self.prompt_len + self.answer_len
        return self.prompt_len

    @property
    def bos_id(self) -> int:
        return 0

    @property
    def uses_eos(self) -> bool:
        return self.kind == "reverse"

    @property
    def eos_id(self) -> Optional[int]:
        return 0 if self.uses_eos else None

    def rule(self, window: Sequence[int]) -> int:
        """Correct next token for a window (single-rule kinds only)."""
        if self.kind == "copy":
            return int(window[0])
        if self.kind == "mod_sum":
            return int(sum(int(t) for t in window) % self.vocab_size)
        raise ValueError("reverse has no single window rule")

    def sample_prompts(self, n: int, seed: int) -> np.ndarray:
        """Uniform random prompts; reverse avoids the reserved pad token 0."""
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, int(seed))))
        lo = 1 if self.kind == "reverse" else 0
        return rng.integers(lo, self.vocab_size, size=(int(n), self.prompt_len))

    def ground_truth(self, prompt: Sequence[int]) -> np.ndarray:
        """The unique correct answer sequence for a prompt."""
        prompt = [int(t) for t in prompt]
        if len(prompt) != self.prompt_len:
            raise InvalidToken(f"prompt length {len(prompt)} != {self.prompt_len}")
        if self.kind == "reverse":
            return np.asarray(prompt[::-1], dtype=np.int64)
        seq = list(prompt)
        answer = []
        for _ in range(self.answer_len):
            nxt = self.rule(seq[-self.context_len:])
            answer.append(nxt)
            seq.append(nxt)
        return np.asarray(answer, dtype=np.int64)


def _rule_targets(task: SyntheticTask) -> np.ndarray:
    """Correct next token for every context row of a single-rule task."""
    v, k = task.vocab_size, task.context_len
    idx = np.arange(v ** k)
    digits = np.empty((v ** k, k), dtype=np.int64)
    for pos in range(k - 1, -1, -1):
        digits[:, pos] = idx % v
        idx = idx // v
    if task.kind == "copy":
        return digits[:, 0]
    return digits.sum(axis=1) % v


def make_teacher(task: SyntheticTask, smoothing: float = 0.05) -> TabularPolicy:
    """Analytic teacher: 1 - eps on the correct next token, eps/(V-1) elsewhere.

    Rows are stored as exact log-probabilities, so normalize() returns
    them unchanged and the minimum row probability is eps/(V-1) exactly.
    Windows of the reverse task that no valid rollout reaches stay
    uniform.
    """
    eps = float(smoothing)
    if eps == 0.0:
        warnings.warn("smoothing 0 would produce -inf logits; clamped to 1e-6")
        eps = 1e-6
    if not (0.0 < eps < 0.5):
        raise ValueError(f"smoothing must be in (0, 0.5), got {smoothing}")
    v, k = task.vocab_size, task.context_len
    lo, hi = np.log(eps / (v - 1)), np.log(1.0 - eps)
    teacher = TabularPolicy.zeros(v, k, bos_id=task.bos_id, eos_id=task.eos_id)

    if task.kind in ("copy", "mod_sum"):
        targets = _rule_targets(task)
        teacher.theta[:] = lo
        teacher.theta[np.arange(v ** k), targets] = hi
        return teacher

    # reverse: fill rows along every valid rollout, answer then eos.
    assigned: dict[int, int] = {}
    for prompt in product(range(1, v), repeat=task.prompt_len):
        seq = list(prompt)
        steps = list(task.ground_truth(prompt)) + [task.eos_id]
        for target in steps:
            row = teacher.context_index(pad_window(seq, k, task.bos_id))
            prev = assigned.setdefault(row, int(target))
            if prev != int(target):
                raise AssertionError("reverse task produced conflicting row targets")
            teacher.theta[row] = lo
            teacher.theta[row, int(target)] = hi
            seq.append(int(target))
    return teacher


def sample_trajectory(policy: TabularPolicy, prompt: Sequence[int], max_len: int,
                      seed: int, *, temperature: float = 1.0) -> Trajectory:
    """Ancestral sampling from the policy; stops at eos or max_len.

    The recorded per-step log-probs are the policy's own (temperature 1)
    log-probs of the sampled tokens; temperature only reshapes the
    sampling distribution.
    """
    if int(max_len) < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if not (temperature > 0):
        raise ValueError(f"temperature must be > 0, got {temperature}")
    rng = np.random.default_rng(seed)
    prompt = tuple(int(t) for t in prompt)
    seq = list(prompt)
    tokens, contexts, logps = [], [], []
    for _ in range(int(max_len)):
        window = pad_window(seq, policy.context_len, policy.bos_id)
        z = policy.theta[policy.context_index(window)]
        lp = z - (z.max() + np.log(np.exp(z - z.max()).sum()))
        if temperature != 1.0:
            zt = z / temperature
            lp_draw = zt - (zt.max() + np.log(np.exp(zt - zt.max()).sum()))
        else:
            lp_draw = lp
        p = np.exp(lp_draw)
        tok = int(rng.choice(policy.vocab_size, p=p / p.sum()))
        tokens.append(tok)
        contexts.append(window)
        logps.append(float(lp[tok]))
        seq.append(tok)
        if policy.eos_id is not None and tok == policy.eos_id:
            break
    return Trajectory(prompt=prompt, tokens=tuple(tokens),
                      per_step_contexts=tuple(contexts),
                      per_step_student_logprob=np.asarray(logps))


def greedy_decode(policy: TabularPolicy, prompt: Sequence[int], steps: int) -> np.ndarray:
    """Argmax rollout for exactly ``steps`` tokens (or until eos)."""
    seq = [int(t) for t in prompt]
    out = []
    for _ in range(int(steps)):
        window = pad_window(seq, policy.context_len, policy.bos_id)
        tok = int(np.argmax(policy.theta[policy.context_index(window)]))
        out.append(tok)
        seq.append(tok)
        if policy.eos_id is not None and tok == policy.eos_id:
            break
    return np.asarray(out, dtype=np.int64)


def task_accuracy(policy: TabularPolicy, task: SyntheticTask, n_eval: int,
                  mode: str = "greedy", seed: int = 0) -> float:
    """Fraction of evaluation prompts decoded to the exact ground truth."""
    if mode not in ("greedy", "sample"):
        raise ValueError(f"mode must be 'greedy' or 'sample', got {mode!r}")
    if int(n_eval) < 1:
        raise ValueError(f"n_eval must be >= 1, got {n_eval}")
    prompts = task.sample_prompts(n_eval, seed)
    hits = 0
    for j, prompt in enumerate(prompts):
        truth = task.ground_truth(prompt)
        if mode == "greedy":
            decoded = greedy_decode(policy, prompt, task.answer_len)
        else:
            child = np.random.SeedSequence((int(seed), 7, j)).generate_state(1)[0]
            decoded = np.asarray(
                sample_trajectory(policy, prompt, task.answer_len, int(child)).tokens)
        hits += int(decoded.shape[0] == truth.shape[0] and np.array_equal(decoded, truth))
    return hits / len(prompts)
