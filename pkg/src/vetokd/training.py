"""On-policy distillation training loop with gradient instrumentation.

Each step samples trajectories from the student (from the teacher for
supervised KD), forms the mixed target per realized context, applies
the exact per-row SGD update, and records stability diagnostics.

Two gradient-like quantities are tracked:

* the applied update, d(loss)/d(logits), which is what SGD uses and is
  always bounded;
* the probability-space coefficient |d(loss)/d(P_S(y))| per vocabulary
  entry, which is the quantity that explodes for standard forward KL on
  ignorant tokens (target(y)/P_S(y)) and is what the max_grad columns
  report.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import VetoInvariantViolation
from .objective import ignorant_mask
from .policy import SyntheticTask, TabularPolicy, log_softmax_rows, sample_trajectory, task_accuracy
from .schedule import BetaSchedule, beta_at
from .validation import check_beta

OBJECTIVES = ("forward_veto", "reverse_veto", "forward_std", "reverse_std", "supervised_kd")
FORWARD_FAMILY = ("forward_veto", "forward_std", "supervised_kd")
LOSS_REDUCTIONS = ("sum_tokens", "mean_tokens")

# Stream ids for per-step child seeds (common random numbers across
# objectives sharing a config seed).
_PROMPT_STREAM = 0
_TRAJ_STREAM = 1
_EVAL_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "forward_veto"
    schedule: BetaSchedule = field(default_factory=BetaSchedule)
    learning_rate: float = 0.5
    total_steps: int = 2000
    batch_size: int = 8
    max_len: Optional[int] = None
    seed: int = 0
    clip_grad: Optional[float] = None
    loss_reduction: str = "sum_tokens"
    temperature: float = 1.0
    eval_every: int = 100
    eval_prompts: int = 200
    ignorant_teacher_min: float = 0.1
    ignorant_student_max: float = 0.01
    differentiate_through_target: bool = False

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise ValueError(f"unknown loss_reduction {self.loss_reduction!r}")
        if not (self.learning_rate > 0):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.total_steps) < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clip_grad is not None and not (self.clip_grad > 0):
            raise ValueError(f"clip_grad must be > 0 when set, got {self.clip_grad}")
        if not (self.temperature > 0):
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        # Standard objectives are the beta = 0 endpoint; pinning the
        # schedule makes the recorded beta trace honest for them.
        if self.objective in ("forward_std", "reverse_std", "supervised_kd"):
            pinned = BetaSchedule(kind="constant", beta_init=0.0,
                                  total_steps=int(self.total_steps))
            object.__setattr__(self, "schedule", pinned)
        elif self.schedule.total_steps != int(self.total_steps):
            object.__setattr__(self, "schedule",
                               replace(self.schedule, total_steps=int(self.total_steps)))


@dataclass
class MetricsRecord:
    step: int
    beta: float
    loss: float
    max_grad: float
    max_grad_ignorant: float
    n_ignorant: int
    entropy: float
    kl_to_teacher: float
    accuracy: float
    ms: float


# Columns written to the metrics CSV, in order. Wall-clock ms stays out
# of the file so reruns with the same seed are byte-identical; it is
# still carried on every MetricsRecord and reported in the summary.
METRICS_CSV_COLUMNS = ("step", "beta", "loss", "max_grad", "max_grad_ignorant",
                       "n_ignorant", "entropy", "kl_to_teacher", "accuracy")


def _child_seed(seed: int, step: int, stream: int) -> int:
    return int(np.random.SeedSequence((int(seed), int(step), int(stream))).generate_state(1)[0])


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    return z - (m + np.log(np.exp(z - m).sum()))


@dataclass
class StepStats:
    """Raw per-batch quantities before they are folded into a MetricsRecord."""

    loss: float
    max_grad: float
    max_grad_ignorant: float
    n_ignorant: int
    entropy: float
    kl_to_teacher: float
    grads: dict[int, np.ndarray]
    contexts: list[tuple[int, ...]]
    trajectories: list


def batch_stats(policy: TabularPolicy, teacher_log_probs: np.ndarray,
                trajectories, beta: float, config: TrainConfig) -> StepStats:
    """Token losses, accumulated row gradients, and diagnostics for one batch."""
    beta = check_beta(beta)
    forward = config.objective in FORWARD_FAMILY
    tmin, smax = config.ignorant_teacher_min, config.ignorant_student_max

    grads: dict[int, np.ndarray] = {}
    contexts: list[tuple[int, ...]] = []
    row_ids: list[int] = []
    total_loss = 0.0
    max_grad = 0.0
    max_grad_ign = 0.0
    n_ign = 0
    n_tokens = 0

    for traj in trajectories:
        for window in traj.per_step_contexts:
            row = policy.context_index(window)
            contexts.append(window)
            row_ids.append(row)
            lt = teacher_log_probs[row]
            ls = _log_softmax(policy.theta[row])
            mixed = lt + beta * ls
            lq = _log_softmax(mixed)
            p_s = np.exp(ls)
            q = np.exp(lq)
            if forward:
                loss_t = float((q * (lq - ls)).sum())
                grad_t = p_s - q
                if config.differentiate_through_target and beta > 0.0:
                    grad_t = grad_t + beta * q * ((lq - ls) - loss_t)
                with np.errstate(over="ignore"):
                    coeff = np.exp(lq - ls)
            else:
                s = ls - lq
                loss_t = float((p_s * s).sum())
                grad_t = p_s * (s - loss_t)
                if config.differentiate_through_target and beta > 0.0:
                    grad_t = grad_t - beta * (p_s - q)
                coeff = np.abs(s + 1.0)
            total_loss += loss_t
            n_tokens += 1
            max_grad = max(max_grad, float(coeff.max()))
            ign = ignorant_mask(np.exp(lt), p_s, teacher_min=tmin, student_max=smax)
            if ign.any():
                n_ign += int(ign.sum())
                max_grad_ign = max(max_grad_ign, float(coeff[ign].max()))
            acc = grads.get(row)
            if acc is None:
                grads[row] = grad_t
            else:
                acc += grad_t

    if n_tokens and config.loss_reduction == "mean_tokens":
        total_loss /= n_tokens
        for row in grads:
            grads[row] /= n_tokens

    unique_rows = sorted(set(row_ids))
    ent = 0.0
    kl = 0.0
    for row in unique_rows:
        ls = _log_softmax(policy.theta[row])
        p_s = np.exp(ls)
        ent += float(-(p_s * ls).sum())
        kl += float((p_s * (ls - teacher_log_probs[row])).sum())
    denom = max(len(unique_rows), 1)
    return StepStats(loss=total_loss, max_grad=max_grad, max_grad_ignorant=max_grad_ign,
                     n_ignorant=n_ign, entropy=ent / denom, kl_to_teacher=kl / denom,
                     grads=grads, contexts=contexts, trajectories=list(trajectories))


def apply_gradients(policy: TabularPolicy, grads: dict[int, np.ndarray],
                    learning_rate: float, clip_grad: Optional[float] = None) -> None:
    """Plain SGD on the touched rows, with optional global-norm clipping."""
    if clip_grad is not None and grads:
        norm = float(np.sqrt(sum(float(g @ g) for g in grads.values())))
        if norm > clip_grad:
            scale = clip_grad / norm
            for row in grads:
                grads[row] = grads[row] * scale
    for row, g in grads.items():
        policy.theta[row] -= learning_rate * g


def _sample_batch(sampler: TabularPolicy, task: SyntheticTask, config: TrainConfig, i: int):
    prompts = task.sample_prompts(config.batch_size, _child_seed(config.seed, i, _PROMPT_STREAM))
    max_len = config.max_len if config.max_len is not None else (
        task.answer_len + (1 if task.uses_eos else 0))
    traj_rng = np.random.default_rng(_child_seed(config.seed, i, _TRAJ_STREAM))
    trajectories = []
    for prompt in prompts:
        child = int(traj_rng.integers(0, 2 ** 63 - 1))
        trajectories.append(sample_trajectory(sampler, prompt, max_len, child,
                                              temperature=config.temperature))
    return trajectories


def train_step(policy: TabularPolicy, teacher: TabularPolicy, task: SyntheticTask,
               config: TrainConfig, i: int, *,
               teacher_log_probs: Optional[np.ndarray] = None,
               accuracy: Optional[float] = None) -> MetricsRecord:
    """One full step: sample, compute losses and exact gradients, update.

    Sampling is on-policy (from the student) except for supervised KD,
    which samples the teacher. A non-finite loss or update under a veto
    objective with beta > 0 raises VetoInvariantViolation; under the
    standard objectives it is recorded, not raised.
    """
    t0 = time.perf_counter()
    if teacher_log_probs is None:
        teacher_log_probs = log_softmax_rows(teacher.theta)
    beta = beta_at(config.schedule, i)
    sampler = teacher if config.objective == "supervised_kd" else policy
    trajectories = _sample_batch(sampler, task, config, i)
    stats = batch_stats(policy, teacher_log_probs, trajectories, beta, config)

    if config.objective in ("forward_veto", "reverse_veto") and beta > 0.0:
        finite = np.isfinite(stats.loss) and all(np.all(np.isfinite(g)) for g in stats.grads.values())
        if not finite:
            raise VetoInvariantViolation(
                f"non-finite loss or update at step {i} with beta={beta}")

    apply_gradients(policy, stats.grads, config.learning_rate, config.clip_grad)

    if accuracy is None:
        accuracy = task_accuracy(policy, task, config.eval_prompts, mode="greedy",
                                 seed=_child_seed(config.seed, i, _EVAL_STREAM))
    ms = (time.perf_counter() - t0) * 1000.0
    return MetricsRecord(step=i, beta=beta, loss=stats.loss, max_grad=stats.max_grad,
                         max_grad_ignorant=stats.max_grad_ignorant, n_ignorant=stats.n_ignorant,
                         entropy=stats.entropy, kl_to_teacher=stats.kl_to_teacher,
                         accuracy=accuracy, ms=ms)


def train(policy: TabularPolicy, teacher: TabularPolicy, task: SyntheticTask,
          config: TrainConfig) -> tuple[list[MetricsRecord], TabularPolicy]:
    """Run the full loop; deterministic given the config seed.

    Greedy accuracy is evaluated at step 1, every ``eval_every`` steps,
    and at the final step; other records carry the latest value forward.
    """
    teacher_log_probs = log_softmax_rows(teacher.theta)
    records: list[MetricsRecord] = []
    last_accuracy: Optional[float] = None
    n = config.total_steps
    for i in range(1, n + 1):
        evaluate = (i == 1) or (i == n) or (config.eval_every > 0 and i % config.eval_every == 0)
        record = train_step(policy, teacher, task, config, i,
                            teacher_log_probs=teacher_log_probs,
                            accuracy=None if evaluate else last_accuracy)
        last_accuracy = record.accuracy
        records.append(record)
    return records, policy


@dataclass(frozen=True)
class GridCell:
    objective: str
    schedule_kind: str = "constant"
    beta_init: float = 0.0

    @property
    def label(self) -> str:
        if self.objective in ("forward_std", "reverse_std", "supervised_kd"):
            return self.objective
        return f"{self.objective}(b{self.beta_init:g},{self.schedule_kind})"


def compare_objectives(task: SyntheticTask, teacher: TabularPolicy,
                       base_config: TrainConfig, cells: list[GridCell],
                       policy_factory: Callable[[], TabularPolicy]) -> list[dict]:
    """Train one fresh policy per grid cell under common random numbers.

    Every cell shares the base config seed, so prompt streams are
    identical across cells and identical cells produce identical rows.
    """
    rows = []
    for cell in cells:
        schedule = BetaSchedule(kind=cell.schedule_kind, beta_init=cell.beta_init,
                                total_steps=base_config.total_steps)
        config = replace(base_config, objective=cell.objective, schedule=schedule)
        records, trained = train(policy_factory(), teacher, task, config)
        rows.append({
            "label": cell.label,
            "objective": cell.objective,
            "schedule": cell.schedule_kind,
            "beta_init": cell.beta_init,
            "final_accuracy": records[-1].accuracy,
            "max_grad_ignorant": max(r.max_grad_ignorant for r in records),
            "final_entropy": records[-1].entropy,
            "final_kl_to_teacher": records[-1].kl_to_teacher,
        })
    return rows
