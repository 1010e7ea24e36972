"""scikit-learn style front door for the distillation trainer."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .policy import SyntheticTask, TabularPolicy, greedy_decode, make_teacher, sample_trajectory, task_accuracy
from .schedule import SCHEDULE_KINDS, BetaSchedule
from .training import OBJECTIVES, TrainConfig, train
from .validation import check_beta


def default_beta_init(task: SyntheticTask) -> float:
    """0.8 for the sharp reasoning-style task, 0.3 for the softer kinds."""
    return 0.8 if task.kind == "mod_sum" else 0.3


def build_student(task: SyntheticTask, *, init: str = "zeros", init_range: float = 3.0,
                  init_seed: int = 0) -> TabularPolicy:
    """Fresh student table for a task: all-zero (uniform) or bounded-uniform logits."""
    student = TabularPolicy.zeros(task.vocab_size, task.context_len,
                                  bos_id=task.bos_id, eos_id=task.eos_id)
    if init == "zeros":
        return student
    if init == "uniform":
        rng = np.random.default_rng(np.random.SeedSequence((int(init_seed), 11)))
        student.theta[:] = rng.uniform(-float(init_range), float(init_range),
                                       size=student.theta.shape)
        return student
    raise ValueError(f"unknown init {init!r}; expected 'zeros' or 'uniform'")


class VetoDistiller(BaseEstimator):
    """Fit a tabular student to a synthetic task by on-policy distillation.

    Parameters mirror the training config; ``beta_init=None`` picks the
    per-task default. ``fit`` builds the analytic teacher (unless one is
    passed), trains the student, and stores the metrics trace.
    """

    def __init__(self, objective="forward_veto", beta_init=None, schedule="linear_decay",
                 learning_rate=0.5, total_steps=2000, batch_size=8, max_len=None,
                 smoothing=0.05, loss_reduction="sum_tokens", clip_grad=None,
                 temperature=1.0, eval_every=100, eval_prompts=200,
                 init="zeros", init_range=3.0, seed=0):
        self.objective = objective
        self.beta_init = beta_init
        self.schedule = schedule
        self.learning_rate = learning_rate
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.max_len = max_len
        self.smoothing = smoothing
        self.loss_reduction = loss_reduction
        self.clip_grad = clip_grad
        self.temperature = temperature
        self.eval_every = eval_every
        self.eval_prompts = eval_prompts
        self.init = init
        self.init_range = init_range
        self.seed = seed

    def _config(self, task: SyntheticTask) -> TrainConfig:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.schedule not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        beta = default_beta_init(task) if self.beta_init is None else check_beta(self.beta_init)
        return TrainConfig(
            objective=self.objective,
            schedule=BetaSchedule(kind=self.schedule, beta_init=beta,
                                  total_steps=int(self.total_steps)),
            learning_rate=self.learning_rate, total_steps=int(self.total_steps),
            batch_size=int(self.batch_size), max_len=self.max_len, seed=int(self.seed),
            clip_grad=self.clip_grad, loss_reduction=self.loss_reduction,
            temperature=self.temperature, eval_every=int(self.eval_every),
            eval_prompts=int(self.eval_prompts))

    def fit(self, task: SyntheticTask, teacher: Optional[TabularPolicy] = None):
        if not isinstance(task, SyntheticTask):
            raise TypeError(f"fit expects a SyntheticTask, got {type(task).__name__}")
        config = self._config(task)
        teacher = teacher if teacher is not None else make_teacher(task, self.smoothing)
        student = build_student(task, init=self.init, init_range=self.init_range,
                                init_seed=int(self.seed))
        self.metrics_, self.policy_ = train(student, teacher, task, config)
        self.teacher_ = teacher
        self.task_ = task
        self.config_ = config
        return self

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise NotFittedError("this VetoDistiller has not been fitted yet; call fit first")

    def predict(self, prompts) -> np.ndarray:
        """Greedy answers, shape (n_prompts, answer_len)."""
        self._check_fitted()
        prompts = np.atleast_2d(np.asarray(prompts, dtype=np.int64))
        return np.stack([greedy_decode(self.policy_, p, self.task_.answer_len)
                         for p in prompts])

    def sample(self, prompts, seed: int = 0) -> np.ndarray:
        """Stochastic answers under the trained policy."""
        self._check_fitted()
        prompts = np.atleast_2d(np.asarray(prompts, dtype=np.int64))
        out = []
        for j, p in enumerate(prompts):
            child = int(np.random.SeedSequence((int(seed), 13, j)).generate_state(1)[0])
            traj = sample_trajectory(self.policy_, p, self.task_.answer_len, child,
                                     temperature=self.temperature)
            out.append(np.asarray(traj.tokens))
        return np.stack(out) if len({o.shape for o in out}) == 1 else out

    def score(self, task: Optional[SyntheticTask] = None, n_eval: int = 200,
              seed: int = 0) -> float:
        """Greedy exact-match accuracy on the given (or fitted) task."""
        self._check_fitted()
        return task_accuracy(self.policy_, task if task is not None else self.task_,
                             n_eval, mode="greedy", seed=seed)
