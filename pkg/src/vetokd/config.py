"""Strict YAML experiment configs.

Unknown keys anywhere in the document are rejected; every leaf is type-
and range-checked with its full key path in the error message. All
randomness flows from the seeds declared here (or the --seed override).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .policy import SyntheticTask, TASK_KINDS
from .schedule import SCHEDULE_KINDS, BetaSchedule
from .training import OBJECTIVES, TrainConfig

SCHEMA_VERSION = 1


@dataclass
class PolicySpec:
    init: str = "zeros"
    init_range: float = 3.0
    init_seed: int = 0
    smoothing: float = 0.05


@dataclass
class AblateSpec:
    objective: str = "forward_veto"
    beta_values: list[float] = field(default_factory=lambda: [0.2, 0.5, 0.8])
    schedules: list[str] = field(default_factory=lambda: ["constant", "linear_decay"])


@dataclass
class ExperimentConfig:
    task: SyntheticTask
    policy: PolicySpec
    train: TrainConfig
    seeds: list[int]
    out_dir: Optional[str] = None
    grad_ceiling: float = 100.0
    ablate: AblateSpec = field(default_factory=AblateSpec)


def _require_mapping(node: Any, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(node) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(repr(k) for k in unknown)}")


_MISSING = object()


def _get(node: dict, key: str, default, kind, path: str, *, choices=None, check=None):
    """Fetch node[key] with type/choice/range checks.

    A default of None marks the field optional: absent or null both
    yield None, but a provided value is still fully checked.
    """
    value = node.get(key, _MISSING)
    if value is _MISSING:
        value = default
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{path}.{key}: must not be null")
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got boolean {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path}.{key}: {value!r} not in {sorted(choices)}")
    if check is not None and not check(value):
        raise ConfigError(f"{path}.{key}: value {value!r} out of range")
    return value


def default_beta_for_task(kind: str) -> float:
    return 0.8 if kind == "mod_sum" else 0.3


def parse_config(doc: dict) -> ExperimentConfig:
    doc = _require_mapping(doc, "<root>")
    _reject_unknown(doc, {"schema_version", "out_dir", "seed", "task", "policy",
                          "train", "schedule", "ignorant", "grad_ceiling", "ablate"},
                    "<root>")
    version = _get(doc, "schema_version", None, int, "<root>")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"<root>.schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    t = _require_mapping(doc.get("task"), "task")
    _reject_unknown(t, {"kind", "vocab_size", "prompt_len", "answer_len", "seed"}, "task")
    kind = _get(t, "kind", "mod_sum", str, "task", choices=set(TASK_KINDS))
    try:
        task = SyntheticTask(
            kind=kind,
            vocab_size=_get(t, "vocab_size", 8, int, "task", check=lambda v: v >= 2),
            prompt_len=_get(t, "prompt_len", 2, int, "task", check=lambda v: v >= 1),
            answer_len=_get(t, "answer_len", 4, int, "task", check=lambda v: v >= 1),
            seed=_get(t, "seed", 0, int, "task"),
        )
    except ValueError as exc:
        raise ConfigError(f"task: {exc}") from exc

    p = _require_mapping(doc.get("policy"), "policy")
    _reject_unknown(p, {"init", "init_range", "init_seed", "smoothing"}, "policy")
    policy = PolicySpec(
        init=_get(p, "init", "zeros", str, "policy", choices={"zeros", "uniform"}),
        init_range=_get(p, "init_range", 3.0, float, "policy", check=lambda v: v > 0),
        init_seed=_get(p, "init_seed", 0, int, "policy"),
        smoothing=_get(p, "smoothing", 0.05, float, "policy", check=lambda v: 0 < v < 0.5),
    )

    s = _require_mapping(doc.get("schedule"), "schedule")
    _reject_unknown(s, {"kind", "beta_init", "cumulative"}, "schedule")
    beta_init = _get(s, "beta_init", default_beta_for_task(task.kind), float, "schedule")
    if not (0.0 <= beta_init < 1.0):
        raise ConfigError(f"schedule.beta_init: {beta_init} outside the valid range [0, 1)")

    tr = _require_mapping(doc.get("train"), "train")
    _reject_unknown(tr, {"objective", "learning_rate", "total_steps", "batch_size",
                         "max_len", "loss_reduction", "clip_grad", "temperature",
                         "eval_every", "eval_prompts", "differentiate_through_target"},
                    "train")
    total_steps = _get(tr, "total_steps", 2000, int, "train", check=lambda v: v >= 1)
    schedule = BetaSchedule(
        kind=_get(s, "kind", "linear_decay", str, "schedule", choices=set(SCHEDULE_KINDS)),
        beta_init=beta_init,
        total_steps=total_steps,
        cumulative=_get(s, "cumulative", False, bool, "schedule"),
    )

    ign = _require_mapping(doc.get("ignorant"), "ignorant")
    _reject_unknown(ign, {"teacher_min", "student_max"}, "ignorant")

    max_len = _get(tr, "max_len", None, int, "train", check=lambda v: v >= 1)
    clip_grad = _get(tr, "clip_grad", None, float, "train", check=lambda v: v > 0)
    try:
        train_config = TrainConfig(
            objective=_get(tr, "objective", "forward_veto", str, "train", choices=set(OBJECTIVES)),
            schedule=schedule,
            learning_rate=_get(tr, "learning_rate", 0.5, float, "train", check=lambda v: v > 0),
            total_steps=total_steps,
            batch_size=_get(tr, "batch_size", 8, int, "train", check=lambda v: v >= 1),
            max_len=max_len,
            seed=0,  # overwritten per run from the seed list
            clip_grad=clip_grad,
            loss_reduction=_get(tr, "loss_reduction", "sum_tokens", str, "train",
                                choices={"sum_tokens", "mean_tokens"}),
            temperature=_get(tr, "temperature", 1.0, float, "train", check=lambda v: v > 0),
            eval_every=_get(tr, "eval_every", 100, int, "train", check=lambda v: v >= 0),
            eval_prompts=_get(tr, "eval_prompts", 200, int, "train", check=lambda v: v >= 1),
            ignorant_teacher_min=_get(ign, "teacher_min", 0.1, float, "ignorant",
                                      check=lambda v: 0 < v < 1),
            ignorant_student_max=_get(ign, "student_max", 0.01, float, "ignorant",
                                      check=lambda v: 0 < v < 1),
            differentiate_through_target=_get(tr, "differentiate_through_target",
                                              False, bool, "train"),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc

    seed_node = doc.get("seed", 0)
    if isinstance(seed_node, bool) or not isinstance(seed_node, (int, list)):
        raise ConfigError(f"<root>.seed: expected int or list of ints, got {seed_node!r}")
    seeds = [seed_node] if isinstance(seed_node, int) else list(seed_node)
    if not seeds or not all(isinstance(x, int) and not isinstance(x, bool) for x in seeds):
        raise ConfigError("<root>.seed: list must be non-empty ints")

    ab = _require_mapping(doc.get("ablate"), "ablate")
    _reject_unknown(ab, {"objective", "beta_values", "schedules"}, "ablate")
    betas = ab.get("beta_values", [0.2, 0.5, 0.8])
    if not isinstance(betas, list) or not all(
            isinstance(b, (int, float)) and not isinstance(b, bool) and 0 <= b < 1 for b in betas):
        raise ConfigError("ablate.beta_values: expected a list of floats in [0, 1)")
    kinds = ab.get("schedules", ["constant", "linear_decay"])
    if not isinstance(kinds, list) or not all(k in SCHEDULE_KINDS for k in kinds):
        raise ConfigError(f"ablate.schedules: entries must be in {SCHEDULE_KINDS}")
    ablate = AblateSpec(
        objective=_get(ab, "objective", "forward_veto", str, "ablate", choices=set(OBJECTIVES)),
        beta_values=[float(b) for b in betas],
        schedules=list(kinds),
    )

    out_dir = _get(doc, "out_dir", None, str, "<root>")
    grad_ceiling = _get(doc, "grad_ceiling", 100.0, float, "<root>", check=lambda v: v > 0)
    return ExperimentConfig(task=task, policy=policy, train=train_config, seeds=seeds,
                            out_dir=out_dir, grad_ceiling=grad_ceiling, ablate=ablate)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(doc)
