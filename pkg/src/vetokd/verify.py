"""Independent numerical oracles for the objective's limit claims.

Three families of checks, each runnable standalone and from the CLI:

* gradient-veto limit: the dominant forward term -p^b*ln(p) vanishes as
  p -> 0 for b > 0 while -ln(p) diverges at b = 0;
* sharpening fixed point: iterating P <- normalize(P_T * P^b) lands on
  the closed-form power transform P_T^(1/(1-b)), and gradient descent
  on the forward loss reaches the same distribution;
* REINFORCE bridge: the analytic reverse gradient, the exact-enumeration
  policy-gradient sum, and central finite differences all agree, and the
  Monte-Carlo estimator is statistically consistent with them.

Every suite is deterministic given its seed and reports one line per
check: suite, instance, metric, value, threshold, PASS/FAIL.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dist import Categorical, kl_divergence, normalize, sharpen
from .errors import OracleProbeFailure
from .objective import (
    forward_veto_loss,
    mix_logits,
    reinforce_gradient_exact,
    reinforce_gradient_mc_stats,
    reverse_veto_loss,
    veto_token_loss_limit,
)
from .validation import check_beta

# Central tolerance table. Fixed-point and enumeration checks are pure
# float64 arithmetic; the FD bound sits above the h=1e-5 truncation
# floor; the descent bound absorbs optimization noise.
TOLERANCES = {
    "reduction": 1e-12,
    "fixed_point_linf": 1e-9,
    "fd_relative": 1e-6,
    "gd_total_variation": 1e-3,
    "reinforce_elementwise": 1e-10,
    "mc_stderr_multiple": 3.0,
}

FD_STEP = 1e-5
LOGIT_RANGE = 3.0  # random instances draw logits i.i.d. from [-3, 3]


@dataclass
class CheckLine:
    suite: str
    instance: str
    metric: str
    value: float
    threshold: float
    passed: bool

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"suite={self.suite} instance={self.instance} metric={self.metric} "
                f"value={self.value:.6e} threshold={self.threshold:.6e} status={status}")


@dataclass
class SuiteReport:
    name: str
    checks: list[CheckLine] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def n_failed(self) -> int:
        return sum(not c.passed for c in self.checks)

    def add(self, instance: str, metric: str, value: float, threshold: float,
            *, smaller_is_pass: bool = True) -> None:
        ok = value <= threshold if smaller_is_pass else value >= threshold
        self.checks.append(CheckLine(self.name, instance, metric, float(value),
                                     float(threshold), bool(ok)))

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({self.n_failed}/{len(self.checks)})"
        return f"{self.name}: {len(self.checks)} checks, {status}"


def write_report(reports: Sequence[SuiteReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            for check in report.checks:
                fh.write(check.render() + "\n")
        for report in reports:
            fh.write("# " + report.summary() + "\n")


def finite_difference_grad(loss_fn: Callable[[np.ndarray], float], z: np.ndarray,
                           h: float = FD_STEP) -> np.ndarray:
    """Central differences (f(z + h e_i) - f(z - h e_i)) / 2h per coordinate."""
    if not (h > 0):
        raise ValueError(f"h must be > 0, got {h}")
    z = np.asarray(z, dtype=np.float64)
    grad = np.empty_like(z)
    for i in range(z.shape[0]):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fp, fm = float(loss_fn(zp)), float(loss_fn(zm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleProbeFailure(f"non-finite loss at probe coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class FixedPointResult:
    converged: bool
    iterations: int
    final: Categorical
    linf_error: float
    beta: float
    error_history: list[float] = field(default_factory=list)


def fixed_point_iterate(p_T: Categorical, beta: float, tol: float = TOLERANCES["fixed_point_linf"],
                        max_iter: int = 500, start: Categorical | None = None) -> FixedPointResult:
    """Iterate P <- normalize(P_T * P^beta) to the self-consistent target.

    Tracks the sup-norm probability error against the independent
    closed form sharpen(P_T, 1 - beta) each iteration; converged means
    the error fell below tol within max_iter. Non-convergence is
    reported in the result, not raised.
    """
    beta = check_beta(beta)
    closed = sharpen(p_T, 1.0 - beta).probs
    lp = (start.log_probs if start is not None
          else np.full(len(p_T), -np.log(len(p_T))))
    lt = p_T.log_probs
    history: list[float] = []
    iterations = 0
    err = float(np.max(np.abs(np.exp(lp) - closed)))
    for iterations in range(1, int(max_iter) + 1):
        mixed = lt + beta * lp
        m = mixed.max()
        lp = mixed - (m + np.log(np.exp(mixed - m).sum()))
        err = float(np.max(np.abs(np.exp(lp) - closed)))
        history.append(err)
        if err <= tol:
            break
    return FixedPointResult(converged=err <= tol, iterations=iterations,
                            final=Categorical(lp), linf_error=err, beta=beta,
                            error_history=history)


def _random_logits(rng: np.random.Generator, v: int) -> np.ndarray:
    return rng.uniform(-LOGIT_RANGE, LOGIT_RANGE, size=v)


def reduction_suite(n_instances: int = 1000, seed: int = 20250811) -> SuiteReport:
    """beta = 0 must reproduce plain forward/reverse KL to float identity."""
    report = SuiteReport("reductions")
    rng = np.random.default_rng(seed)
    worst_fwd = 0.0
    worst_rev = 0.0
    for _ in range(int(n_instances)):
        v = int(rng.integers(2, 65))
        z_T, z_S = _random_logits(rng, v), _random_logits(rng, v)
        p_T, p_S = normalize(z_T), normalize(z_S)
        worst_fwd = max(worst_fwd, abs(forward_veto_loss(z_T, z_S, 0.0).loss
                                       - kl_divergence(p_T, p_S)))
        worst_rev = max(worst_rev, abs(reverse_veto_loss(z_T, z_S, 0.0).loss
                                       - kl_divergence(p_S, p_T)))
    tol = TOLERANCES["reduction"]
    report.add(f"n{n_instances}", "forward_beta0_max_abs_dev", worst_fwd, tol)
    report.add(f"n{n_instances}", "reverse_beta0_max_abs_dev", worst_rev, tol)
    return report


def _fd_relative_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(fd))), float(np.max(np.abs(analytic))), 1e-12)
    return float(np.max(np.abs(analytic - fd))) / scale


def gradient_suite(n_instances: int = 50, seed: int = 20250812) -> SuiteReport:
    """Analytic gradients of both regimes against central differences.

    Covers the detached default (the FD closure holds Q fixed) and the
    fully coupled variant (the closure rebuilds Q from the probe point).
    """
    report = SuiteReport("gradients")
    rng = np.random.default_rng(seed)
    tol = TOLERANCES["fd_relative"]
    betas = (0.0, 0.25, 0.5, 0.75, 0.9)
    for idx in range(int(n_instances)):
        v = int(rng.integers(2, 33))
        beta = betas[idx % len(betas)]
        z_T, z_S = _random_logits(rng, v), _random_logits(rng, v)
        q_fixed = mix_logits(z_T, z_S, beta).q

        fwd = forward_veto_loss(z_T, z_S, beta)
        fd = finite_difference_grad(lambda z: kl_divergence(q_fixed, normalize(z)), z_S)
        report.add(f"b{beta:g}_v{v}_i{idx}", "forward_detached_fd_rel",
                   _fd_relative_error(fwd.grad_wrt_student_logits, fd), tol)

        rev = reverse_veto_loss(z_T, z_S, beta)
        fd = finite_difference_grad(lambda z: kl_divergence(normalize(z), q_fixed), z_S)
        report.add(f"b{beta:g}_v{v}_i{idx}", "reverse_detached_fd_rel",
                   _fd_relative_error(rev.grad_wrt_student_logits, fd), tol)

        fwd_c = forward_veto_loss(z_T, z_S, beta, differentiate_through_target=True)
        fd = finite_difference_grad(
            lambda z: forward_veto_loss(z_T, z, beta).loss, z_S)
        report.add(f"b{beta:g}_v{v}_i{idx}", "forward_coupled_fd_rel",
                   _fd_relative_error(fwd_c.grad_wrt_student_logits, fd), tol)

        rev_c = reverse_veto_loss(z_T, z_S, beta, differentiate_through_target=True)
        fd = finite_difference_grad(
            lambda z: reverse_veto_loss(z_T, z, beta).loss, z_S)
        report.add(f"b{beta:g}_v{v}_i{idx}", "reverse_coupled_fd_rel",
                   _fd_relative_error(rev_c.grad_wrt_student_logits, fd), tol)
    return report


def theorem1_sweep(betas: Sequence[float] = (0.0, 0.3, 0.5, 0.8),
                   p_grid: Sequence[float] = tuple(10.0 ** -k for k in range(4, 13)),
                   ) -> tuple[list[dict], SuiteReport]:
    """Limit table over (beta, p) plus the bounded-vs-diverging contrast.

    For beta > 0 the tail of the loss-limit column must decrease towards
    0; at beta = 0 the per-token loss -ln(p) must exceed k for p = 10^-k.
    The table also carries the exact forward-gradient sup-norm on a
    two-token instance with P_S(y) = p, which stays below 1 everywhere.
    """
    p_grid = sorted(p_grid, reverse=True)
    report = SuiteReport("theorem1")
    rows: list[dict] = []
    for beta in betas:
        beta = check_beta(beta)
        values = []
        for p in p_grid:
            value = veto_token_loss_limit(p, beta)
            z_S = np.array([np.log(p), np.log1p(-p)])
            z_T = np.array([np.log(0.9), np.log(0.1)])
            grad = forward_veto_loss(z_T, z_S, beta).grad_wrt_student_logits
            rows.append({"beta": beta, "p": p, "loss_limit": value,
                         "grad_sup_norm": float(np.max(np.abs(grad)))})
            values.append(value)
        if beta > 0.0:
            tail = values[len(values) // 2:]
            monotone = all(a > b for a, b in zip(tail, tail[1:]))
            report.add(f"b{beta:g}", "tail_monotone_decreasing",
                       0.0 if monotone else 1.0, 0.5)
            report.add(f"b{beta:g}", "loss_at_smallest_p", values[-1], values[0])
        else:
            diverges = all(-np.log(p) > -np.log10(p) for p in p_grid)
            report.add("b0", "neg_log_p_exceeds_k", 0.0 if diverges else 1.0, 0.5)
    return rows, report


def theorem2_suite(betas: Sequence[float] = (0.1, 0.3, 0.5, 0.7, 0.9),
                   vocab_sizes: Sequence[int] = (2, 8, 32, 64),
                   n_random: int = 50, seed: int = 20250813,
                   max_fp_iter: int = 500, gd_max_iter: int = 20000) -> SuiteReport:
    """Fixed-point iteration and gradient descent against the closed form.

    Per random teacher: (a) the iteration must match sharpen(P_T, 1-b)
    within sup-norm 1e-9 inside max_fp_iter steps; (b) plain gradient
    descent on the forward loss over a free student logit vector must
    land within total variation 1e-3 of the same distribution. Descent
    runs vectorized across the cell's teachers.
    """
    report = SuiteReport("theorem2")
    rng = np.random.default_rng(seed)
    fp_tol = TOLERANCES["fixed_point_linf"]
    tv_tol = TOLERANCES["gd_total_variation"]
    for beta in betas:
        beta = check_beta(beta)
        for v in vocab_sizes:
            teachers = rng.uniform(-LOGIT_RANGE, LOGIT_RANGE, size=(int(n_random), v))
            for i in range(int(n_random)):
                result = fixed_point_iterate(normalize(teachers[i]), beta,
                                             tol=fp_tol, max_iter=max_fp_iter)
                report.add(f"b{beta:g}_v{v}_i{i}", "fixed_point_linf",
                           result.linf_error, fp_tol)
            tv = _descend_to_sharpened(teachers, beta, max_iter=gd_max_iter, tv_tol=tv_tol)
            for i in range(int(n_random)):
                report.add(f"b{beta:g}_v{v}_i{i}", "gd_total_variation",
                           float(tv[i]), tv_tol)
    return report


def _row_log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return z - (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))


def _descend_to_sharpened(teacher_logits: np.ndarray, beta: float, *,
                          max_iter: int, tv_tol: float) -> np.ndarray:
    """Gradient descent on the detached forward loss, batched over rows.

    Per row the update is the forward gradient P_S - Q; its stationary
    point is P_S = Q, the sharpened teacher. The sharp-target regime
    (beta near 1) crawls logarithmically into the saturated tail, so the
    step size scales with 1/(1-beta). Returns the final total-variation
    distance per row.
    """
    lt = _row_log_softmax(np.asarray(teacher_logits, dtype=np.float64))
    target = np.exp(_row_log_softmax(lt / (1.0 - beta)))
    z = np.zeros_like(lt)
    # Near the fixed point the descent contracts like 1 - lr*(1-beta)*lambda
    # with lambda <= 1/4, so 3/(1-beta) keeps the sharp-target cells moving
    # while staying inside the lr < 8/(1-beta) stability bound.
    lr = 3.0 / (1.0 - beta)
    tv = np.full(lt.shape[0], np.inf)
    for it in range(int(max_iter)):
        ls = _row_log_softmax(z)
        lq = _row_log_softmax(lt + beta * z)
        p_s = np.exp(ls)
        z -= lr * (p_s - np.exp(lq))
        if it % 25 == 0 or it == max_iter - 1:
            tv = 0.5 * np.abs(p_s - target).sum(axis=1)
            if np.all(tv <= tv_tol * 0.5):
                break
    ls = _row_log_softmax(z)
    return 0.5 * np.abs(np.exp(ls) - target).sum(axis=1)


def theorem3_suite(betas: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 0.9),
                   vocab_sizes: Sequence[int] = (2, 4, 8, 16, 32),
                   n_random: int = 200, mc_samples: int = 100000,
                   mc_instances: int = 10, seed: int = 20250814) -> SuiteReport:
    """Three-way gradient agreement plus Monte-Carlo consistency.

    Per instance: analytic reverse gradient vs exact enumeration within
    1e-10 elementwise; both vs central differences of the detached loss
    within 1e-6 relative. On the first mc_instances instances the MC
    estimator must sit within 3 standard errors componentwise.
    """
    report = SuiteReport("theorem3")
    rng = np.random.default_rng(seed)
    elem_tol = TOLERANCES["reinforce_elementwise"]
    fd_tol = TOLERANCES["fd_relative"]
    k_se = TOLERANCES["mc_stderr_multiple"]
    for idx in range(int(n_random)):
        beta = betas[idx % len(betas)]
        v = int(vocab_sizes[(idx // len(betas)) % len(vocab_sizes)])
        z_T, z_S = _random_logits(rng, v), _random_logits(rng, v)
        name = f"b{beta:g}_v{v}_i{idx}"

        analytic = reverse_veto_loss(z_T, z_S, beta).grad_wrt_student_logits
        enumerated = reinforce_gradient_exact(z_T, z_S, beta)
        report.add(name, "analytic_vs_enum_linf",
                   float(np.max(np.abs(analytic - enumerated))), elem_tol)

        q_fixed = mix_logits(z_T, z_S, beta).q
        fd = finite_difference_grad(lambda z: kl_divergence(normalize(z), q_fixed), z_S)
        report.add(name, "analytic_vs_fd_rel", _fd_relative_error(analytic, fd), fd_tol)
        report.add(name, "enum_vs_fd_rel", _fd_relative_error(enumerated, fd), fd_tol)

        if idx < int(mc_instances):
            mc_seed = int(rng.integers(0, 2 ** 31))
            mc, stderr = reinforce_gradient_mc_stats(z_T, z_S, beta, mc_samples, mc_seed)
            margin = k_se * stderr + 1e-12
            excess = float(np.max(np.abs(mc - enumerated) - margin))
            report.add(name, "mc_beyond_3se", excess, 0.0)
    return report


SUITE_BUILDERS = {
    "reductions": reduction_suite,
    "gradients": gradient_suite,
    "theorem1": lambda: theorem1_sweep()[1],
    "theorem2": theorem2_suite,
    "theorem3": theorem3_suite,
}


def run_suites(selector: str = "all") -> list[SuiteReport]:
    if selector == "all":
        names = list(SUITE_BUILDERS)
    elif selector in SUITE_BUILDERS:
        names = [selector]
    else:
        raise ValueError(f"unknown suite selector {selector!r}")
    return [SUITE_BUILDERS[name]() for name in names]
