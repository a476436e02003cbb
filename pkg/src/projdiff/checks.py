"""Executable invariant suite behind the ``check`` subcommand.

Each check reduces to one number compared against one bound, so the report
is a flat CSV.  The two checks most likely to catch a silent regression
(the posterior-mean identity and weight normalisation at tiny noise) accept
injectable implementations, which is also how the tests confirm that a
broken build actually trips them.
"""

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import convex_prior, lrgmm_prior
from .diagnostics import fit_linear_rate, projection_gap
from .errors import FrontierError
from .model_sets import BoxSet, UnionOfSubspaces, coordinate_subspace, project_box, \
    project_union, random_union, squared_projection_norms
from .recovery_engine import NoiseSchedule, RecoveryTrace, gpgd_step, kadkhodaie_step, \
    run_recovery, schedule_sigma
from .sensing_analysis import SensingProblem, gaussian_operator, ric_union

CHECK_LEVELS = ("fast", "full")


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float
    passed: bool


def _result(name, value, bound) -> CheckResult:
    value = float(value)
    return CheckResult(name=name, value=value, bound=float(bound),
                       passed=bool(value <= bound))


def _check_tweedie_identity(n_instances, denoiser_fn) -> CheckResult:
    r = np.random.default_rng(31337)
    worst = 0.0
    for trial in range(n_instances):
        d = int(r.integers(2, 9))
        k = int(r.integers(1, 5))
        ranks = [int(r.integers(1, max(2, d // 2 + 1))) for _ in range(k)]
        prior = lrgmm_prior.lrgmm_from_pi(
            random_union(d, ranks, np.random.default_rng(int(r.integers(1 << 30)))),
            r.dirichlet(np.ones(k)),
        )
        x = r.normal(size=d) * float(10 ** r.uniform(-0.5, 0.5))
        sigma = [0.1, 0.5, 1.0][trial % 3]
        ev = denoiser_fn(prior, x, sigma)
        h = 1e-5
        grad = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            grad[i] = (
                denoiser_fn(prior, x + e, sigma).log_density
                - denoiser_fn(prior, x - e, sigma).log_density
            ) / (2 * h)
        lhs = sigma * sigma * grad
        rhs = ev.value - x
        rel = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
        if not math.isfinite(rel):
            rel = math.inf
        worst = max(worst, rel)
    return _result("tweedie_identity", worst, 1e-4)


def _check_weight_stability(weights_fn) -> CheckResult:
    r = np.random.default_rng(808)
    worst = 0.0
    for _ in range(6):
        d = int(r.integers(3, 9))
        k = int(r.integers(2, 5))
        prior = lrgmm_prior.uniform_lrgmm(
            random_union(d, [int(r.integers(1, d)) for _ in range(k)], r)
        )
        for scale in (1.0, 1e3):
            x = r.normal(size=d) * scale
            for t in (1e-8, 1e-10):
                w = np.asarray(weights_fn(prior, x, t), dtype=float)
                defect = abs(float(np.sum(w)) - 1.0)
                if not np.all(np.isfinite(w)):
                    defect = math.inf
                worst = max(worst, defect)
    return _result("weight_stability", worst, 1e-10)


def _check_k1_operator_law() -> CheckResult:
    sub = coordinate_subspace(6, [0, 1])
    prior = lrgmm_prior.uniform_lrgmm(UnionOfSubspaces((sub,)))
    worst = 0.0
    for sigma in (1e-4, 1e-2, 0.5):
        t = sigma * sigma
        sup_gap = 0.0
        for i in range(6):
            e = np.zeros(6)
            e[i] = 1.0
            ev = lrgmm_prior.denoiser(prior, e, sigma)
            gap = float(np.linalg.norm(ev.value - sub.basis @ (sub.basis.T @ e)))
            sup_gap = max(sup_gap, gap)
        worst = max(worst, abs(sup_gap - t / (1.0 + t)))
    return _result("k1_operator_law", worst, 1e-12)


def _check_gap_envelope(n_instances) -> CheckResult:
    r = np.random.default_rng(4242)
    violations = 0
    n_checked = 0
    while n_checked < n_instances:
        d = int(r.integers(4, 17))
        k = int(r.integers(2, 5))
        rank = int(r.integers(1, d // 2 + 1))
        prior = lrgmm_prior.lrgmm_from_pi(
            random_union(d, [rank] * k, np.random.default_rng(int(r.integers(1 << 30)))),
            r.dirichlet(np.ones(k)),
        )
        x = r.normal(size=d)
        sigma = float(10 ** r.uniform(-3, math.log10(0.5)))
        try:
            res = projection_gap(prior, x, sigma)
        except FrontierError:
            continue
        if res.gap > res.bound + 1e-12:
            violations += 1
        n_checked += 1
    return _result("gap_envelope", violations, 0)


def _check_union_pythagoras() -> CheckResult:
    r = np.random.default_rng(909)
    worst = 0.0
    for _ in range(200):
        d = int(r.integers(2, 12))
        k = int(r.integers(1, 5))
        union = random_union(d, [int(r.integers(1, d)) for _ in range(k)], r)
        x = r.normal(size=d) * 3
        point, _ = project_union(union, x)
        lhs = float(x @ x)
        rhs = float(point @ point) + float((x - point) @ (x - point))
        worst = max(worst, abs(lhs - rhs) / max(lhs, 1.0))
    return _result("union_pythagoras", worst, 1e-9)


def _check_schedule_monotone() -> CheckResult:
    schedules = [
        NoiseSchedule("geometric", 0.5, 1e-4, 150),
        NoiseSchedule("linear", 0.5, 1e-4, 150),
        NoiseSchedule("cosine", 0.5, 1e-4, 150),
        NoiseSchedule("infinite_geometric", 0.5, a=0.96),
    ]
    increases = 0
    for sched in schedules:
        horizon = 150
        values = [schedule_sigma(sched, n) for n in range(horizon + 1)]
        increases += sum(1 for a, b in zip(values, values[1:]) if b > a * (1 + 1e-12))
    return _result("schedule_monotone", increases, 0)


def _check_form_equivalence(n_states) -> CheckResult:
    prior = lrgmm_prior.random_lrgmm(16, 2, 3, np.random.default_rng(61))
    a = gaussian_operator(8, 16, np.random.default_rng(67))
    xs = np.random.default_rng(71).normal(size=(n_states, 16))
    y = a @ lrgmm_prior.sample(prior, np.random.default_rng(73))
    denoise = lambda z, sg: lrgmm_prior.denoiser(prior, z, sg).value
    worst = 0.0
    for x in xs:
        lhs = kadkhodaie_step(prior, a, y, x, 0.25)
        rhs = gpgd_step(denoise, a, 1.0, y, x, 0.25)
        worst = max(
            worst, float(np.max(np.abs(lhs - rhs))) / (1.0 + float(np.linalg.norm(x)))
        )
    return _result("form_equivalence", worst, 1e-10)


def _check_box_tail_value() -> CheckResult:
    got = float(convex_prior.truncated_normal_mean(-1.0, 1.0, 5.0, 1e-3))
    defect = abs(got - 0.99999975000003125)
    if got >= 1.0:
        defect = math.inf
    return _result("box_tail_value", defect, 1e-12)


def _check_box_mc_agreement(n_configs, n_samples) -> CheckResult:
    r = np.random.default_rng(5150)
    max_z = 0.0
    for cfg in range(n_configs):
        s_dim = int(r.integers(1, 4))
        lo = -(0.3 + 1.2 * r.random(s_dim))
        hi = 0.3 + 1.2 * r.random(s_dim)
        box = BoxSet(lower=lo, upper=hi)
        sigma = float(r.uniform(0.25, 1.0))
        y = project_box(box, r.normal(size=s_dim)) + sigma * 0.5 * r.normal(size=s_dim)
        exact = convex_prior.box_denoiser(box, y, sigma)
        est = convex_prior.mc_denoiser(
            box, y, sigma, n_samples, np.random.default_rng(9000 + cfg)
        )
        z = np.abs(exact - est.value) / est.stderr
        max_z = max(max_z, float(np.max(z)))
    return _result("box_mc_agreement", max_z, 4.0)


def _check_ric_exact_probes() -> CheckResult:
    union = UnionOfSubspaces(
        tuple(coordinate_subspace(8, sup) for sup in ([0, 1], [2, 3], [4, 5]))
    )
    worst = abs(ric_union(np.zeros((4, 8)), 1.0, union) - 1.0)
    perm = np.eye(8)[np.array([3, 1, 4, 0, 6, 2, 7, 5])]
    perm[0] *= -1
    worst = max(worst, ric_union(perm, 1.0, union))
    return _result("ric_exact_probes", worst, 1e-12)


def _check_rate_fit_exact() -> CheckResult:
    mse = 1.0 * 0.25 ** np.arange(12)
    trace = RecoveryTrace(
        n=np.arange(12),
        sigma=np.geomspace(0.5, 1e-4, 12),
        mse=mse,
        residual=np.zeros(12),
        frontier_gap=np.full(12, np.nan),
        weight_entropy=np.full(12, np.nan),
    )
    fit = fit_linear_rate(trace)
    return _result("rate_fit_exact", abs(fit.rate - 0.5), 1e-12)


def _check_trace_roundtrip() -> CheckResult:
    prior = lrgmm_prior.random_lrgmm(5, 1, 2, np.random.default_rng(303))
    a = gaussian_operator(3, 5, np.random.default_rng(304))
    x_true = lrgmm_prior.sample(prior, np.random.default_rng(305))
    problem = SensingProblem(a, 1.0 / 50.0, a @ x_true, x_true=x_true, seed=305)
    denoise = lambda z, sg: lrgmm_prior.denoiser(prior, z, sg).value
    trace = run_recovery(
        problem, denoise, NoiseSchedule("geometric", 0.5, 1e-3, 10), prior=prior
    )
    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        trace.write_csv(path)
        back = RecoveryTrace.read_csv(path)
    finally:
        os.unlink(path)
    mismatches = 0
    for col in ("n", "sigma", "mse", "residual", "frontier_gap", "weight_entropy"):
        av, bv = getattr(trace, col), getattr(back, col)
        if not np.array_equal(np.nan_to_num(av, nan=-1), np.nan_to_num(bv, nan=-1)):
            mismatches += 1
    if not np.array_equal(trace.subspace_distances, back.subspace_distances):
        mismatches += 1
    if trace.metadata != back.metadata:
        mismatches += 1
    return _result("trace_roundtrip", mismatches, 0)


def run_checks(level: str = "fast", denoiser_fn=None, weights_fn=None) -> list:
    """Run the invariant suite; returns a list of CheckResult.

    ``denoiser_fn(prior, x, sigma)`` and ``weights_fn(prior, x, t)`` default
    to the library implementations.
    """
    if level not in CHECK_LEVELS:
        raise ValueError(f"level must be one of {CHECK_LEVELS}, got {level!r}")
    full = level == "full"
    if denoiser_fn is None:
        denoiser_fn = lrgmm_prior.denoiser
    if weights_fn is None:
        weights_fn = lrgmm_prior.weights
    return [
        _check_tweedie_identity(200 if full else 40, denoiser_fn),
        _check_weight_stability(weights_fn),
        _check_k1_operator_law(),
        _check_gap_envelope(10_000 if full else 300),
        _check_union_pythagoras(),
        _check_schedule_monotone(),
        _check_form_equivalence(100 if full else 20),
        _check_box_tail_value(),
        _check_box_mc_agreement(*((50, 150_000) if full else (5, 30_000))),
        _check_ric_exact_probes(),
        _check_rate_fit_exact(),
        _check_trace_roundtrip(),
    ]


def report_csv(results) -> str:
    lines = ["name,value,bound,pass"]
    for res in results:
        lines.append(
            f"{res.name},{format(res.value, '.17g')},{format(res.bound, '.17g')},"
            f"{'true' if res.passed else 'false'}"
        )
    return "\n".join(lines) + "\n"


def report_table(results) -> str:
    width = max(len(res.name) for res in results)
    lines = []
    for res in results:
        status = "ok  " if res.passed else "FAIL"
        lines.append(
            f"{status} {res.name.ljust(width)}  value={res.value:.3e}  bound={res.bound:.3e}"
        )
    n_failed = sum(1 for res in results if not res.passed)
    lines.append(f"{len(results) - n_failed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
