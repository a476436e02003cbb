"""Quantitative checks on traces and denoiser behaviour.

The denoiser-vs-projection gap admits a computable envelope away from tie
frontiers: with t = sigma^2 and eta the squared-projection margin of the
winning component, the relative gap is at most

    2 * sum_{l != k} (pi_l / pi_k) * exp(-eta / (2 t (1 + t))) + t.

The envelope is meaningful for equal-rank unions (rank-mixed unions add
rank-dependent prefactors it does not track).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import FrontierError, InsufficientDataError
from .lrgmm_prior import LrGmmPrior, denoiser
from .model_sets import frontier_gap as union_frontier_gap
from .model_sets import project_union, squared_projection_norms, _check_vector
from .recovery_engine import RecoveryTrace

MSE_FLOOR = 1e-28

MIN_FIT_POINTS = 5


@dataclass(frozen=True)
class ProjectionGap:
    """Measured relative denoiser-vs-projection gap and its envelope."""

    gap: float
    bound: float
    eta: float


def projection_gap(prior: LrGmmPrior, x: np.ndarray, sigma) -> ProjectionGap:
    """Relative gap ||D(x) - P(x)|| / ||x|| against its off-frontier envelope."""
    x = _check_vector(x, prior.ambient_dim)
    norm_x = float(np.linalg.norm(x))
    if norm_x == 0.0:
        raise ValueError("the gap envelope is undefined at x = 0")
    eta = union_frontier_gap(prior.union, x)
    if eta <= 0.0:
        raise FrontierError(f"x lies on a tie frontier (margin {eta!r})")
    point, _ = project_union(prior.union, x)
    ev = denoiser(prior, x, sigma)
    gap = float(np.linalg.norm(ev.value - point)) / norm_x
    t = float(sigma) ** 2
    norms2 = squared_projection_norms(prior.union, x)
    k_star = int(np.argmax(norms2))
    pi = prior.pi
    others = np.delete(pi, k_star)
    decay = math.exp(-eta / (2.0 * t * (1.0 + t))) if math.isfinite(eta) else 0.0
    bound = 2.0 * float(np.sum(others)) / float(pi[k_star]) * decay + t
    return ProjectionGap(gap=gap, bound=bound, eta=eta)


def detect_burn_in(trace: RecoveryTrace, true_component: int):
    """First row index from which the nearest component stays the true one.

    A row counts only when the true component is the strict minimiser; on an
    exact distance tie (the zero start point ties all components) there is
    no nearest component yet.  Returns None when the last row still
    disagrees.  Requires the trace to carry per-component distances.
    """
    if trace.subspace_distances is None:
        raise ValueError("trace has no subspace distances")
    dists = trace.subspace_distances
    k = int(true_component)
    if not 0 <= k < dists.shape[1]:
        raise ValueError(f"true_component {k} out of range")
    if dists.shape[1] == 1:
        return 0
    others = np.min(np.delete(dists, k, axis=1), axis=1)
    aligned = dists[:, k] < others
    misaligned = np.flatnonzero(~aligned)
    if misaligned.size == 0:
        return 0
    first_stable = int(misaligned[-1]) + 1
    if first_stable >= trace.n_rows:
        return None
    return first_stable


@dataclass(frozen=True)
class RateFit:
    rate: float
    slope: float
    r2: float
    n_points: int


def _least_squares_line(xs: np.ndarray, ys: np.ndarray):
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def fit_linear_rate(trace: RecoveryTrace, from_n: int = 0) -> RateFit:
    """Per-iteration contraction factor of the root-mse, from a log-linear fit.

    Fits 0.5*log(mse_n) against n from ``from_n`` to the end of the trace,
    stopping before the first entry below the float floor of 1e-28.
    """
    mse = trace.mse
    from_n = int(from_n)
    if not 0 <= from_n < trace.n_rows:
        raise ValueError(f"from_n {from_n} outside trace rows")
    end = trace.n_rows
    for i in range(from_n, trace.n_rows):
        if not (mse[i] >= MSE_FLOOR):  # also stops on NaN
            end = i
            break
    ns = trace.n[from_n:end].astype(float)
    if ns.shape[0] < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"only {ns.shape[0]} usable mse points from n={from_n}; need {MIN_FIT_POINTS}"
        )
    ys = 0.5 * np.log(mse[from_n:end])
    slope, r2 = _least_squares_line(ns, ys)
    return RateFit(rate=math.exp(slope), slope=slope, r2=r2, n_points=int(ns.shape[0]))


def fit_convex_rate(curve) -> RateFit:
    """Slope of log(gap) against log(sigma * sqrt(log(1/sigma))).

    ``curve`` is a [(sigma, gap)] list as produced by convex_gap_curve.
    Zero gaps carry no information on a log scale and are dropped; at least
    5 positive-gap points must remain.
    """
    pts = [(float(s), float(g)) for s, g in curve if g > 0.0]
    if len(pts) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"only {len(pts)} positive-gap points; need {MIN_FIT_POINTS}"
        )
    sigmas = np.array([s for s, _ in pts])
    gaps = np.array([g for _, g in pts])
    if np.any(sigmas >= 1.0):
        raise ValueError("sigmas must be < 1 so that log(1/sigma) is positive")
    xs = np.log(sigmas * np.sqrt(np.log(1.0 / sigmas)))
    ys = np.log(gaps)
    slope, r2 = _least_squares_line(xs, ys)
    return RateFit(rate=math.exp(slope), slope=slope, r2=r2, n_points=len(pts))
