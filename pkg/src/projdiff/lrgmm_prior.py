"""Low-rank Gaussian mixture priors and their exact MMSE denoisers.

The prior is a mixture of degenerate Gaussians, one per subspace: component k
puts an isotropic unit Gaussian on E_k.  Blurring with N(0, t I) gives a
full-rank mixture whose covariances are U_k U_k^T + t I; all densities are
evaluated in the log domain through the bases alone, using

    det(U U^T + t I) = (1+t)^r * t^(d-r)
    x^T (U U^T + t I)^{-1} x = ||u||^2/(1+t) + ||x-u||^2/t,   u = U U^T x.

The posterior-mean denoiser is the component-weighted projection
(1/(1+sigma^2)) * sum_k w_k U_k U_k^T x, which equals x + sigma^2 times the
gradient of the blurred log density (Tweedie's identity).
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .errors import ResourceLimitError, UnsupportedCaseError
from .model_sets import (
    DEFAULT_TIE_TOL,
    Subspace,
    UnionOfSubspaces,
    coordinate_subspace,
    project_union,
    random_union,
    _check_vector,
)
from .randomness import categorical, normal_stream

LOG_2PI = math.log(2.0 * math.pi)

SPARSE_COMPONENT_CAP = 200_000


@dataclass(frozen=True)
class LrGmmPrior:
    """Mixture of unit Gaussians supported on the components of a union."""

    union: UnionOfSubspaces
    log_pi: np.ndarray

    def __post_init__(self):
        log_pi = np.asarray(self.log_pi, dtype=float)
        if log_pi.shape != (self.union.n_components,):
            raise ValueError(
                f"log_pi must have shape ({self.union.n_components},), got {log_pi.shape}"
            )
        if not np.all(np.isfinite(log_pi)):
            raise ValueError("log_pi entries must be finite")
        total = np.exp(logsumexp(log_pi))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {total!r}")
        log_pi = log_pi.copy()
        log_pi.flags.writeable = False
        object.__setattr__(self, "log_pi", log_pi)

    @property
    def ambient_dim(self) -> int:
        return self.union.ambient_dim

    @property
    def n_components(self) -> int:
        return self.union.n_components

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)


@dataclass(frozen=True)
class DenoiserEval:
    """One denoiser evaluation: value, posterior weights, blurred log density."""

    value: np.ndarray
    weights: np.ndarray
    log_density: float
    sigma: float


def uniform_lrgmm(union: UnionOfSubspaces) -> LrGmmPrior:
    k = union.n_components
    return LrGmmPrior(union, np.full(k, -math.log(k)))


def lrgmm_from_pi(union: UnionOfSubspaces, pi) -> LrGmmPrior:
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("mixture weights must be positive")
    return LrGmmPrior(union, np.log(pi))


def random_lrgmm(d: int, r: int, k: int, rng: np.random.Generator, pi=None) -> LrGmmPrior:
    union = random_union(d, [r] * k, rng)
    return uniform_lrgmm(union) if pi is None else lrgmm_from_pi(union, pi)


def _check_t(t) -> float:
    t = float(t)
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"blur variance t must be positive and finite, got {t}")
    return t


def log_component_density(prior: LrGmmPrior, k: int, x: np.ndarray, t) -> float:
    """log of pi_k N(x; 0, U_k U_k^T + t I), evaluated without d x d matrices."""
    t = _check_t(t)
    x = _check_vector(x, prior.ambient_dim)
    subspace = prior.union.subspaces[k]
    d, r = subspace.ambient_dim, subspace.rank
    coeffs = subspace.basis.T @ x
    inside = subspace.basis @ coeffs
    residual = x - inside
    sq_in = float(np.dot(coeffs, coeffs))
    sq_out = float(np.dot(residual, residual))
    log_det = r * math.log1p(t) + (d - r) * math.log(t)
    quad = sq_in / (1.0 + t) + sq_out / t
    return float(prior.log_pi[k]) - 0.5 * (d * LOG_2PI + log_det + quad)


def _informative_parts(prior: LrGmmPrior, x: np.ndarray, t: float):
    """Per-component log nu_k split off its dominant shared term.

    Returns (c, projections, shift) with log nu_k = c_k + shift, where
    shift = -min_j ||x - P_j x||^2 / (2t) - (d/2) log(2pi).  The split matters
    numerically: the residual-over-t term dwarfs the informative differences
    for small t, and carrying it inside every log nu_k would round those
    differences away.
    """
    k_count = prior.n_components
    d = x.shape[0]
    sq_in = np.empty(k_count)
    sq_out = np.empty(k_count)
    projections = np.empty((k_count, d))
    for k, subspace in enumerate(prior.union.subspaces):
        coeffs = subspace.basis.T @ x
        inside = subspace.basis @ coeffs
        residual = x - inside
        sq_in[k] = np.dot(coeffs, coeffs)
        sq_out[k] = np.dot(residual, residual)
        projections[k] = inside
    ranks = np.array([s.rank for s in prior.union.subspaces])
    log_det = ranks * math.log1p(t) + (d - ranks) * math.log(t)
    sq_out_min = float(np.min(sq_out))
    c = (
        prior.log_pi
        - 0.5 * log_det
        - sq_in / (2.0 * (1.0 + t))
        - (sq_out - sq_out_min) / (2.0 * t)
    )
    shift = -sq_out_min / (2.0 * t) - 0.5 * d * LOG_2PI
    return c, projections, shift


def _normalized_weights(c: np.ndarray) -> np.ndarray:
    w = np.exp(c - np.max(c))
    return w / np.sum(w)


def weights(prior: LrGmmPrior, x: np.ndarray, t) -> np.ndarray:
    """Posterior component weights w_k(x, t); stable down to t ~ 1e-10."""
    t = _check_t(t)
    x = _check_vector(x, prior.ambient_dim)
    c, _, _ = _informative_parts(prior, x, t)
    return _normalized_weights(c)


def denoiser(prior: LrGmmPrior, x: np.ndarray, sigma) -> DenoiserEval:
    """Exact posterior mean E[x0 | x0 + sigma z = x] for the mixture prior."""
    sigma = float(sigma)
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    x = _check_vector(x, prior.ambient_dim)
    t = sigma * sigma
    c, projections, shift = _informative_parts(prior, x, t)
    log_density = float(logsumexp(c)) + shift
    w = _normalized_weights(c)
    value = (w @ projections) / (1.0 + t)
    return DenoiserEval(value=value, weights=w, log_density=log_density, sigma=sigma)


def score(prior: LrGmmPrior, x: np.ndarray, sigma) -> np.ndarray:
    """Gradient of the blurred log density, via Tweedie's identity."""
    ev = denoiser(prior, x, sigma)
    return (ev.value - x) / (ev.sigma * ev.sigma)


def limiting_projection(prior: LrGmmPrior, x: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """Small-noise limit of the denoiser.

    Off the tie frontier this is the nearest-component projection.  On the
    frontier of an equal-rank union the weights converge to the renormalised
    mixture weights of the tied components, so the limit is their
    pi-weighted average of projections.  Frontier ties between components of
    different rank have no single limit and are rejected.
    """
    x = _check_vector(x, prior.ambient_dim)
    point, argmin_set = project_union(prior.union, x, tie_tol=tie_tol)
    if len(argmin_set) == 1:
        return point
    ranks = {prior.union.subspaces[k].rank for k in argmin_set}
    if len(ranks) != 1:
        raise UnsupportedCaseError(
            "limiting projection is multi-valued for a rank-mixed tie "
            f"(components {argmin_set})"
        )
    pi = np.exp(prior.log_pi[argmin_set])
    pi = pi / pi.sum()
    out = np.zeros_like(x)
    for weight, k in zip(pi, argmin_set):
        subspace = prior.union.subspaces[k]
        out += weight * (subspace.basis @ (subspace.basis.T @ x))
    return out


def sample(prior: LrGmmPrior, rng: np.random.Generator) -> np.ndarray:
    """Draw x = U_k g with k ~ pi and g standard normal on the component."""
    k = categorical(rng, prior.pi)
    subspace = prior.union.subspaces[k]
    g = normal_stream(rng, subspace.rank)
    return subspace.basis @ g


def sparse_gmm(d: int, s: int, pi=None, component_cap: int = SPARSE_COMPONENT_CAP) -> LrGmmPrior:
    """Uniform mixture over all s-sparse coordinate subspaces of R^d.

    Components are ordered by lexicographic support.  The construction is
    refused when the component count C(d, s) exceeds ``component_cap``.
    """
    if not 1 <= s <= d:
        raise ValueError(f"need 1 <= s <= d, got s={s}, d={d}")
    n_components = math.comb(d, s)
    if n_components > component_cap:
        raise ResourceLimitError(
            f"C({d},{s}) = {n_components} components exceeds the cap of {component_cap}"
        )
    subspaces = tuple(
        coordinate_subspace(d, support) for support in combinations(range(d), s)
    )
    union = UnionOfSubspaces(subspaces)
    return uniform_lrgmm(union) if pi is None else lrgmm_from_pi(union, pi)
