"""Low-dimensional model sets: unions of subspaces and centered boxes.

A union of subspaces is stored as a list of orthonormal bases.  Projections
never materialise d-by-d matrices; everything runs through the d-by-r bases.
"""

from dataclasses import dataclass, field

import numpy as np

from .randomness import normal_matrix

ORTHONORMALITY_TOL = 1e-10

# Absolute tolerance on squared projection norms when deciding whether a
# point is equidistant from several subspaces.
DEFAULT_TIE_TOL = 1e-9


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^d given by an orthonormal basis (d x r)."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError(f"basis must be 2-d, got shape {basis.shape}")
        d, r = basis.shape
        if not 1 <= r <= d:
            raise ValueError(f"need 1 <= rank <= ambient dim, got shape {basis.shape}")
        if not np.all(np.isfinite(basis)):
            raise ValueError("basis entries must be finite")
        gram_defect = basis.T @ basis - np.eye(r)
        worst = np.max(np.abs(gram_defect))
        if worst > ORTHONORMALITY_TOL:
            raise ValueError(
                f"basis columns not orthonormal: max |B^T B - I| = {worst:.3e}"
            )
        basis = basis.copy()
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class UnionOfSubspaces:
    """A finite union of subspaces of a common ambient space."""

    subspaces: tuple
    equal_rank: bool = field(init=False)

    def __post_init__(self):
        subspaces = tuple(self.subspaces)
        if len(subspaces) < 1:
            raise ValueError("a union needs at least one subspace")
        dims = {s.ambient_dim for s in subspaces}
        if len(dims) != 1:
            raise ValueError(f"mixed ambient dimensions: {sorted(dims)}")
        object.__setattr__(self, "subspaces", subspaces)
        ranks = {s.rank for s in subspaces}
        object.__setattr__(self, "equal_rank", len(ranks) == 1)

    @property
    def ambient_dim(self) -> int:
        return self.subspaces[0].ambient_dim

    @property
    def n_components(self) -> int:
        return len(self.subspaces)


@dataclass(frozen=True)
class BoxSet:
    """An axis-aligned box containing the origin.

    Coordinates with lower == upper are inactive and pinned to zero; active
    coordinates must satisfy lower <= 0 <= upper with lower < upper.
    """

    lower: np.ndarray
    upper: np.ndarray
    active_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("need lower <= upper in every coordinate")
        active = lower < upper
        if np.any(lower[~active] != 0.0):
            raise ValueError("inactive coordinates must be pinned to zero")
        if np.any(lower[active] > 0.0) or np.any(upper[active] < 0.0):
            raise ValueError("active coordinates must contain the origin")
        lower = lower.copy()
        upper = upper.copy()
        lower.flags.writeable = False
        upper.flags.writeable = False
        active.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "active_mask", active)

    @property
    def ambient_dim(self) -> int:
        return self.lower.shape[0]

    @property
    def intrinsic_dim(self) -> int:
        return int(np.count_nonzero(self.active_mask))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


def _check_vector(x, d, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {x.shape}")
    return x


def project_subspace(subspace: Subspace, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of x onto the subspace."""
    x = _check_vector(x, subspace.ambient_dim)
    return subspace.basis @ (subspace.basis.T @ x)


def squared_projection_norms(union: UnionOfSubspaces, x: np.ndarray) -> np.ndarray:
    """Vector of ||P_k x||^2 over components k."""
    x = _check_vector(x, union.ambient_dim)
    return np.array([np.dot(c, c) for c in (s.basis.T @ x for s in union.subspaces)])


def project_union(union: UnionOfSubspaces, x: np.ndarray, tie_tol: float = DEFAULT_TIE_TOL):
    """Nearest-point projection onto a union of subspaces.

    Returns ``(point, argmin_set)``.  The distance minimisers are the
    components maximising ||P_k x||^2; every component within ``tie_tol``
    (absolute, on the squared norms) of the maximum is reported, and the
    returned point uses the lowest-index member so selection stays auditable.
    """
    x = _check_vector(x, union.ambient_dim)
    norms2 = squared_projection_norms(union, x)
    best = float(np.max(norms2))
    argmin_set = [int(k) for k in np.flatnonzero(norms2 >= best - tie_tol)]
    point = project_subspace(union.subspaces[argmin_set[0]], x)
    return point, argmin_set


def frontier_gap(union: UnionOfSubspaces, x: np.ndarray) -> float:
    """Margin by which the best component beats the runner-up.

    Defined as min over losers of ||P_best x||^2 - ||P_loser x||^2; zero on
    the tie frontier and +inf for single-component unions.
    """
    x = _check_vector(x, union.ambient_dim)
    if union.n_components == 1:
        return float("inf")
    norms2 = squared_projection_norms(union, x)
    k_star = int(np.argmax(norms2))
    others = np.delete(norms2, k_star)
    return float(norms2[k_star] - np.max(others))


def hard_threshold(x: np.ndarray, s: int) -> np.ndarray:
    """Keep the s entries of largest magnitude, zeroing the rest.

    Magnitude ties are broken by keeping the lower index.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be 1-d")
    if not 0 <= s <= x.shape[0]:
        raise ValueError(f"need 0 <= s <= {x.shape[0]}, got {s}")
    # Stable sort on descending magnitude leaves equal magnitudes in index order.
    order = np.argsort(-np.abs(x), kind="stable")
    out = np.zeros_like(x)
    keep = order[:s]
    out[keep] = x[keep]
    return out


def project_box(box: BoxSet, x: np.ndarray) -> np.ndarray:
    """Clamp x to the box; inactive coordinates go to zero."""
    x = _check_vector(x, box.ambient_dim)
    out = np.clip(x, box.lower, box.upper)
    out[~box.active_mask] = 0.0
    return out


def random_subspace(d: int, r: int, rng: np.random.Generator) -> Subspace:
    """Haar-ish random r-dimensional subspace of R^d via QR of a Gaussian."""
    g = normal_matrix(rng, d, r)
    q, rr = np.linalg.qr(g)
    # Fix signs so the basis is a deterministic function of g.
    signs = np.sign(np.diag(rr))
    signs[signs == 0] = 1.0
    return Subspace(q * signs)


def random_union(d: int, ranks, rng: np.random.Generator) -> UnionOfSubspaces:
    """Union of independent random subspaces with the given ranks."""
    return UnionOfSubspaces(tuple(random_subspace(d, r, rng) for r in ranks))


def coordinate_subspace(d: int, support) -> Subspace:
    """Subspace spanned by the standard basis vectors in ``support``."""
    support = list(support)
    basis = np.zeros((d, len(support)))
    for j, i in enumerate(support):
        basis[i, j] = 1.0
    return Subspace(basis)
