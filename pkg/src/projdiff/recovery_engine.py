"""The projected-gradient iteration with a noise-indexed denoiser.

One step reads x+ = D(x, sigma_n) - mu A^T (A D(x, sigma_n) - y): the
denoiser acts as a soft projection whose target set sharpens as sigma_n
decreases along a schedule.  With mu = 1 the same update can be written as a
data-fit direction plus a prior direction restricted to the measurement
null space; both forms are provided and agree to rounding.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .lrgmm_prior import LrGmmPrior, denoiser as lrgmm_denoiser, weights as posterior_weights
from .model_sets import UnionOfSubspaces, frontier_gap as union_frontier_gap
from .sensing_analysis import SensingProblem

SCHEDULE_KINDS = ("geometric", "linear", "cosine", "infinite_geometric")

TRACE_FORMAT_LINE = "# projdiff-trace v1"

# Above this ambient dimension full iterates are not kept by default.
RECORD_ITERATES_DIM_LIMIT = 256


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise level sigma_n as a function of the iteration index.

    Finite kinds interpolate from sigma_max at n=0 to sigma_min at
    n=horizon; the infinite_geometric kind decays as sigma_max * a**n and
    has no horizon.
    """

    kind: str
    sigma_max: float
    sigma_min: float = 0.0
    horizon: int = 0
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not (self.sigma_max > 0.0 and math.isfinite(self.sigma_max)):
            raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")
        if self.kind == "infinite_geometric":
            if not 0.0 < self.a < 1.0:
                raise ValueError(f"decay factor a must lie in (0, 1), got {self.a}")
        else:
            if not (0.0 < self.sigma_min <= self.sigma_max):
                raise ValueError(
                    f"need 0 < sigma_min <= sigma_max, got {self.sigma_min}, {self.sigma_max}"
                )
            if self.horizon < 1:
                raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    def to_dict(self) -> dict:
        if self.kind == "infinite_geometric":
            return {"kind": self.kind, "sigma_max": self.sigma_max, "a": self.a}
        return {
            "kind": self.kind,
            "sigma_max": self.sigma_max,
            "sigma_min": self.sigma_min,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NoiseSchedule":
        return cls(
            kind=payload["kind"],
            sigma_max=float(payload["sigma_max"]),
            sigma_min=float(payload.get("sigma_min", 0.0)),
            horizon=int(payload.get("horizon", 0)),
            a=float(payload.get("a", 0.0)),
        )


def schedule_sigma(schedule: NoiseSchedule, n: int) -> float:
    """Evaluate sigma_n; n must lie in the schedule's domain."""
    n = int(n)
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if schedule.kind == "infinite_geometric":
        return schedule.sigma_max * schedule.a**n
    if n > schedule.horizon:
        raise ValueError(f"n={n} exceeds the schedule horizon {schedule.horizon}")
    frac = n / schedule.horizon
    if schedule.kind == "geometric":
        return schedule.sigma_max * (schedule.sigma_min / schedule.sigma_max) ** frac
    if schedule.kind == "linear":
        lo, hi = schedule.sigma_min**2, schedule.sigma_max**2
        return math.sqrt(hi + frac * (lo - hi))
    # cosine
    half_range = 0.5 * (schedule.sigma_max - schedule.sigma_min)
    return schedule.sigma_min + half_range * (1.0 + math.cos(math.pi * frac))


def gpgd_step(denoise, a: np.ndarray, mu: float, y: np.ndarray,
              x: np.ndarray, sigma: float) -> np.ndarray:
    """x+ = P(x) - mu A^T (A P(x) - y) with P(x) = denoise(x, sigma)."""
    p = denoise(x, sigma)
    return p - mu * (a.T @ (a @ p - y))


def kadkhodaie_step(prior: LrGmmPrior, a: np.ndarray, y: np.ndarray,
                    x: np.ndarray, sigma: float) -> np.ndarray:
    """Unit-step form: x+ = x - (data-fit direction + null-space prior direction).

    The prior direction is the denoiser residual projected onto the
    complement of A^T A; algebraically identical to gpgd_step at mu = 1.
    """
    data_fit = a.T @ (a @ x - y)
    residual = x - lrgmm_denoiser(prior, x, sigma).value
    prior_dir = residual - a.T @ (a @ residual)
    return x - data_fit - prior_dir


@dataclass
class RecoveryTrace:
    """Per-iteration record of a recovery run.

    Row n holds the iterate x_n together with the schedule value sigma_n
    consumed by the step that produces x_{n+1}; the final row is the last
    iterate.  Columns that need unavailable context (mse without x_true,
    weight entropy without a mixture prior) hold NaN.
    """

    n: np.ndarray
    sigma: np.ndarray
    mse: np.ndarray
    residual: np.ndarray
    frontier_gap: np.ndarray
    weight_entropy: np.ndarray
    subspace_distances: np.ndarray = None  # (rows, K) when a union is known
    iterates: np.ndarray = None            # (rows, d) when recorded
    metadata: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.n.shape[0]

    @property
    def final_mse(self) -> float:
        return float(self.mse[-1])

    def column_names(self) -> list:
        names = ["n", "sigma", "mse", "residual", "frontier_gap", "weight_entropy"]
        if self.subspace_distances is not None:
            names += [f"dist_{k}" for k in range(self.subspace_distances.shape[1])]
        return names

    def write_csv(self, path) -> None:
        cols = [self.sigma, self.mse, self.residual, self.frontier_gap, self.weight_entropy]
        if self.subspace_distances is not None:
            cols += [self.subspace_distances[:, k] for k in range(self.subspace_distances.shape[1])]
        lines = [TRACE_FORMAT_LINE, "# " + json.dumps(self.metadata, sort_keys=True)]
        lines.append(",".join(self.column_names()))
        for i in range(self.n_rows):
            lines.append(
                ",".join([str(int(self.n[i]))] + [format(c[i], ".17g") for c in cols])
            )
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "RecoveryTrace":
        with open(path, "r", newline="") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != TRACE_FORMAT_LINE:
            raise ValueError(f"{path}: not a trace file (missing format line)")
        if len(lines) < 3 or not lines[1].startswith("# "):
            raise ValueError(f"{path}: missing metadata line")
        metadata = json.loads(lines[1][2:])
        header = lines[2].split(",")
        expected = ["n", "sigma", "mse", "residual", "frontier_gap", "weight_entropy"]
        if header[: len(expected)] != expected:
            raise ValueError(f"{path}: unexpected columns {header}")
        dist_names = header[len(expected):]
        if dist_names != [f"dist_{k}" for k in range(len(dist_names))]:
            raise ValueError(f"{path}: unexpected distance columns {dist_names}")
        rows = [line.split(",") for line in lines[3:] if line]
        if not rows or any(len(r) != len(header) for r in rows):
            raise ValueError(f"{path}: malformed data rows")
        data = np.array([[float(v) for v in r] for r in rows])
        dists = data[:, len(expected):] if dist_names else None
        return cls(
            n=data[:, 0].astype(int),
            sigma=data[:, 1],
            mse=data[:, 2],
            residual=data[:, 3],
            frontier_gap=data[:, 4],
            weight_entropy=data[:, 5],
            subspace_distances=dists,
            metadata=metadata,
        )


def problem_hash(problem: SensingProblem) -> str:
    digest = hashlib.sha256()
    digest.update(problem.operator.tobytes())
    digest.update(problem.y.tobytes())
    digest.update(format(problem.mu, ".17g").encode())
    return digest.hexdigest()[:16]


def _entropy(w: np.ndarray) -> float:
    positive = w[w > 0.0]
    return float(-np.sum(positive * np.log(positive)))


def run_recovery(problem: SensingProblem, denoise, schedule: NoiseSchedule,
                 x0: np.ndarray = None, n_iters: int = None,
                 record_iterates: bool = None, union: UnionOfSubspaces = None,
                 prior: LrGmmPrior = None, metadata: dict = None) -> RecoveryTrace:
    """Run the iteration for n_iters steps, recording one row per iterate.

    ``denoise`` is any callable (x, sigma) -> array.  Passing ``prior``
    enables the weight-entropy column (and, via its union, the per-component
    distance columns); passing only ``union`` enables the distances.  There
    is no early stopping: the run always performs n_iters steps unless an
    iterate leaves the finite range, which raises DivergenceError.
    """
    a, y, mu = problem.operator, problem.y, problem.mu
    d = problem.ambient_dim
    if prior is not None and union is None:
        union = prior.union
    if n_iters is None:
        if schedule.kind == "infinite_geometric":
            raise ValueError("n_iters is required for an infinite schedule")
        n_iters = schedule.horizon
    n_iters = int(n_iters)
    if n_iters < 1:
        raise ValueError(f"n_iters must be >= 1, got {n_iters}")
    if schedule.kind != "infinite_geometric" and n_iters > schedule.horizon:
        raise ValueError(
            f"n_iters={n_iters} exceeds the schedule horizon {schedule.horizon}"
        )
    if record_iterates is None:
        record_iterates = d <= RECORD_ITERATES_DIM_LIMIT

    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},), got {x.shape}")

    rows = n_iters + 1
    trace = RecoveryTrace(
        n=np.arange(rows),
        sigma=np.empty(rows),
        mse=np.full(rows, np.nan),
        residual=np.empty(rows),
        frontier_gap=np.full(rows, np.nan),
        weight_entropy=np.full(rows, np.nan),
        subspace_distances=np.empty((rows, union.n_components)) if union is not None else None,
        iterates=np.empty((rows, d)) if record_iterates else None,
        metadata=dict(metadata or {}),
    )
    trace.metadata.setdefault("format", "projdiff-trace")
    trace.metadata.update(
        problem_hash=problem_hash(problem),
        schedule=schedule.to_dict(),
        mu=mu,
        seed=problem.seed,
    )

    for n in range(rows):
        sigma_n = schedule_sigma(schedule, n)
        trace.sigma[n] = sigma_n
        if problem.x_true is not None:
            diff = x - problem.x_true
            trace.mse[n] = float(diff @ diff) / d
        trace.residual[n] = float(np.linalg.norm(a @ x - y))
        if union is not None:
            for k, subspace in enumerate(union.subspaces):
                coeffs = subspace.basis.T @ x
                trace.subspace_distances[n, k] = float(
                    np.linalg.norm(x - subspace.basis @ coeffs)
                )
            trace.frontier_gap[n] = union_frontier_gap(union, x)
        if prior is not None:
            trace.weight_entropy[n] = _entropy(
                posterior_weights(prior, x, sigma_n * sigma_n)
            )
        if record_iterates:
            trace.iterates[n] = x
        if n == n_iters:
            break
        x = gpgd_step(denoise, a, mu, y, x, sigma_n)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"iterate left the finite range at iteration {n + 1}", n + 1
            )
    return trace
