"""Multi-prompt transport: cosine scores, log-domain Sinkhorn, a brute-force
assignment oracle, score aggregation and score-map upsampling."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteCost, UnsupportedInstance, ZeroNormRow
from .raster import BinaryMask, GrayRaster

__all__ = [
    "FeatureMatrix",
    "Marginals",
    "CostMatrix",
    "SinkhornConfig",
    "TransportPlan",
    "ScoreStack",
    "cosine_scores",
    "cost_from_scores",
    "sinkhorn",
    "brute_force_ot",
    "mpt_aggregate",
    "upsample_scoremap",
    "extract_patch_features",
    "stroke_pooled_features",
]


def _finite_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=2, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D matrix")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Row vectors of a common embedding dimension."""

    values: np.ndarray

    def __post_init__(self):
        arr = _finite_matrix(self.values, "features")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("feature matrix must have at least one row and column")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Marginals:
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name in ("mu", "nu"):
            v = np.array(getattr(self, name), dtype=float).ravel()
            if len(v) == 0 or np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a nonempty nonnegative vector")
            if abs(v.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1 (got {v.sum()!r})")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def uniform(cls, n: int, m: int) -> "Marginals":
        return cls(np.full(n, 1.0 / n), np.full(m, 1.0 / m))


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _finite_matrix(self.values, "cost"))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.05
    max_iter: int = 50
    tolerance: float = 1e-4

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    values: np.ndarray
    achieved_cost: float
    iterations_used: int
    converged: bool
    row_error: float
    col_error: float
    log_a: np.ndarray = field(repr=False)
    log_b: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def marginal_error(self) -> float:
        return max(self.row_error, self.col_error)


@dataclass(frozen=True, eq=False)
class ScoreStack:
    """Pixel-by-prompt scores: ``values`` has shape ``(HW, num_prompts * per_prompt_cols)``.

    Columns are grouped by prompt: prompt ``k`` owns columns
    ``k * per_prompt_cols`` to ``(k + 1) * per_prompt_cols - 1``.
    """

    values: np.ndarray
    num_prompts: int
    per_prompt_cols: int = 1

    def __post_init__(self):
        arr = _finite_matrix(self.values, "scores")
        if arr.shape[1] != self.num_prompts * self.per_prompt_cols:
            raise DimensionMismatch(
                f"{arr.shape[1]} columns != {self.num_prompts} prompts x {self.per_prompt_cols}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def pixels(self) -> int:
        return self.values.shape[0]


def cosine_scores(a: FeatureMatrix, b: FeatureMatrix) -> np.ndarray:
    """Cosine similarity of every row of ``a`` against every row of ``b``."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"feature dims differ: {a.dim} vs {b.dim}")
    na = np.linalg.norm(a.values, axis=1)
    nb = np.linalg.norm(b.values, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroNormRow("cannot normalise a zero-norm feature row")
    s = (a.values / na[:, None]) @ (b.values / nb[:, None]).T
    return np.clip(s, -1.0, 1.0)


def cost_from_scores(scores: np.ndarray) -> CostMatrix:
    return CostMatrix(1.0 - np.asarray(scores, dtype=float))


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    top = x.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return (np.log(np.exp(x - top).sum(axis=axis, keepdims=True)) + top).squeeze(axis)


def sinkhorn(
    cost: CostMatrix,
    marg: Marginals | None = None,
    cfg: SinkhornConfig = SinkhornConfig(),
) -> TransportPlan:
    """Entropic OT plan by log-domain Sinkhorn scaling.

    Dual potentials start at ``b = 0``. Each sweep updates
    ``a = log mu - LSE_j(-C/eps + b)`` then ``b = log nu - LSE_i(-C/eps + a)``
    and stops once ``||b_new - b_old||_2 < tolerance`` or after ``max_iter``
    sweeps; hitting the cap is reported through ``converged`` and is not an
    error. Zero-mass marginal entries give ``-inf`` potentials and zero rows
    or columns in the plan.
    """
    C = cost.values
    if marg is None:
        marg = Marginals.uniform(*C.shape)
    if (len(marg.mu), len(marg.nu)) != C.shape:
        raise DimensionMismatch(f"marginals {len(marg.mu)}x{len(marg.nu)} vs cost {C.shape}")
    if not np.all(np.isfinite(C)):
        raise NonFiniteCost("cost matrix contains non-finite entries")

    kernel = -C / cfg.epsilon
    with np.errstate(divide="ignore"):
        log_mu = np.log(marg.mu)
        log_nu = np.log(marg.nu)
    b = np.zeros(C.shape[1])
    a = np.zeros(C.shape[0])
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        a = log_mu - _lse(kernel + b[None, :], axis=1)
        b_new = log_nu - _lse(kernel + a[:, None], axis=0)
        finite = np.isfinite(b_new)
        delta = np.linalg.norm(np.where(finite, b_new - np.where(finite, b, 0.0), 0.0))
        b = b_new
        if delta < cfg.tolerance:
            converged = True
            break

    plan = np.exp(a[:, None] + kernel + b[None, :])
    return TransportPlan(
        values=plan,
        achieved_cost=float(np.sum(plan * C)),
        iterations_used=it,
        converged=converged,
        row_error=float(np.abs(plan.sum(axis=1) - marg.mu).max()),
        col_error=float(np.abs(plan.sum(axis=0) - marg.nu).max()),
        log_a=a,
        log_b=b,
    )


def brute_force_ot(cost: CostMatrix, marg: Marginals | None = None) -> tuple[float, np.ndarray]:
    """Exact unregularised OT for small square uniform problems.

    With uniform marginals the optimum sits on a permutation matrix scaled by
    1/n, so enumerating all n! permutations is exact. Ties keep the first
    permutation in lexicographic order.
    """
    n, m = cost.n, cost.m
    if n != m or n > 6:
        raise UnsupportedInstance("brute force needs a square problem with n <= 6")
    if marg is not None:
        if not (np.allclose(marg.mu, 1.0 / n, rtol=0, atol=1e-12) and np.allclose(marg.nu, 1.0 / m, rtol=0, atol=1e-12)):
            raise UnsupportedInstance("brute force needs uniform marginals")
    C = cost.values
    rows = np.arange(n)
    best_cost, best_perm = math.inf, None
    for perm in itertools.permutations(range(n)):
        total = C[rows, perm].sum() / n
        if total < best_cost:
            best_cost, best_perm = total, perm
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    return float(best_cost), plan


def mpt_aggregate(plan: TransportPlan | np.ndarray, stack: ScoreStack) -> np.ndarray:
    """Transport-weighted scores summed within each prompt: shape ``(HW, K_p)``."""
    T = plan.values if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    if T.shape != stack.values.shape:
        raise DimensionMismatch(f"plan {T.shape} vs scores {stack.values.shape}")
    weighted = T * stack.values
    return weighted.reshape(stack.pixels, stack.num_prompts, stack.per_prompt_cols).sum(axis=2)


def _axis_weights(src: int, dst: int):
    # half-pixel centres, edge clamped
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def upsample_scoremap(scores: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an ``(H', W', K)`` (or ``(H', W')``) map to ``target``."""
    arr = np.asarray(scores, dtype=float)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w = arr.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("source map must be at least 1x1")
    th, tw = target
    y0, y1, fy = _axis_weights(h, th)
    x0, x1, fx = _axis_weights(w, tw)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return out[:, :, 0] if squeeze else out


def _cell_edges(size: int, cells: int) -> list[tuple[int, int]]:
    step = -(-size // cells)
    if cells < 1 or (cells - 1) * step >= size:
        raise ValueError(f"cannot split {size} pixels into {cells} cells by ceiling division")
    return [(i * step, min((i + 1) * step, size)) for i in range(cells)]


def extract_patch_features(img: GrayRaster, grid: tuple[int, int], dim: int = 4) -> FeatureMatrix:
    """Hand-crafted per-cell features on a ``grid = (rows, cols)`` lattice.

    Each cell gives ``[mean, std, centre_x / W, centre_y / H]`` (raw 0-255
    intensities), zero-padded or truncated to ``dim``. Rows are row-major.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    px = img.pixels.astype(float)
    rows = []
    for y0, y1 in _cell_edges(img.height, grid[0]):
        for x0, x1 in _cell_edges(img.width, grid[1]):
            cell = px[y0:y1, x0:x1]
            rows.append(
                [
                    cell.mean(),
                    cell.std(),
                    (x0 + x1) / 2 / img.width,
                    (y0 + y1) / 2 / img.height,
                ]
            )
    feats = np.array(rows)
    if dim >= feats.shape[1]:
        feats = np.pad(feats, ((0, 0), (0, dim - feats.shape[1])))
    else:
        feats = feats[:, :dim]
    return FeatureMatrix(feats)


def stroke_pooled_features(
    image_features: FeatureMatrix, sketch: BinaryMask, grid: tuple[int, int]
) -> FeatureMatrix:
    """One prompt vector: mean of image cell features under the sketch strokes.

    Falls back to the mean over all cells when the sketch covers no cell.
    """
    covered = []
    for y0, y1 in _cell_edges(sketch.height, grid[0]):
        for x0, x1 in _cell_edges(sketch.width, grid[1]):
            covered.append(bool(sketch.bits[y0:y1, x0:x1].any()))
    covered = np.array(covered)
    if len(covered) != image_features.rows:
        raise DimensionMismatch("sketch grid does not match the image feature grid")
    sel = image_features.values[covered] if covered.any() else image_features.values
    return FeatureMatrix(sel.mean(axis=0, keepdims=True))
