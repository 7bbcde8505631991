"""Stroke-masked cross-attention and scale/shift/gate feature fusion.

Projection weights come from a seeded generator so that everything is
reproducible without training. Forward computation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .raster import BinaryMask
from .transport import FeatureMatrix

__all__ = [
    "NEG_INF",
    "AttentionMask",
    "FusionParams",
    "build_attention_mask",
    "masked_attention",
    "projection",
    "derive_fusion_params",
    "fuse",
]

NEG_INF = -np.inf


@dataclass(frozen=True, eq=False)
class AttentionMask:
    """Additive logit mask: 0 on stroke cells, ``NEG_INF`` elsewhere."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, ndmin=2)
        if arr.ndim != 2:
            raise ValueError("attention mask must be 2D")
        if not np.all((arr == 0) | (arr == NEG_INF)):
            raise ValueError("attention mask entries must be 0 or NEG_INF")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def allowed(self) -> np.ndarray:
        """Flattened row-major boolean view: True where keys may be attended."""
        return (self.values == 0).ravel()

    @classmethod
    def open(cls, length: int) -> "AttentionMask":
        return cls(np.zeros((1, length)))


@dataclass(frozen=True, eq=False)
class FusionParams:
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    projection_seed: int = 0

    def __post_init__(self):
        vecs = [np.atleast_1d(np.asarray(getattr(self, k), dtype=float)).copy() for k in ("gamma", "beta", "alpha")]
        if len({len(v) for v in vecs}) != 1:
            raise DimensionMismatch("gamma, beta and alpha must share one length")
        for name, v in zip(("gamma", "beta", "alpha"), vecs):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return len(self.gamma)


def build_attention_mask(sketch: BinaryMask, target: tuple[int, int]) -> AttentionMask:
    """Max-pool the sketch onto a ``target = (H', W')`` grid.

    Cell ``(i, j)`` covers rows ``floor(i*H/H')`` to ``ceil((i+1)*H/H')`` (and
    likewise columns), so every pixel lands in at least one cell even when
    the sizes do not divide.
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise ValueError("target grid must be at least 1x1")
    h, w = sketch.shape
    bits = sketch.bits
    out = np.full((th, tw), NEG_INF)
    for i in range(th):
        r0, r1 = (i * h) // th, -(-((i + 1) * h) // th)
        for j in range(tw):
            c0, c1 = (j * w) // tw, -(-((j + 1) * w) // tw)
            if bits[r0:r1, c0:c1].any():
                out[i, j] = 0.0
    return AttentionMask(out)


def _softmax_masked(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    weights = np.zeros_like(logits)
    if not allowed.any():
        return weights
    sub = logits[:, allowed]
    sub = np.exp(sub - sub.max(axis=1, keepdims=True))
    weights[:, allowed] = sub / sub.sum(axis=1, keepdims=True)
    return weights


def masked_attention(
    Q: FeatureMatrix,
    K: FeatureMatrix,
    V: FeatureMatrix,
    mask: AttentionMask | None = None,
    heads: int = 1,
    scale: bool = False,
) -> FeatureMatrix:
    """softmax(M + Q K^T) V, with no 1/sqrt(d) factor unless ``scale`` is set.

    Masked keys get exactly zero weight. When every key is masked the output
    rows are zero vectors. With ``heads > 1`` the query/key and value dims
    are split evenly and the per-head outputs concatenated.
    """
    if Q.dim != K.dim:
        raise DimensionMismatch(f"query dim {Q.dim} != key dim {K.dim}")
    if K.rows != V.rows:
        raise DimensionMismatch(f"{K.rows} keys but {V.rows} values")
    allowed = np.ones(K.rows, dtype=bool) if mask is None else mask.allowed
    if len(allowed) != K.rows:
        raise DimensionMismatch(f"mask covers {len(allowed)} keys, expected {K.rows}")
    if heads < 1 or Q.dim % heads or V.dim % heads:
        raise DimensionMismatch(f"dims {Q.dim}/{V.dim} not divisible into {heads} heads")

    dq, dv = Q.dim // heads, V.dim // heads
    out = np.zeros((Q.rows, V.dim))
    for h in range(heads):
        q = Q.values[:, h * dq : (h + 1) * dq]
        k = K.values[:, h * dq : (h + 1) * dq]
        logits = q @ k.T
        if scale:
            logits = logits / np.sqrt(dq)
        weights = _softmax_masked(logits, allowed)
        out[:, h * dv : (h + 1) * dv] = weights @ V.values[:, h * dv : (h + 1) * dv]
    return FeatureMatrix(out)


def projection(seed: int, name: str, d_in: int, d_out: int) -> np.ndarray:
    """Deterministic ``(d_in, d_out)`` weight matrix, N(0, 1/d_in) entries."""
    tag = int.from_bytes(name.encode(), "little")
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag, d_in, d_out]))
    return rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)


def derive_fusion_params(F_S: FeatureMatrix, seed: int = 0) -> FusionParams:
    """gamma, beta, alpha = Linear(MeanPool(F_S)) with a seeded linear map."""
    pooled = F_S.values.mean(axis=0)
    W = projection(seed, "film", F_S.dim, 3 * F_S.dim)
    b = projection(seed, "film_bias", 1, 3 * F_S.dim)[0]
    gamma, beta, alpha = np.split(pooled @ W + b, 3)
    return FusionParams(gamma, beta, alpha, projection_seed=seed)


def fuse(
    F_I: FeatureMatrix,
    F_S: FeatureMatrix,
    params: FusionParams | None = None,
    mask: AttentionMask | None = None,
    heads: int = 1,
    seed: int = 0,
) -> FeatureMatrix:
    """F_I + alpha * (Attention(Q, K, V) * (1 + gamma) + beta).

    Queries come from ``F_I``; keys and values from ``F_S``, each through its
    own seeded projection. If ``params`` is None they are regressed from the
    pooled sketch features with ``seed``.
    """
    if F_I.dim != F_S.dim:
        raise DimensionMismatch(f"image dim {F_I.dim} != sketch dim {F_S.dim}")
    if params is None:
        params = derive_fusion_params(F_S, seed)
    if params.dim not in (1, F_I.dim):
        raise DimensionMismatch(f"fusion params have length {params.dim}, features {F_I.dim}")
    d, s = F_I.dim, params.projection_seed
    Q = FeatureMatrix(F_I.values @ projection(s, "query", d, d))
    K = FeatureMatrix(F_S.values @ projection(s, "key", d, d))
    V = FeatureMatrix(F_S.values @ projection(s, "value", d, d))
    attn = masked_attention(Q, K, V, mask, heads=heads).values
    if attn.shape != F_I.values.shape:
        raise DimensionMismatch("attention output and image features differ in shape")
    fused = F_I.values + params.alpha * (attn * (1 + params.gamma) + params.beta)
    # a closed gate passes F_I through untouched (keeps -0.0 as -0.0)
    return FeatureMatrix(np.where(params.alpha == 0, F_I.values, fused))
