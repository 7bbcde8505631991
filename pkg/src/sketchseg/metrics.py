"""Segmentation metrics, the saliency metric suite and LOWESS size analysis."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateInput, DimensionMismatch, DomainError, EmptyInput
from .raster import BinaryMask

__all__ = [
    "THRESHOLDS",
    "EvalRecord",
    "MetricsReport",
    "LowessConfig",
    "SizeFilter",
    "eval_sample",
    "aggregate",
    "mae",
    "s_measure",
    "e_measure",
    "weighted_f",
    "saliency_suite",
    "bin_points",
    "lowess_fit",
    "filter_by_size",
    "records_to_csv",
    "records_from_csv",
    "report_to_json",
]

THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)
EPS = np.spacing(1.0)

RECORD_FIELDS = ("sample_id", "intersection", "union", "iou", "gt_pixels")


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    intersection: int
    union: int
    iou: float
    gt_pixels: int

    def __post_init__(self):
        if not 0 <= self.intersection <= self.union:
            raise ValueError("need 0 <= intersection <= union")
        if self.gt_pixels < 0:
            raise ValueError("gt_pixels must be nonnegative")
        if not 0.0 <= self.iou <= 1.0:
            raise ValueError("iou must lie in [0, 1]")


@dataclass(frozen=True)
class MetricsReport:
    oiou: float
    miou: float
    p_at: dict[float, float]
    count: int
    s_measure: float | None = None
    e_measure: float | None = None
    weighted_f: float | None = None
    mae: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_at"] = {f"{k:.1f}": v for k, v in sorted(self.p_at.items())}
        return d


@dataclass(frozen=True)
class LowessConfig:
    frac: float = 0.2
    bin_size: int = 2000
    samples_per_bin: int = 1

    def __post_init__(self):
        if not 0.0 < self.frac <= 1.0:
            raise ValueError(f"frac must lie in (0, 1], got {self.frac}")
        if self.bin_size < 1 or self.samples_per_bin < 1:
            raise ValueError("bin_size and samples_per_bin must be positive")


@dataclass(frozen=True)
class SizeFilter:
    """Keep a record only if its IoU clears the threshold of its size range.

    ``ranges`` holds ``(min_pixels, max_pixels, min_iou)`` triples with an
    inclusive lower and exclusive upper bound; ``None`` as the upper bound
    means unbounded. Records outside every range are kept.
    """

    ranges: tuple[tuple[int, int | None, float], ...] = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# IoU protocol


def eval_sample(pred: BinaryMask, gt: BinaryMask, sample_id: str) -> EvalRecord:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    p, g = pred.as_bool(), gt.as_bool()
    inter = int(np.count_nonzero(p & g))
    union = int(np.count_nonzero(p | g))
    iou = 1.0 if union == 0 else inter / union
    return EvalRecord(sample_id, inter, union, iou, int(np.count_nonzero(g)))


def aggregate(records: Sequence[EvalRecord], thresholds: Iterable[float] = THRESHOLDS) -> MetricsReport:
    """oIoU, mIoU and P@X (share of samples with IoU >= X), all in percent."""
    if not records:
        raise EmptyInput("no records to aggregate")
    inter = sum(r.intersection for r in records)
    union = sum(r.union for r in records)
    ious = np.array([r.iou for r in records])
    oiou = 100.0 if union == 0 else 100.0 * inter / union
    p_at = {float(x): 100.0 * float(np.count_nonzero(ious >= x)) / len(ious) for x in thresholds}
    return MetricsReport(oiou=oiou, miou=100.0 * float(ious.mean()), p_at=p_at, count=len(records))


# ---------------------------------------------------------------------------
# saliency suite; pred is a float map in [0, 1], gt a boolean map


def _check_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    g = gt.as_bool() if isinstance(gt, BinaryMask) else np.asarray(gt).astype(bool)
    if p.shape != g.shape:
        raise DimensionMismatch(f"prediction {p.shape} vs ground truth {g.shape}")
    if p.ndim != 2:
        raise DimensionMismatch("saliency maps must be 2D")
    if not np.all((p >= 0) & (p <= 1)):
        raise DomainError("prediction values must lie in [0, 1]")
    return p, g


def mae(pred, gt) -> float:
    p, g = _check_pair(pred, gt)
    return float(np.mean(np.abs(p - g)))


def _ssim(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    mx, my = x.mean(), y.mean()
    vx = np.sum((x - mx) ** 2) / (n - 1 + EPS)
    vy = np.sum((y - my) ** 2) / (n - 1 + EPS)
    cxy = np.sum((x - mx) * (y - my)) / (n - 1 + EPS)
    num = 4 * mx * my * cxy
    den = (mx**2 + my**2) * (vx + vy)
    if num != 0:
        return num / (den + EPS)
    return 1.0 if den == 0 else 0.0


def _object_score(x: np.ndarray) -> float:
    mu = x.mean()
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    return 2 * mu / (mu**2 + 1 + sd + EPS)


def s_measure(pred, gt, balance: float = 0.5) -> float:
    """Structure measure: ``balance`` * object term + (1 - balance) * region term."""
    p, g = _check_pair(pred, gt)
    fg = g.mean()
    if fg == 0:
        return float(1 - p.mean())
    if fg == 1:
        return float(p.mean())

    obj = fg * _object_score(p[g]) + (1 - fg) * _object_score(1 - p[~g])

    # quadrants split at the (1-based, rounded) foreground centroid
    h, w = g.shape
    cy, cx = (int(c) + 1 for c in np.argwhere(g).mean(axis=0).round())
    gf = g.astype(float)
    area = h * w
    wts = (cx * cy / area, cy * (w - cx) / area, (h - cy) * cx / area)
    wts = wts + (1 - sum(wts),)
    quads = (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, w)),
        (slice(cy, h), slice(0, cx)),
        (slice(cy, h), slice(cx, w)),
    )
    region = 0.0
    for wt, (rs, cs) in zip(wts, quads):
        if wt > 0:
            region += wt * _ssim(p[rs, cs], gf[rs, cs])
    return float(max(0.0, balance * obj + (1 - balance) * region))


def e_measure(pred, gt) -> float:
    """Enhanced-alignment measure at the adaptive threshold ``min(2 * mean, 1)``."""
    p, g = _check_pair(pred, gt)
    fm = (p >= min(2 * p.mean(), 1.0)).astype(float)
    gf = g.astype(float)
    n = g.size
    if not g.any():
        enhanced = 1 - fm
    elif g.all():
        enhanced = fm
    else:
        a = fm - fm.mean()
        b = gf - gf.mean()
        align = 2 * a * b / (a * a + b * b + EPS)
        enhanced = (align + 1) ** 2 / 4
    return float(enhanced.sum() / (n - 1 + EPS))


def _gauss7() -> np.ndarray:
    r = np.arange(-3, 4)
    k = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * 5.0**2))
    return k / k.sum()


def weighted_f(pred, gt, beta2: float = 1.0) -> float:
    """Weighted F-measure with distance-based pixel dependency and importance."""
    p, g = _check_pair(pred, gt)
    if not g.any():
        return 0.0
    gf = g.astype(float)
    dist, (iy, ix) = ndimage.distance_transform_edt(~g, return_indices=True)

    err = np.abs(p - gf)
    # background errors borrow the error of their nearest foreground pixel
    err_t = err[iy, ix]
    smoothed = ndimage.convolve(err_t, _gauss7(), mode="constant", cval=0.0)
    e_min = np.where(g & (smoothed < err), smoothed, err)
    importance = np.where(g, 1.0, 2 - np.exp(np.log(0.5) / 5 * dist))
    ew = e_min * importance

    tp = gf.sum() - ew[g].sum()
    fp = ew[~g].sum()
    recall = 1 - ew[g].mean()
    precision = tp / (tp + fp + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


def saliency_suite(pred, gt) -> tuple[float, float, float, float]:
    """(S-measure, E-measure, weighted F, MAE) for one prediction."""
    return s_measure(pred, gt), e_measure(pred, gt), weighted_f(pred, gt), mae(pred, gt)


# ---------------------------------------------------------------------------
# mask size vs IoU


def bin_points(points: Sequence[tuple[float, float]], cfg: LowessConfig) -> np.ndarray:
    """Keep the ``samples_per_bin`` points nearest each bin center.

    Bins are ``[b * bin_size, (b + 1) * bin_size)``. Ties on distance are
    broken by x, then y, then input order. Returns an ``(n, 2)`` array sorted
    by x (then y).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return pts
    x, y = pts[:, 0], pts[:, 1]
    bins = np.floor(x / cfg.bin_size)
    dist = np.abs(x - (bins + 0.5) * cfg.bin_size)
    order = np.lexsort((np.arange(len(pts)), y, x, dist, bins))
    kept, last, taken = [], None, 0
    for i in order:
        if bins[i] != last:
            last, taken = bins[i], 0
        if taken < cfg.samples_per_bin:
            kept.append(i)
            taken += 1
    out = pts[kept]
    return out[np.lexsort((out[:, 1], out[:, 0]))]


def _lowess_core(x: np.ndarray, y: np.ndarray, frac: float) -> np.ndarray:
    n = len(x)
    k = max(int(frac * n + 1e-10), 2)
    fitted = np.empty(n)
    for i, xi in enumerate(x):
        d = np.abs(x - xi)
        idx = np.argsort(d, kind="stable")[:k]
        h = d[idx].max()
        w = (1 - np.clip(d[idx] / h, 0, 1) ** 3) ** 3 if h > 0 else np.ones(k)
        xs, ys = x[idx], y[idx]
        sw = w.sum()
        mx, my = (w @ xs) / sw, (w @ ys) / sw
        vx = w @ (xs - mx) ** 2
        slope = (w @ ((xs - mx) * (ys - my))) / vx if vx > 0 else 0.0
        fitted[i] = my + slope * (xi - mx)
    return fitted


def lowess_fit(points: Sequence[tuple[float, float]], cfg: LowessConfig = LowessConfig()) -> np.ndarray:
    """Bin, then locally weighted linear regression with tricube weights.

    Each kept x is fitted from its ``max(int(frac * n), 2)`` nearest kept
    neighbors. Returns an ``(n, 2)`` array of ``(x, fitted_y)`` sorted by x.

    Raises:
        DegenerateInput: fewer than two distinct x values survive binning.
    """
    kept = bin_points(points, cfg)
    if len(np.unique(kept[:, 0])) < 2:
        raise DegenerateInput("need at least two distinct x values after binning")
    return np.column_stack((kept[:, 0], _lowess_core(kept[:, 0], kept[:, 1], cfg.frac)))


def filter_by_size(records: Sequence[EvalRecord], size_filter: SizeFilter | None) -> list[EvalRecord]:
    if size_filter is None or not size_filter.ranges:
        return list(records)
    kept = []
    for r in records:
        for lo, hi, min_iou in size_filter.ranges:
            if r.gt_pixels >= lo and (hi is None or r.gt_pixels < hi):
                if r.iou >= min_iou:
                    kept.append(r)
                break
        else:
            kept.append(r)
    return kept


# ---------------------------------------------------------------------------
# serialization


def records_to_csv(records: Sequence[EvalRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in records:
        writer.writerow([r.sample_id, r.intersection, r.union, repr(float(r.iou)), r.gt_pixels])
    return buf.getvalue()


def records_from_csv(text: str) -> list[EvalRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    missing = set(RECORD_FIELDS) - set(reader.fieldnames)
    if missing:
        raise ValueError(f"CSV lacks columns: {sorted(missing)}")
    return [
        EvalRecord(
            row["sample_id"], int(row["intersection"]), int(row["union"]), float(row["iou"]), int(row["gt_pixels"])
        )
        for row in reader
    ]


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
