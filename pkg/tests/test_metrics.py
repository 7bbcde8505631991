import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchseg.errors import DegenerateInput, DimensionMismatch, DomainError, EmptyInput
from sketchseg.metrics import (
    THRESHOLDS,
    EvalRecord,
    LowessConfig,
    SizeFilter,
    aggregate,
    bin_points,
    e_measure,
    eval_sample,
    filter_by_size,
    lowess_fit,
    mae,
    records_from_csv,
    records_to_csv,
    s_measure,
    saliency_suite,
    weighted_f,
)
from sketchseg.raster import BinaryMask

sod = pytest.importorskip("py_sod_metrics")


def _rec(i, u, sid="x", gt=0):
    return EvalRecord(sid, i, u, 1.0 if u == 0 else i / u, gt)


def _mask(rows):
    return BinaryMask(np.array(rows, np.uint8))


# --- IoU protocol ---------------------------------------------------------


def test_eval_sample_examples():
    a = _mask([[1, 1, 0], [0, 1, 0]])
    assert eval_sample(a, a, "s").iou == 1.0
    assert eval_sample(a, _mask([[0, 0, 1], [1, 0, 1]]), "s").iou == 0.0
    r = eval_sample(_mask([[1, 1, 0, 0]]), _mask([[1, 1, 1, 1]]), "s")
    assert (r.intersection, r.union, r.iou, r.gt_pixels) == (2, 4, 0.5, 4)
    empty = BinaryMask.zeros(2, 2)
    assert eval_sample(empty, empty, "e").iou == 1.0
    with pytest.raises(DimensionMismatch):
        eval_sample(empty, BinaryMask.zeros(2, 3), "e")


def test_record_invariants():
    with pytest.raises(ValueError):
        EvalRecord("x", 3, 2, 1.0, 0)


def test_aggregate_examples():
    perfect = aggregate([_rec(5, 5), _rec(7, 7)])
    assert perfect.oiou == perfect.miou == 100 and all(v == 100 for v in perfect.p_at.values())
    r = aggregate([EvalRecord("a", 55, 100, 0.55, 60), EvalRecord("b", 65, 100, 0.65, 70)])
    assert (r.p_at[0.5], r.p_at[0.6], r.p_at[0.7]) == (100, 50, 0)
    r = aggregate([_rec(1, 1), _rec(0, 99)])
    assert r.miou == 50 and r.oiou == pytest.approx(1.0)
    assert sorted(r.p_at) == list(THRESHOLDS)


def test_threshold_is_inclusive():
    assert aggregate([EvalRecord("a", 1, 2, 0.5, 1)]).p_at[0.5] == 100


def test_aggregate_empty():
    with pytest.raises(EmptyInput):
        aggregate([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=30))
def test_aggregate_properties(pairs):
    recs = [_rec(min(i, u), u) for i, u in pairs]
    r = aggregate(recs)
    p = [r.p_at[x] for x in THRESHOLDS]
    assert all(a >= b for a, b in zip(p, p[1:]))
    assert all(0 <= v <= 100 for v in p + [r.oiou, r.miou])
    all_one = all(x.iou == 1 for x in recs)
    assert (r.miou == 100) == all_one
    assert (r.oiou == 100) == all_one


# --- saliency suite -------------------------------------------------------


def _reference(pred, gt):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        em = sod.Emeasure()
        em.gt_fg_numel, em.gt_size = np.count_nonzero(gt), gt.size
        return (
            sod.Smeasure().cal_sm(pred, gt),
            em.cal_adaptive_em(pred, gt),
            sod.WeightedFmeasure().cal_wfm(pred, gt),
            sod.MAE().cal_mae(pred, gt),
        )


def test_perfect_and_complement():
    gt = np.zeros((20, 24), bool)
    gt[4:12, 6:18] = True
    s, e, f, m = saliency_suite(gt.astype(float), gt)
    assert m == 0 and f == pytest.approx(1, abs=1e-12) and s == pytest.approx(1, abs=1e-9)
    assert e > 0.99
    assert mae(1 - gt.astype(float), gt) == 1


def test_suite_matches_reference_on_random_maps():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 30:
        gt = rng.random((32, 32)) < rng.uniform(0.1, 0.6)
        if checked % 2:
            gt = np.zeros((32, 32), bool)
            y, x = rng.integers(0, 20, 2)
            gt[y : y + rng.integers(3, 12), x : x + rng.integers(3, 12)] = True
        pred = rng.random((32, 32)) ** rng.uniform(0.3, 3)
        ref = _reference(pred, gt)
        if not np.all(np.isfinite(ref)):
            continue
        assert np.allclose(saliency_suite(pred, gt), ref, atol=1e-10, rtol=0)
        checked += 1


def test_suite_handles_degenerate_ground_truth():
    rng = np.random.default_rng(1)
    pred = rng.random((10, 10))
    for gt in (np.zeros((10, 10), bool), np.ones((10, 10), bool)):
        ref = _reference(pred, gt)
        got = saliency_suite(pred, gt)
        assert np.allclose(got[:2], ref[:2]) and got[3] == pytest.approx(ref[3])
    assert weighted_f(pred, np.zeros((10, 10), bool)) == 0.0


def test_s_measure_is_finite_where_reference_is_not():
    gt = np.zeros((6, 6), bool)
    gt[:, 5] = True  # centroid on the last column leaves an empty quadrant
    pred = np.random.default_rng(2).random((6, 6))
    assert np.isfinite(s_measure(pred, gt))


def test_suite_errors():
    with pytest.raises(DimensionMismatch):
        mae(np.zeros((2, 2)), np.zeros((2, 3), bool))
    with pytest.raises(DomainError):
        e_measure(np.full((2, 2), 1.5), np.zeros((2, 2), bool))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mae_complement_identity(seed):
    rng = np.random.default_rng(seed)
    pred = rng.random((7, 9))
    gt = rng.random((7, 9)) < 0.5
    assert mae(pred, gt) + mae(1 - pred, gt) == pytest.approx(1.0, abs=1e-12)


# --- LOWESS ---------------------------------------------------------------


def test_binning_keeps_nearest_to_center():
    pts = [(100, 0.1), (900, 0.2), (1100, 0.3), (2500, 0.4), (3900, 0.5), (3000, 0.6)]
    kept = bin_points(pts, LowessConfig(bin_size=2000, samples_per_bin=1))
    assert kept.tolist() == [[900, 0.2], [3000, 0.6]]
    kept = bin_points(pts, LowessConfig(bin_size=2000, samples_per_bin=2))
    assert kept.tolist() == [[900, 0.2], [1100, 0.3], [2500, 0.4], [3000, 0.6]]


def test_lowess_examples():
    x = np.linspace(0, 50, 40)
    flat = lowess_fit(np.column_stack([x, np.full(40, 0.37)]), LowessConfig(frac=0.2, bin_size=1))
    assert np.allclose(flat[:, 1], 0.37, atol=1e-12)
    line = lowess_fit(np.column_stack([x, 3 * x - 2]), LowessConfig(frac=1.0, bin_size=1))
    assert np.abs(line[:, 1] - (3 * x - 2)).max() < 1e-9
    assert np.all(np.diff(line[:, 0]) > 0)


def test_lowess_beats_a_global_line_on_a_quadratic():
    rng = np.random.default_rng(5)
    x = np.sort(rng.uniform(0, 1e4, 300))
    y = ((x - 5e3) / 1e3) ** 2 + rng.normal(0, 1, 300)
    fitted = lowess_fit(np.column_stack([x, y]), LowessConfig(frac=0.2, bin_size=1, samples_per_bin=1))
    xs = fitted[:, 0]
    at = ((xs - 5e3) / 1e3) ** 2
    line = np.polyval(np.polyfit(x, y, 1), xs)
    assert np.sqrt(np.mean((fitted[:, 1] - at) ** 2)) < np.sqrt(np.mean((line - at) ** 2))


def test_lowess_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.nonparametric.smoothers_lowess")
    rng = np.random.default_rng(6)
    for n, frac in [(50, 0.2), (200, 0.2), (30, 0.5), (8, 0.2), (25, 1.0)]:
        x = rng.uniform(0, 1e5, n)
        y = np.sin(x / 1e4) + rng.normal(0, 0.3, n)
        got = lowess_fit(np.column_stack([x, y]), LowessConfig(frac=frac, bin_size=1))
        ref = sm.lowess(y, x, frac=frac, it=0, delta=0.0)
        assert np.allclose(got, ref, atol=1e-10, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.05, 1.0))
def test_lowess_affine_equivariance(seed, a, b, frac):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 100, 30)
    y = rng.normal(size=30)
    cfg = LowessConfig(frac=frac, bin_size=1)
    base = lowess_fit(np.column_stack([x, y]), cfg)[:, 1]
    moved = lowess_fit(np.column_stack([x, a * y + b]), cfg)[:, 1]
    assert np.allclose(moved, a * base + b, atol=1e-9)


def test_lowess_degenerate():
    with pytest.raises(DegenerateInput):
        lowess_fit([(5, 0.5), (5, 0.7)], LowessConfig(bin_size=1))
    with pytest.raises(DegenerateInput):
        lowess_fit([(10, 0.5), (20, 0.7)], LowessConfig(bin_size=2000))
    with pytest.raises(ValueError):
        LowessConfig(frac=0)


def test_size_filter():
    recs = [EvalRecord("a", 1, 2, 0.5, 100), EvalRecord("b", 9, 10, 0.9, 60000), EvalRecord("c", 1, 2, 0.5, 70000)]
    assert filter_by_size(recs, None) == recs
    kept = filter_by_size(recs, SizeFilter(((50000, None, 0.8),)))
    assert [r.sample_id for r in kept] == ["a", "b"]


def test_csv_round_trip():
    recs = [EvalRecord("s,1", 3, 7, 3 / 7, 5), EvalRecord("s2", 0, 0, 1.0, 0)]
    text = records_to_csv(recs)
    assert text.splitlines()[0] == "sample_id,intersection,union,iou,gt_pixels"
    assert "\r" not in text
    assert records_from_csv(text) == recs
