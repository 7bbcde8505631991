import numpy as np
import pytest
from scipy import ndimage

from sketchseg.augment import AugmentConfig, augment_sketch, fit_strokes, variant_distortion
from sketchseg.bezier import draw
from sketchseg.errors import DimensionMismatch, EmptySketch, InvalidBlockSize
from sketchseg.raster import BinaryMask, GrayRaster
from sketchseg.skeleton import skeletonize
from sketchseg.synthetic import make_triplet


def _cfg(seed=0, **kw):
    return AugmentConfig.with_seed(seed, **kw)


def test_defaults():
    cfg = _cfg(3)
    assert (cfg.binarize_threshold, cfg.block_size, cfg.min_component_pixels) == (128, 32, 10)
    assert (cfg.sample_interval, cfg.render_thickness) == (10, 3)
    p = cfg.perturb
    assert (p.C, p.K_step, p.num_variants, p.seed) == (10, 10.0, 5, 3)


def test_output_count_and_shape():
    sketch = make_triplet(0, size=96).sketch
    variants = augment_sketch(sketch, _cfg(1, num_variants=4))
    assert len(variants) == 4
    assert all(v.shape == sketch.shape for v in variants)


def test_small_component_contributes_nothing():
    bits = np.zeros((40, 40), np.uint8)
    bits[5, 3:12] = 1  # 9 pixels
    variants = augment_sketch(BinaryMask(bits), _cfg(0))
    assert len(variants) == 5 and all(v.count == 0 for v in variants)


def test_zero_step_gives_unperturbed_refit():
    sketch = make_triplet(2, size=128).sketch
    cfg = _cfg(5, K_step=0.0, num_variants=3)
    variants = augment_sketch(sketch, cfg)
    canvas = np.zeros(sketch.shape, np.uint8)
    for stroke in fit_strokes(skeletonize(BinaryMask(sketch.pixels >= 128)), cfg):
        draw(stroke.curve, canvas, cfg.render_thickness)
    assert all(v == BinaryMask(canvas) for v in variants)


def test_seeded_runs_are_identical_and_seeds_matter():
    sketch = make_triplet(4, size=128).sketch
    a = augment_sketch(sketch, _cfg(9))
    b = augment_sketch(sketch, _cfg(9))
    c = augment_sketch(sketch, _cfg(10))
    assert a == b
    assert a != c


def test_variants_differ_from_each_other():
    variants = augment_sketch(make_triplet(6, size=128).sketch, _cfg(2, K_step=10.0))
    assert len({v.bits.tobytes() for v in variants}) == len(variants)


def test_errors():
    with pytest.raises(EmptySketch):
        augment_sketch(GrayRaster(np.full((20, 20), 50)), _cfg())
    bits = np.zeros((20, 20), np.uint8)
    bits[4, :] = 1
    with pytest.raises(InvalidBlockSize):
        augment_sketch(BinaryMask(bits), _cfg(block_size=4))


def test_grayscale_input_is_binarized_with_threshold():
    px = np.zeros((64, 64), np.uint8)
    px[30, 5:60] = 120
    with pytest.raises(EmptySketch):
        augment_sketch(GrayRaster(px), _cfg())
    assert augment_sketch(GrayRaster(px), _cfg(binarize_threshold=100))[0].count > 0


def test_variants_stay_near_the_skeleton():
    # 3-sigma envelope around the input centerline
    for seed in range(5):
        sketch = make_triplet(seed).sketch
        cfg = _cfg(seed, K_step=10.0)
        skel = skeletonize(BinaryMask(sketch.pixels >= 128))
        theta_max = max(s.theta for s in fit_strokes(skel, cfg))
        dist = ndimage.distance_transform_edt(~skel.as_bool())
        for v in augment_sketch(sketch, cfg):
            inside = dist[v.as_bool()] <= cfg.render_thickness + 3 * theta_max
            assert inside.mean() >= 0.99


def test_distortion_examples():
    a = np.zeros((3, 3), np.uint8)
    a[0, 0:2] = 1
    b = a.copy()
    b[2, 0:2] = 1
    assert variant_distortion(BinaryMask(a), BinaryMask(a)) == 1.0
    assert variant_distortion(BinaryMask(a), BinaryMask(1 - a)) == 0.0
    assert variant_distortion(BinaryMask(a), BinaryMask(b)) == 0.5
    assert variant_distortion(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 2)) == 1.0
    with pytest.raises(DimensionMismatch):
        variant_distortion(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 3))
