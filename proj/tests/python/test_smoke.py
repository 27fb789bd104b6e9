import json
import math
import os

import numpy as np
import pytest


def test_matmul_matches_numpy(core):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 7))
    b = rng.normal(size=(7, 3))
    np.testing.assert_allclose(core.matmul(a, b), a @ b, rtol=1e-12)


def test_softmax_rows_are_stochastic(core):
    rng = np.random.default_rng(1)
    x = rng.normal(scale=5.0, size=(4, 9))
    s = core.softmax_rows(x)
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=1), np.ones(4), atol=1e-12)


def test_conv2d_identity_kernel(core):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 6, 6))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_allclose(core.conv2d_3x3(x, k), x, atol=1e-12)


def test_layer_norm_standardizes(core):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 16))
    y = core.layer_norm(x, np.ones(16), np.zeros(16), 1e-10)
    np.testing.assert_allclose(y.mean(axis=1), np.zeros(3), atol=1e-6)
    np.testing.assert_allclose(y.var(axis=1), np.ones(3), atol=1e-4)


def test_bilinear_resize_known_value(core):
    src = np.array([[[0.0, 0.0], [0.0, 1.0]]])
    up = core.bilinear_resize(src, 4, 4)
    expect = np.outer(np.arange(4) / 3.0, np.arange(4) / 3.0)
    np.testing.assert_allclose(up[0], expect, atol=1e-12)


def test_couple_postprocess_bbox_pipeline(core):
    attn = np.zeros((8, 8))
    attn[2:5, 3:6] = 1.0
    semantic = np.full((8, 8), 2.0)
    coupled = core.couple(attn, semantic)
    np.testing.assert_allclose(coupled, attn * semantic)
    up = core.postprocess(coupled, 32, 32)
    assert up.min() == 0.0 and up.max() == 1.0
    x0, y0, x1, y1 = core.extract_bbox(up, 0.5)
    assert 0 <= x0 < x1 <= 32
    assert 0 <= y0 < y1 <= 32


def test_box_metrics(core):
    a = (0, 0, 10, 10)
    b = (5, 5, 15, 15)
    assert core.iou(a, b) == pytest.approx(1.0 / 7.0)
    assert core.iog(a, b) == pytest.approx(0.25)
    assert core.iop(a, b) == pytest.approx(0.25)


def test_cosine_similarity_symmetric(core):
    rng = np.random.default_rng(4)
    v = rng.normal(size=(6, 5)) + 0.1
    s = core.cosine_similarity_matrix(v)
    np.testing.assert_allclose(s, s.T, atol=1e-12)
    np.testing.assert_allclose(np.diag(s), np.ones(6), atol=1e-9)


def test_generate_and_localize(core, tmp_path):
    data_dir = tmp_path / "data"
    core.generate_dataset(str(data_dir), num_classes=3, image_size=16,
                          train_images=6, val_images=3, test_images=3, seed=5)
    assert (data_dir / "train.jsonl").exists()
    assert (data_dir / "stats.json").exists()
    first = json.loads((data_dir / "train.jsonl").read_text().splitlines()[0])
    assert first["label"] in range(3)
    assert len(first["boxes"]) == 1

    cfg = core.VitConfig()
    cfg.image_size = 16
    cfg.patch_size = 8
    cfg.depth = 1
    cfg.heads = 2
    cfg.embed_dim = 16
    cfg.mlp_ratio = 2.0
    cfg.num_classes = 3
    ckpt_path = tmp_path / "init.ckpt"
    core.init_checkpoint(str(ckpt_path), cfg, "conv2d", 7)
    ck = core.load_checkpoint(str(ckpt_path))
    assert core.model_summary_total(ck) > 0

    rng = np.random.default_rng(5)
    image = rng.uniform(size=(3, 16, 16))
    result = core.localize_image(ck, image, mode="tscam", tau=0.4)
    assert math.isclose(sum(result["probs"]), 1.0, abs_tol=1e-5)
    x0, y0, x1, y1 = result["box"]
    assert 0 <= x0 < x1 <= 16
    assert 0 <= y0 < y1 <= 16
    assert result["map"].shape == (16, 16)
