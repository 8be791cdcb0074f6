import json
import math

import numpy as np
import pytest

from degnerf.field.train import TrainConfig, train
from degnerf.metrics import EvalReport, evaluate, gaussian_window, psnr, ssim
from degnerf.scene_io import CameraView, SceneSet, ValidationError
from degnerf.toy import look_at
from oracles import psnr_loop, ssim_direct


# ---------------------------------------------------------------- psnr


@pytest.mark.parametrize("shape", [(1, 1, 3), (4, 4, 3), (16, 16, 3), (37, 53, 3), (128, 128, 3)])
def test_uniform_tenth_is_exactly_20db(shape):
    a, b, c = np.zeros(shape), np.full(shape, 0.1), np.full(shape, 0.2)
    assert psnr(a, b) == 20.0
    assert psnr(b, c) == 20.0
    assert psnr(c, b) == 20.0


def test_identical_is_infinite():
    a = np.random.default_rng(0).random((5, 5, 3))
    assert psnr(a, a) == math.inf


def test_psnr_loop_oracle_and_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.random((2, 32, 32, 3))
        assert abs(psnr(a, b) - psnr_loop(a, b)) <= 1e-9
        assert psnr(a, b) == psnr(b, a)


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ValidationError):
        ssim(np.zeros((12, 12, 3)), np.zeros((12, 12, 1)))


def test_psnr_falls_with_noise():
    rng = np.random.default_rng(2)
    img = rng.random((32, 32, 3))
    means = []
    for sigma in (0.01, 0.02, 0.05, 0.1, 0.2):
        means.append(np.mean([psnr(img, img + rng.normal(0, sigma, img.shape))
                              for _ in range(10)]))
    assert np.all(np.diff(means) < 0)


# ---------------------------------------------------------------- ssim


def test_window_normalized():
    g = gaussian_window()
    assert g.size == 11
    assert abs(g.sum() - 1.0) <= 1e-15


def test_ssim_self_is_one():
    a = np.random.default_rng(3).random((20, 24, 3))
    assert abs(ssim(a, a) - 1.0) <= 1e-12


def test_ssim_inverted_binary_is_negative():
    a = (np.random.default_rng(4).random((16, 16, 3)) > 0.5).astype(float)
    assert ssim(a, 1.0 - a) < 0


def test_ssim_direct_oracle_and_symmetry():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.random((2, 32, 32, 3))
        b = 0.6 * a + 0.4 * b
        assert abs(ssim(a, b) - ssim_direct(a, b)) <= 1e-9
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_ssim_too_small():
    with pytest.raises(ValidationError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


def test_ssim_grayscale_input():
    a = np.random.default_rng(6).random((12, 12))
    assert abs(ssim(a, a) - 1.0) <= 1e-12


# ---------------------------------------------------------------- reports


def test_report_means_and_json(tmp_path):
    rep = EvalReport([20.0, 30.0, math.inf], [0.5, 0.7, 1.0], rays_used=10, train_seconds=1.5)
    assert rep.mean_psnr == math.inf
    d = rep.to_dict()
    assert d["psnr"] == [20.0, 30.0, None]
    assert d["psnr_infinite"] == [False, False, True]
    assert d["mean_psnr"] is None and d["mean_psnr_infinite"]
    assert d["lpips"] is None
    rep.save(tmp_path / "r" / "report.json")
    back = EvalReport.from_dict(json.loads((tmp_path / "r" / "report.json").read_text()))
    assert back.psnr == rep.psnr and back.ssim == rep.ssim and back.rays_used == 10

    rep = EvalReport([21.0, 24.0, 27.5], [0.1, 0.2, 0.6])
    assert abs(rep.mean_psnr - sum(rep.psnr) / 3) <= 1e-9
    assert abs(rep.mean_ssim - sum(rep.ssim) / 3) <= 1e-9
    assert json.loads(json.dumps(rep.to_dict()))["mean_psnr"] == rep.mean_psnr


def constant_scene(size=12, color=(0.3, 0.6, 0.9)):
    view = CameraView(size * 1.5, size * 1.5, size / 2, size / 2, look_at([0.4, -3.0, 0.6]),
                      near=1.5, far=4.6)
    img = np.tile(np.asarray(color), (size, size, 1))
    return SceneSet([view], [img], np.array([[-1.0] * 3, [1.0] * 3]))


def test_evaluate_constant_fit(tmp_path):
    scene = constant_scene()
    cfg = TrainConfig(resolution=(8, 8, 8), batch_rays=144, coarse_epochs=200, fine_epochs=0,
                      n_samples=32, seed=1)
    f, log, _ = train(scene, cfg)
    rep = evaluate(f, scene, 32, rays_used=log.rays_used, out=tmp_path / "report.json")
    assert rep.mean_psnr >= 40.0
    assert rep.rays_used == 200 * 144
    saved = json.loads((tmp_path / "report.json").read_text())
    assert abs(np.mean(saved["psnr"]) - saved["mean_psnr"]) <= 1e-9
    pairs = list(zip(scene.views, scene.images))
    assert evaluate(f, pairs, 32).psnr == rep.psnr


def test_evaluate_empty_holdout():
    from degnerf.field.grid import VoxelField

    f = VoxelField.create((4, 4, 4), np.array([[-1.0] * 3, [1.0] * 3]))
    with pytest.raises(ValidationError):
        evaluate(f, [])
