import json
import math
import os
import tempfile

import numpy as np
import pytest

import hdrfield


def test_mulaw_values():
    assert hdrfield.mulaw(np.array([0.0]))[0] == 0.0
    assert hdrfield.mulaw(np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-15)
    assert hdrfield.mulaw(np.array([0.1]))[0] == pytest.approx(
        math.log(51) / math.log(501), abs=1e-12
    )


def test_encoding_layout():
    e = hdrfield.encode(np.array([0.25]), 2, True)
    assert e.shape == (5,)
    assert e[0] == pytest.approx(0.25)
    assert e[3] == pytest.approx(math.sin(0.5))


def test_projection_and_rays():
    cam = hdrfield.CameraModel()
    cam.focal = 100.0
    cam.principal = np.array([50.0, 50.0])
    cam.width = cam.height = 100
    uv = hdrfield.project(cam, np.array([0.5, 0.0, 2.0]))
    assert np.allclose(uv, [75.0, 50.0])
    origin, direction = hdrfield.generate_ray(cam, np.array([50.0, 50.0]), 1.0, 2.0)
    assert np.allclose(direction, [0, 0, 1])
    z, x = hdrfield.sample_along_ray(
        origin, direction, 1.0, 2.0, 2, stratified=False
    )
    assert np.allclose(z, [1.25, 1.75])


def test_composite_empty_space():
    color, weights, t_bg = hdrfield.composite(
        np.zeros(3), np.array([1.0, 2.0, 3.0]), 4.0, np.ones((3, 3))
    )
    assert np.allclose(color, 0.0)
    assert t_bg == pytest.approx(1.0)


def test_psnr_fixture():
    a = np.random.default_rng(0).random((8, 8, 3))
    b = np.clip(a + 0.1, None, None)
    assert hdrfield.psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    assert hdrfield.ssim(np.tile(a, (2, 2, 1)), np.tile(a, (2, 2, 1))) == pytest.approx(1.0)


def test_crf_params():
    crf = hdrfield.CrfParams.piecewise_gamma(2.2)
    pts = crf.control_points()
    assert pts.shape == (256, 3)
    assert pts[0, 0] == 0.0
    assert pts[255, 0] == pytest.approx(1.0)
    assert hdrfield.apply_crf(crf, 0, 0.25, True) == pytest.approx(
        0.25 ** (1 / 2.2), abs=1e-3
    )
    assert hdrfield.crf_recovery_error(crf, 2.2) < 1e-9


def test_scene_and_dataset():
    scene = hdrfield.preset_scene_json("mini")
    spec = json.loads(scene)
    assert spec["frames"] == 6
    data = hdrfield.generate_dataset(scene)
    assert len(data["ldr"]) == 6
    ldr0 = data["ldr"][0]
    assert ldr0.shape == (16, 16, 3)
    assert ldr0.min() >= 0.0 and ldr0.max() <= 1.0
    hdr, depth, mask = hdrfield.oracle_render(scene, 0)
    assert hdr.shape == (16, 16, 3)
    assert mask.sum() > 0


def test_tiny_training_run_and_render():
    scene = hdrfield.preset_scene_json("mini")
    with tempfile.TemporaryDirectory() as out:
        result = hdrfield.train(
            scene,
            out,
            steps=40,
            batch_rays=16,
            samples_per_ray=8,
            hidden_width=8,
            hidden_layers=2,
            seed=3,
        )
        assert result["step"] == 40
        assert os.path.exists(result["checkpoint"])
        img = hdrfield.render(result["checkpoint"], scene, 0.5, mode="ldr", samples=8)
        assert img.shape == (16, 16, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0
