import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfiegen import warp
from selfiegen.errors import DegenerateError, InsufficientDataError, InvalidInputError, SimulationFailure
from selfiegen.warp import Homography, Keypoint, KeypointSet


def random_homography(rng, jitter=0.2, persp=1e-3):
    h = np.eye(3) + rng.uniform(-jitter, jitter, (3, 3))
    h[0, 2] = rng.uniform(-20, 20)
    h[1, 2] = rng.uniform(-20, 20)
    h[2, :2] = rng.uniform(-persp, persp, 2)
    h[2, 2] = 1.0
    return h


def same_up_to_scale(a, b):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    if np.sum(a * b) < 0:
        b = -b
    return np.linalg.norm(a - b)


def psnr(a, b):
    mse = np.mean((a.astype(float) - b.astype(float)) ** 2)
    return np.inf if mse == 0 else 10 * np.log10(255.0 ** 2 / mse)


def smooth_image(h=96, w=128, seed=0):
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    img = np.zeros((h, w, 3))
    for c in range(3):
        fx, fy, ph = rng.uniform(0.02, 0.08), rng.uniform(0.02, 0.08), rng.uniform(0, 6)
        img[..., c] = 127.5 + 100 * np.sin(fx * xs + ph) * np.cos(fy * ys)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# --- homography estimation ---------------------------------------------------

SQUARE = np.array([[10.0, 20.0], [200.0, 30.0], [180.0, 220.0], [15.0, 190.0]])


def test_identity_from_equal_points():
    h = warp.estimate_homography(SQUARE, SQUARE)
    np.testing.assert_allclose(h.matrix, np.eye(3) / np.sqrt(3), atol=1e-12)


def test_pure_translation():
    h = warp.estimate_homography(SQUARE, SQUARE + [10.0, 5.0])
    m = h.matrix / h.matrix[2, 2]
    assert np.max(np.abs(m[2, :2])) < 1e-9
    np.testing.assert_allclose(m, [[1, 0, 10], [0, 1, 5], [0, 0, 1]], atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_eight_point_recovery(seed):
    rng = np.random.default_rng(seed)
    true = random_homography(rng)
    src = rng.uniform(0, 300, (8, 2))
    dst = warp.apply_homography(true, src)
    h = warp.estimate_homography(src, dst)
    assert np.max(np.linalg.norm(h.apply(src) - dst, axis=1)) < 1e-6
    assert same_up_to_scale(h.matrix, true) < 1e-6


def test_insufficient_and_degenerate():
    with pytest.raises(InsufficientDataError):
        warp.estimate_homography(SQUARE[:3], SQUARE[:3])
    collinear = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 0.0]])
    with pytest.raises(DegenerateError):
        warp.estimate_homography(collinear, collinear)
    same = np.zeros((6, 2))
    with pytest.raises(DegenerateError):
        warp.estimate_homography(same, same + 1)
    with pytest.raises(InvalidInputError):
        warp.estimate_homography(SQUARE, SQUARE[:3])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-500, 500), st.floats(-500, 500))
def test_estimation_is_translation_equivariant(seed, tx, ty):
    rng = np.random.default_rng(seed)
    true = random_homography(rng)
    src = rng.uniform(0, 300, (6, 2))
    dst = warp.apply_homography(true, src)
    t = np.array([[1, 0, tx], [0, 1, ty], [0, 0, 1.0]])
    h = warp.estimate_homography(src, dst).matrix
    h_shift = warp.estimate_homography(src + [tx, ty], dst + [tx, ty]).matrix
    conj = Homography(t @ h @ np.linalg.inv(t)).matrix
    assert same_up_to_scale(h_shift, conj) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(5, 12))
def test_estimate_apply_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    true = random_homography(rng)
    src = rng.uniform(0, 300, (n, 2))
    h = warp.estimate_homography(src, warp.apply_homography(true, src))
    assert same_up_to_scale(h.matrix, true) < 1e-6


def test_homography_normalisation_and_json():
    h = Homography(-2.0 * np.eye(3))
    assert np.linalg.norm(h.matrix) == pytest.approx(1.0)
    assert h.matrix[2, 2] > 0
    back = Homography.from_json(json.loads(json.dumps(h.to_json())))
    np.testing.assert_array_equal(back.matrix, h.matrix)
    with pytest.raises(DegenerateError):
        Homography(np.diag([1.0, 1.0, 0.0]))


# --- warping ----------------------------------------------------------------

def test_identity_warp_is_bit_exact():
    img = smooth_image()
    out = warp.warp_image(img, Homography.identity(), (128, 96))
    assert np.array_equal(out, img)
    out = warp.warp_image(img, Homography.identity(), (128, 96), "nearest")
    assert np.array_equal(out, img)


def test_integer_translation():
    img = smooth_image()
    t = Homography([[1, 0, -3], [0, 1, -7], [0, 0, 1]])
    out = warp.warp_image(img, t, (128, 96), fill=(1, 2, 3))
    assert np.array_equal(out[:-7, :-3], img[7:, 3:])
    assert np.all(out[-7:, :] == [1, 2, 3])
    assert np.all(out[:, -3:] == [1, 2, 3])


def test_singular_warp_rejected():
    with pytest.raises(DegenerateError):
        warp.warp_image(np.zeros((4, 4)), np.diag([1.0, 1.0, 0.0]), (4, 4))


@pytest.mark.parametrize("seed", range(5))
def test_warp_round_trip_psnr(seed):
    rng = np.random.default_rng(seed)
    img = smooth_image(seed=seed)
    h = Homography(random_homography(rng, jitter=0.05, persp=2e-4))
    # keep the content centred so the interior survives the trip
    c = np.array([64.0, 48.0])
    shift = c - h.apply(c)[0]
    h = Homography(np.array([[1, 0, shift[0]], [0, 1, shift[1]], [0, 0, 1]]) @ h.matrix)
    there = warp.warp_image(img.astype(np.float64), h, (128, 96))
    back = warp.warp_image(there, h.inverse(), (128, 96))
    m = (np.array(img.shape[:2]) * 0.1).astype(int)
    inner = (slice(m[0], -m[0]), slice(m[1], -m[1]))
    assert psnr(np.clip(np.rint(back[inner]), 0, 255), img[inner]) > 35


def test_nearest_never_blends_labels():
    labels = np.random.default_rng(0).integers(0, 5, (40, 50)).astype(np.uint8)
    h = Homography([[1.1, 0.05, -2.3], [-0.04, 0.95, 1.7], [1e-4, 0, 1]])
    out = warp.warp_image(labels, h, (50, 40), "nearest", fill=255)
    assert set(np.unique(out)) <= set(range(5)) | {255}


def test_resize_image():
    img = smooth_image()
    assert np.array_equal(warp.resize_image(img, (128, 96)), img)
    half = warp.resize_image(img, (64, 48))
    assert half.shape == (48, 64, 3)
    # bilinear half-pixel: exact 2x downscale averages 2x2 blocks
    blocks = img.astype(float).reshape(48, 2, 64, 2, 3).mean(axis=(1, 3))
    assert np.max(np.abs(half.astype(float) - blocks)) <= 0.5 + 1e-9
    area = warp.resize_image(img, (64, 48), "area")
    assert np.max(np.abs(area.astype(float) - blocks)) <= 1.0
    with pytest.raises(InvalidInputError):
        warp.resize_image(img, (0, 5))


# --- keypoints and selfie simulation -----------------------------------------

def kpset(points, size=(256, 256), conf=1.0):
    return KeypointSet.from_list([Keypoint(n, x, y, conf) for n, (x, y) in points.items()], size)


UPPER = {"Neck": (128, 60), "RShoulder": (90, 80), "LShoulder": (166, 82), "RElbow": (70, 140),
         "LElbow": (186, 138), "RHip": (105, 200), "LHip": (150, 202)}


def test_keypoint_json_round_trip(tmp_path):
    ks = kpset(UPPER)
    warp.save_keypoints(ks, tmp_path / "k.json")
    back = warp.load_keypoints(tmp_path / "k.json")
    assert back == ks
    with pytest.raises(InvalidInputError):
        Keypoint("Neck", 0, 0, 1.5)
    with pytest.raises(InvalidInputError):
        KeypointSet.from_list([Keypoint("Neck", 0, 0), Keypoint("Neck", 1, 1)], (4, 4))


def test_from_openpose():
    flat = [0.0] * 75
    flat[3:6] = [10.0, 20.0, 0.9]  # Neck
    ks = KeypointSet.from_openpose({"people": [{"pose_keypoints_2d": flat}]}, (64, 64))
    assert len(ks.keypoints) == 25
    assert ks.keypoints["Neck"] == Keypoint("Neck", 10.0, 20.0, 0.9)


def test_simulate_identity():
    img = smooth_image(256, 256)
    out, h = warp.simulate_selfie(img, kpset(UPPER), kpset(UPPER), "upper", out_size=(256, 256))
    assert np.array_equal(out, img)
    small, _ = warp.simulate_selfie(img, kpset(UPPER), kpset(UPPER), "upper", out_size=(128, 128))
    np.testing.assert_allclose(small.astype(float), warp.resize_image(img, (128, 128)).astype(float), atol=1)


def test_simulate_scaled_keypoints_align():
    c = 127.5
    detected = {n: (c + 2 * (x - c), c + 2 * (y - c)) for n, (x, y) in UPPER.items()}
    img = smooth_image(512, 512)
    for out_size in ((256, 256), (512, 512)):
        out, h = warp.simulate_selfie(img, kpset(detected, (512, 512)), kpset(UPPER), "upper", out_size)
        s = out_size[0] / 256
        expected = (np.array(list(UPPER.values()), float) + 0.5) * s - 0.5
        got = h.apply(np.array(list(detected.values()), float))
        assert np.max(np.abs(got - expected)) < 1.0


def test_simulate_needs_four_keypoints():
    three = {k: UPPER[k] for k in ("Neck", "RShoulder", "LShoulder")}
    with pytest.raises(SimulationFailure):
        warp.simulate_selfie(np.zeros((256, 256, 3), np.uint8), kpset(three), kpset(UPPER), "upper")


def test_zero_confidence_keypoints_never_read():
    img = smooth_image(256, 256)
    base = kpset(UPPER)
    poisoned = dict(base.keypoints)
    for name in ("RElbow", "LElbow"):
        poisoned[name] = Keypoint(name, 1e9, -1e9, 0.0)
    det = KeypointSet(poisoned, base.image_size)
    a, ha = warp.simulate_selfie(img, det, kpset(UPPER), "upper", (256, 256))
    dropped = KeypointSet({k: v for k, v in base.keypoints.items() if k not in ("RElbow", "LElbow")},
                          base.image_size)
    b, hb = warp.simulate_selfie(img, dropped, kpset(UPPER), "upper", (256, 256))
    assert np.array_equal(a, b)
    np.testing.assert_array_equal(ha.matrix, hb.matrix)


def test_typical_keypoints():
    one = kpset(UPPER)
    assert warp.typical_keypoints([one]) == one
    a = kpset({"Neck": (100, 200)})
    b = kpset({"Neck": (120, 220)})
    t = warp.typical_keypoints([a, b])
    assert (t.keypoints["Neck"].x, t.keypoints["Neck"].y) == (110, 210)
    with pytest.raises(InvalidInputError):
        warp.typical_keypoints([])


def test_typical_keypoints_recover_known_means():
    rng = np.random.default_rng(5)
    means = {n: np.array(p, float) for n, p in UPPER.items()}
    sets = [kpset({n: tuple(m + rng.normal(0, 2.0, 2)) for n, m in means.items()}) for _ in range(10)]
    t = warp.typical_keypoints(sets)
    for n, m in means.items():
        got = np.array([t.keypoints[n].x, t.keypoints[n].y])
        # 5 sigma of the sample mean (sigma / sqrt(10))
        assert np.all(np.abs(got - m) < 5 * 2.0 / np.sqrt(10))


def test_typical_keypoints_skip_low_confidence():
    a = kpset({"Neck": (100, 200)})
    b = kpset({"Neck": (500, 500)}, conf=0.1)
    t = warp.typical_keypoints([a, b])
    assert (t.keypoints["Neck"].x, t.keypoints["Neck"].y) == (100, 200)
