import json
import sys

import numpy as np
import pytest

from selfiegen import _backend, segmap, volumesh

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


def sphere_density(n=64, radius=20.0, center=None):
    """density = radius - |p - c| in voxel units (positive inside)."""
    c = np.full(3, (n - 1) / 2.0) if center is None else np.asarray(center, float)
    g = np.indices((n, n, n)).astype(np.float64)
    return radius - np.sqrt(((g - np.reshape(c, (3, 1, 1, 1))) ** 2).sum(axis=0))


@pytest.fixture(scope="session")
def sphere_volume():
    return volumesh.DensityVolume.from_density(sphere_density())


def head_volume(n=32, seed=0, extent=0.5):
    """Small procedural 'head': an ellipsoid with a nose bump, colour from position.

    World extent is ``extent`` units, centred on the origin, so the whole object
    fits the d = 1, f0 = 2.9 field of view.
    """
    rng = np.random.default_rng(seed)
    spacing = extent / (n - 1)
    origin = np.full(3, -extent / 2)
    g = origin.reshape(3, 1, 1, 1) + spacing * np.indices((n, n, n))
    radii = np.array([0.16, 0.2, 0.17]) * (1 + 0.1 * rng.random(3))
    body = 1.0 - np.sqrt(((g / radii.reshape(3, 1, 1, 1)) ** 2).sum(axis=0))
    nose = 0.6 - np.sqrt(((g - np.array([0.0, 0.0, -0.17]).reshape(3, 1, 1, 1)) ** 2).sum(axis=0)) / 0.05
    density = np.maximum(body, nose)
    color = np.clip(np.stack([0.5 + g[0], 0.5 + g[1], 0.4 + 0.2 * rng.random() + 0 * g[2]], axis=-1), 0, 1)
    return volumesh.DensityVolume(density, color, origin, np.full(3, spacing))


def write_head_volumes(directory, count, landmarks=True):
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        vol = head_volume(seed=i)
        raw = directory / f"head{i:03d}.raw"
        volumesh.save_volume(vol, raw)
        if landmarks:
            lm = {"eye_left": [-0.06, -0.05, -0.15], "eye_right": [0.06, -0.05, -0.15],
                  "mouth": [0.0, 0.08, -0.15]}
            raw.with_name(raw.stem + ".landmarks.json").write_text(json.dumps(lm))
    return directory


TAXONOMY = {
    0: segmap.LabelInfo("background", "other"),
    1: segmap.LabelInfo("face", "other", person=True),
    2: segmap.LabelInfo("hair", "other", person=True),
    3: segmap.LabelInfo("upper-clothes", "upper"),
    4: segmap.LabelInfo("coat", "upper"),
    5: segmap.LabelInfo("dress", "upper"),
    6: segmap.LabelInfo("pants", "lower"),
    7: segmap.LabelInfo("skirt", "lower"),
    8: segmap.LabelInfo("left-shoe", "shoes"),
    9: segmap.LabelInfo("right-shoe", "shoes"),
    10: segmap.LabelInfo("bag", "other"),
}


@pytest.fixture
def taxonomy():
    return dict(TAXONOMY)


def paint(shape, regions):
    """Label grid with ``regions = [(label, y0, y1, x0, x1), ...]`` painted in order."""
    labels = np.zeros(shape, dtype=np.int64)
    for label, y0, y1, x0, x1 in regions:
        labels[y0:y1, x0:x1] = label
    return labels


# --- CLI input trees -----------------------------------------------------------

def save_png(array, path):
    from PIL import Image

    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


def write_taxonomy(path):
    segmap.save_taxonomy(TAXONOMY, path)
    return path


FULLBODY_JOINTS = {
    "REye": (118, 40), "LEye": (138, 40), "Mouth": (128, 58), "Neck": (128, 75),
    "RShoulder": (100, 85), "LShoulder": (156, 86), "RElbow": (88, 130), "LElbow": (168, 128),
    "RHip": (112, 170), "LHip": (144, 171), "RKnee": (110, 220), "LKnee": (146, 221),
    "RAnkle": (108, 265), "LAnkle": (148, 266), "RBigToe": (100, 280), "LBigToe": (158, 281),
    "RSmallToe": (96, 278), "LSmallToe": (162, 279), "RHeel": (110, 276), "LHeel": (146, 277),
}


def write_selfie_inputs(root, count=2, drop_lower_for=None):
    """Full-body images with keypoint sidecars plus ``typical_<part>.json`` targets."""
    from selfiegen import warp

    images = root / "images"
    typical = root / "typical"
    images.mkdir(parents=True, exist_ok=True)
    typical.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for i in range(count):
        img = rng.integers(0, 256, (300, 256, 3)).astype(np.uint8)
        save_png(img, images / f"body{i}.png")
        kps = []
        for name, (x, y) in FULLBODY_JOINTS.items():
            conf = 0.9
            if drop_lower_for == i and name in ("RKnee", "LKnee", "RAnkle", "LAnkle"):
                conf = 0.05
            kps.append(warp.Keypoint(name, x + 2.0 * i, y + 1.0 * i, conf))
        warp.save_keypoints(warp.KeypointSet.from_list(kps, (256, 300)), images / f"body{i}.keypoints.json")
    for part, joints in warp.PART_JOINTS.items():
        pts = np.array([FULLBODY_JOINTS[n] for n in joints], float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        # spread the part's joints over most of a 256 x 256 canvas
        scale = 180.0 / max(hi - lo)
        centred = (pts - (lo + hi) / 2) * scale + 128
        kps = [warp.Keypoint(n, float(x), float(y), 1.0) for n, (x, y) in zip(joints, centred)]
        warp.save_keypoints(warp.KeypointSet.from_list(kps, (256, 256)), typical / f"typical_{part}.json")
    return images, typical


def write_rank_inputs(root, n_maps=6, seed=0):
    """Selfie maps, a collection of reference maps and the taxonomy."""
    root.mkdir(parents=True, exist_ok=True)
    tax = write_taxonomy(root / "taxonomy.json")
    save_png(paint((64, 64), [(3, 10, 40, 10, 50), (10, 40, 45, 0, 5)]), root / "upper.png")
    save_png(paint((64, 64), [(6, 10, 60, 10, 50)]), root / "lower.png")
    save_png(paint((64, 64), [(8, 20, 40, 5, 30), (9, 20, 40, 34, 60)]), root / "shoes.png")
    coll = root / "collection"
    coll.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_maps):
        regions = []
        for label in rng.choice(np.arange(1, 11), size=rng.integers(1, 5), replace=False):
            y0, x0 = rng.integers(0, 50, 2)
            regions.append((int(label), y0, y0 + rng.integers(1, 14), x0, x0 + rng.integers(1, 14)))
        save_png(paint((64, 64), regions), coll / f"ref{i:02d}.png")
    return tax, coll


def write_augment_inputs(root, n_candidates=3):
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(4)
    save_png(rng.integers(0, 256, (96, 64, 3)), root / "background.png")
    pool = root / "pool"
    pool.mkdir(exist_ok=True)
    for i in range(n_candidates):
        y = 5 + i
        save_png(paint((96, 64), [(1, y, y + 12, 24, 40), (3, y + 12, y + 45, 14, 50),
                                  (6, y + 45, y + 75, 18, 46), (8, y + 75, y + 85, 16, 30),
                                  (9, y + 75, y + 85, 34, 48)]), pool / f"cand{i}.png")
    write_taxonomy(root / "taxonomy.json")
    selfies = {}
    for part, shape in {"face": (120, 100), "upper": (80, 60), "lower": (90, 50), "shoes": (40, 70)}.items():
        selfies[part] = root / f"{part}.png"
        save_png(rng.integers(1, 256, shape + (3,)), selfies[part])
    return root / "background.png", pool, root / "taxonomy.json", selfies


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    lines = getattr(results, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
