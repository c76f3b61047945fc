"""Homography estimation/warping and keypoint-anchored selfie simulation."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateError, InsufficientDataError, InvalidInputError, SimulationFailure

CONFIDENCE_THRESHOLD = 0.3

# 25-joint OpenPose body model, in index order
BODY_25 = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye",
    "REar", "LEar", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
)

PART_JOINTS = {
    "upper": ("Neck", "RShoulder", "LShoulder", "RElbow", "LElbow", "RHip", "LHip"),
    "lower": ("RHip", "LHip", "RKnee", "LKnee", "RAnkle", "LAnkle"),
    "shoes": ("RAnkle", "LAnkle", "RBigToe", "LBigToe", "RSmallToe", "LSmallToe", "RHeel", "LHeel"),
}


@dataclass(frozen=True)
class Keypoint:
    name: str
    x: float
    y: float
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"{self.name}: confidence {self.confidence} outside [0, 1]")


@dataclass
class KeypointSet:
    keypoints: dict = field(default_factory=dict)  # name -> Keypoint
    image_size: tuple = (0, 0)  # (width, height)

    @classmethod
    def from_list(cls, points, image_size):
        kps = {}
        for kp in points:
            if kp.name in kps:
                raise InvalidInputError(f"duplicate keypoint name {kp.name!r}")
            kps[kp.name] = kp
        return cls(kps, tuple(int(v) for v in image_size))

    def confident(self, threshold=CONFIDENCE_THRESHOLD):
        """Keypoints at or above ``threshold``; the rest count as missing."""
        return {n: kp for n, kp in self.keypoints.items() if kp.confidence >= threshold}

    def to_json(self):
        return {
            "image_size": list(self.image_size),
            "keypoints": [{"name": k.name, "x": k.x, "y": k.y, "confidence": k.confidence}
                          for k in self.keypoints.values()],
        }

    @classmethod
    def from_json(cls, data):
        pts = [Keypoint(p["name"], float(p["x"]), float(p["y"]), float(p.get("confidence", 1.0)))
               for p in data["keypoints"]]
        return cls.from_list(pts, data["image_size"])

    @classmethod
    def from_openpose(cls, data, image_size, person=0):
        """Build from raw OpenPose output (``people[i].pose_keypoints_2d``, BODY_25)."""
        flat = data["people"][person]["pose_keypoints_2d"]
        pts = [Keypoint(name, float(flat[3 * i]), float(flat[3 * i + 1]), float(flat[3 * i + 2]))
               for i, name in enumerate(BODY_25) if 3 * i + 2 < len(flat)]
        return cls.from_list(pts, image_size)


def load_keypoints(path):
    return KeypointSet.from_json(json.loads(Path(path).read_text()))


def save_keypoints(kps, path):
    Path(path).write_text(json.dumps(kps.to_json(), indent=2))


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, scaled to unit Frobenius norm with ``h[2, 2] >= 0``."""

    matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        norm = np.linalg.norm(h)
        if not np.isfinite(norm) or norm == 0.0:
            raise DegenerateError("homography is zero or non-finite")
        h = h / norm
        if h[2, 2] < 0 or (h[2, 2] == 0 and h[np.nonzero(h)][0] < 0):
            h = -h
        if abs(np.linalg.det(h)) < 1e-12:
            raise DegenerateError("homography is singular")
        object.__setattr__(self, "matrix", h)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def inverse(self):
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points):
        return apply_homography(self.matrix, points)

    def to_json(self):
        return [float(v) for v in self.matrix.ravel()]

    @classmethod
    def from_json(cls, data):
        return cls(np.asarray(data, dtype=np.float64).reshape(3, 3))


def apply_homography(h, points):
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    q = p @ h[:, :2].T + h[:, 2]
    return q[:, :2] / q[:, 2:3]


def _hartley(points):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = points.mean(axis=0)
    mean_dist = np.linalg.norm(points - c, axis=1).mean()
    if mean_dist == 0.0:
        raise DegenerateError("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _has_collinear_triple(points, tol=1e-9):
    n = len(points)
    scale = max(np.ptp(points, axis=0).max(), 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = points[i], points[j], points[k]
                cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if abs(cross) <= tol * scale * scale:
                    return True
    return False


def estimate_homography(src, dst):
    """Normalised DLT estimate of ``H`` with ``dst ~ H @ src``."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise InvalidInputError("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {len(src)}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise InvalidInputError("non-finite coordinates")
    if len(src) == 4 and (_has_collinear_triple(src) or _has_collinear_triple(dst)):
        raise DegenerateError("three of the four points are collinear")

    ts, td = _hartley(src), _hartley(dst)
    s = apply_homography(ts, src)
    d = apply_homography(td, dst)
    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1.0
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = u * x, u * y, u
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1.0
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = v * x, v * y, v

    _, sv, vt = np.linalg.svd(a)
    # a 2n x 9 system with a unique solution has an 8-dimensional row space
    if sv.size < 8 or sv[7] <= 1e-10 * sv[0]:
        raise DegenerateError("correspondences do not determine a unique homography")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    return Homography(h)


def _snap(coords, tol=1e-9):
    r = np.rint(coords)
    return np.where(np.abs(coords - r) <= tol, r, coords)


def sample_image(image, xs, ys, interpolation="bilinear", fill=0):
    """Sample ``image`` at float coordinates; out-of-range samples take ``fill``."""
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, ch = img.shape
    xs = _snap(np.asarray(xs, dtype=np.float64))
    ys = _snap(np.asarray(ys, dtype=np.float64))
    fill_arr = np.broadcast_to(np.asarray(fill, dtype=np.float64), (ch,))
    out = np.empty(xs.shape + (ch,), dtype=np.float64)
    out[:] = fill_arr

    if interpolation == "nearest":
        xi = np.floor(xs + 0.5)
        yi = np.floor(ys + 0.5)
        ok = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1)
        out[ok] = img[yi[ok].astype(np.int64), xi[ok].astype(np.int64)]
    elif interpolation == "bilinear":
        ok = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
        x, y = xs[ok], ys[ok]
        x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros(x.shape, np.int64)
        y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros(y.shape, np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        src = img.astype(np.float64)
        top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
        bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
        out[ok] = top * (1.0 - fy) + bot * fy
    else:
        raise InvalidInputError(f"unknown interpolation {interpolation!r}")

    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    else:
        out = out.astype(img.dtype)
    return out[..., 0] if squeeze else out


def warp_image(image, h, out_size, interpolation="bilinear", fill=0):
    """Inverse-map warp: output pixel ``(x, y)`` samples the input at ``H^-1 (x, y, 1)``.

    ``out_size`` is ``(width, height)``. Use ``interpolation="nearest"`` for label
    images so labels are never blended.
    """
    matrix = h.matrix if isinstance(h, Homography) else np.asarray(h, dtype=np.float64)
    if abs(np.linalg.det(matrix / np.linalg.norm(matrix))) < 1e-12:
        raise DegenerateError("homography is singular")
    inv = np.linalg.inv(matrix)
    w, hgt = int(out_size[0]), int(out_size[1])
    ys, xs = np.mgrid[0:hgt, 0:w].astype(np.float64)
    q = inv[:, 0, None, None] * xs + inv[:, 1, None, None] * ys + inv[:, 2, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = q[0] / q[2]
        sy = q[1] / q[2]
    bad = ~(np.isfinite(sx) & np.isfinite(sy)) | (q[2] <= 0)
    sx = np.where(bad, -1.0, sx)
    sy = np.where(bad, -1.0, sy)
    return sample_image(image, sx, sy, interpolation, fill)


def resize_image(image, out_size, method="bilinear"):
    """Resize to ``(width, height)``.

    ``bilinear`` uses half-pixel-centre sampling with edge clamping;
    ``area`` averages source pixels (better for large downscales).
    """
    img = np.asarray(image)
    w, h = int(out_size[0]), int(out_size[1])
    if w < 1 or h < 1:
        raise InvalidInputError(f"bad output size {out_size}")
    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (w, h):
        return img.copy()
    if method == "area":
        from PIL import Image
        return np.asarray(Image.fromarray(img).resize((w, h), Image.Resampling.BOX))
    if method != "bilinear":
        raise InvalidInputError(f"unknown resize method {method!r}")
    # bilinear is separable: interpolate rows, then columns
    out = _lerp_axis(img.astype(np.float64), h, 0)
    out = _lerp_axis(out, w, 1)
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out.astype(img.dtype)


def _lerp_axis(a, n, axis):
    size = a.shape[axis]
    if size == n:
        return a
    pos = np.clip((np.arange(n) + 0.5) * (size / n) - 0.5, 0, size - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(size - 2, 0))
    i1 = np.minimum(i0 + 1, size - 1)
    shape = [1] * a.ndim
    shape[axis] = n
    f = (pos - i0).reshape(shape)
    return np.take(a, i0, axis=axis) * (1.0 - f) + np.take(a, i1, axis=axis) * f


def correspondences(detected, typical, part, joints=None, threshold=CONFIDENCE_THRESHOLD):
    """Matched (src, dst, names) for a body part using confident joints only."""
    names = joints if joints is not None else PART_JOINTS[part]
    det = detected.confident(threshold)
    typ = typical.confident(threshold)
    shared = [n for n in names if n in det and n in typ]
    src = np.array([[det[n].x, det[n].y] for n in shared], dtype=np.float64).reshape(-1, 2)
    dst = np.array([[typ[n].x, typ[n].y] for n in shared], dtype=np.float64).reshape(-1, 2)
    return src, dst, shared


def simulate_selfie(fullbody_image, detected, typical, part, out_size=(512, 512),
                    joints=None, threshold=CONFIDENCE_THRESHOLD, fill=0):
    """Warp a full-body image so the part's keypoints land on their typical positions.

    The warp targets the canvas of ``typical.image_size`` and is then resized to
    ``out_size``. Returns ``(image, homography)``; the homography maps input
    pixels to output pixels.
    """
    if part not in PART_JOINTS and joints is None:
        raise InvalidInputError(f"unknown part {part!r}")
    src, dst, shared = correspondences(detected, typical, part, joints, threshold)
    if len(shared) < 4:
        raise SimulationFailure(
            f"{part}: only {len(shared)} confident shared keypoints ({', '.join(shared) or 'none'}), need 4")
    try:
        h = estimate_homography(src, dst)
    except (DegenerateError, InsufficientDataError) as exc:
        raise SimulationFailure(f"{part}: {exc}") from exc

    canvas = tuple(int(v) for v in typical.image_size)
    out_w, out_h = int(out_size[0]), int(out_size[1])
    scale = np.diag([out_w / canvas[0], out_h / canvas[1], 1.0])
    # half-pixel-centre convention, matching resize_image
    shift = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
    to_out = np.linalg.inv(shift) @ scale @ shift
    if canvas == (out_w, out_h):
        full = h
    else:
        full = Homography(to_out @ h.matrix)
    warped = warp_image(fullbody_image, full, (out_w, out_h), "bilinear", fill)
    return warped, full


def typical_keypoints(examples, threshold=CONFIDENCE_THRESHOLD):
    """Per-joint mean position over the examples where the joint is confident."""
    examples = list(examples)
    if not examples:
        raise InvalidInputError("need at least one example keypoint set")
    sizes = {tuple(e.image_size) for e in examples}
    if len(sizes) != 1:
        raise InvalidInputError(f"examples disagree on image_size: {sorted(sizes)}")
    order = []
    acc = {}
    for ex in examples:
        for name, kp in ex.confident(threshold).items():
            if name not in acc:
                acc[name] = []
                order.append(name)
            acc[name].append((kp.x, kp.y, kp.confidence))
    pts = []
    for name in order:
        arr = np.array(acc[name])
        if len(arr) == 1:
            x, y, c = arr[0]
        else:
            x, y, c = arr.mean(axis=0)
        pts.append(Keypoint(name, float(x), float(y), float(c)))
    return KeypointSet.from_list(pts, sizes.pop())
