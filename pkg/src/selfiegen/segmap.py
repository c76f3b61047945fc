"""Semantic-map utilities: label sets and pose-reference ranking, person boxes and
masks, dilation, Canny edge targets, and landmark-driven face alignment."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import _backend
from .errors import DegenerateError, InvalidInputError, NotFoundError
from .warp import warp_image

GROUPS = ("upper", "lower", "shoes", "other")
PERSON_GROUPS = frozenset({"upper", "lower", "shoes"})

SELFIE_MIN_PIXELS = 21
REFERENCE_MIN_PIXELS = 5
BBOX_SCALE = 1.1
DILATE_RADIUS = 21
CANNY_LOW = 50.0
CANNY_HIGH = 150.0
CANNY_SIGMA = 1.4


@dataclass(frozen=True)
class LabelInfo:
    name: str
    group: str = "other"
    person: bool | None = None  # None: person iff group is upper/lower/shoes

    def __post_init__(self):
        if self.group not in GROUPS:
            raise InvalidInputError(f"label {self.name!r}: group must be one of {GROUPS}, got {self.group!r}")

    @property
    def is_person(self):
        return self.group in PERSON_GROUPS if self.person is None else self.person


@dataclass
class SemanticMap:
    labels: np.ndarray  # (H, W) integer label ids
    taxonomy: dict  # id -> LabelInfo

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise InvalidInputError("label grid must be 2-D")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise InvalidInputError("labels must be integers")
        missing = set(np.unique(self.labels).tolist()) - set(self.taxonomy)
        if missing:
            raise InvalidInputError(f"labels missing from taxonomy: {sorted(missing)}")

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def ids_where(self, predicate):
        return [i for i, info in self.taxonomy.items() if predicate(info)]

    def person_mask(self):
        return np.isin(self.labels, self.ids_where(lambda info: info.is_person))

    def group_mask(self, group):
        return np.isin(self.labels, self.ids_where(lambda info: info.group == group))


def load_taxonomy(path):
    """JSON list of ``{id, name, group}`` (optional boolean ``person``)."""
    entries = json.loads(Path(path).read_text())
    return {int(e["id"]): LabelInfo(e["name"], e.get("group", "other"), e.get("person"))
            for e in entries}


def save_taxonomy(taxonomy, path):
    entries = []
    for i, info in sorted(taxonomy.items()):
        e = {"id": i, "name": info.name, "group": info.group}
        if info.person is not None:
            e["person"] = info.person
        entries.append(e)
    Path(path).write_text(json.dumps(entries, indent=2))


def load_semantic_map(png_path, taxonomy):
    if not isinstance(taxonomy, dict):
        taxonomy = load_taxonomy(taxonomy)
    labels = np.asarray(Image.open(png_path))
    if labels.ndim != 2:
        raise InvalidInputError(f"{png_path}: semantic map must be a single-channel 8-bit PNG")
    return SemanticMap(labels.astype(np.int64), taxonomy)


def save_label_png(labels, path):
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)


# --- label sets and ranking ------------------------------------------------

def extract_label_set(smap, min_pixels, groups=PERSON_GROUPS):
    """Labels covering at least ``min_pixels`` pixels whose group is in ``groups``."""
    ids, counts = np.unique(smap.labels, return_counts=True)
    groups = {groups} if isinstance(groups, str) else set(groups)
    return frozenset(int(i) for i, c in zip(ids, counts)
                     if c >= min_pixels and smap.taxonomy[int(i)].group in groups)


def match_score(p_r, p_u, p_l, p_s):
    return len(set(p_r) & (set(p_u) | set(p_l) | set(p_s)))


def selfie_label_sets(upper_map, lower_map, shoes_map, min_pixels=SELFIE_MIN_PIXELS):
    """``(P_u, P_l, P_s)`` from the three part selfies' semantic maps."""
    return (extract_label_set(upper_map, min_pixels, "upper"),
            extract_label_set(lower_map, min_pixels, "lower"),
            extract_label_set(shoes_map, min_pixels, "shoes"))


def rank_collection(selfie_sets, collection, min_pixels=REFERENCE_MIN_PIXELS):
    """Rank candidate reference maps by matched clothing labels, best first.

    Ties keep collection order. Returns ``[(index, score), ...]``.
    """
    p_u, p_l, p_s = selfie_sets
    scores = [(i, match_score(extract_label_set(m, min_pixels, PERSON_GROUPS), p_u, p_l, p_s))
              for i, m in enumerate(collection)]
    return sorted(scores, key=lambda item: -item[1])


# --- boxes and masks ---------------------------------------------------------

@dataclass(frozen=True)
class BBox:
    """Half-open pixel box ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise InvalidInputError(f"empty box {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def center(self):
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def as_list(self):
        return [self.x0, self.y0, self.x1, self.y1]

    def to_mask(self, image_size):
        w, h = image_size
        m = np.zeros((h, w), dtype=bool)
        m[max(self.y0, 0):min(self.y1, h), max(self.x0, 0):min(self.x1, w)] = True
        return m


def mask_bbox(mask):
    """Tight box around the true pixels of a boolean mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise NotFoundError("mask is empty")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def person_bbox(smap):
    try:
        return mask_bbox(smap.person_mask())
    except NotFoundError:
        raise NotFoundError("semantic map has no person pixels") from None


def part_bbox(smap, group):
    try:
        return mask_bbox(smap.group_mask(group))
    except NotFoundError:
        raise NotFoundError(f"semantic map has no {group!r} pixels") from None


def _round_half_up(v):
    # snap representation error (e.g. 100 * 1.1) before rounding
    return int(np.floor(round(v, 9) + 0.5))


def scale_bbox(bbox, factor, image_size):
    """Scale a box about its centre and clamp it to ``image_size = (width, height)``."""
    if not factor > 0:
        raise InvalidInputError(f"scale factor must be positive, got {factor}")
    cx, cy = bbox.center
    hw = bbox.width * factor / 2.0
    hh = bbox.height * factor / 2.0
    w, h = image_size
    x0 = min(max(_round_half_up(cx - hw), 0), w - 1)
    y0 = min(max(_round_half_up(cy - hh), 0), h - 1)
    x1 = max(min(_round_half_up(cx + hw), w), x0 + 1)
    y1 = max(min(_round_half_up(cy + hh), h), y0 + 1)
    return BBox(x0, y0, x1, y1)


def scale_bbox_to_mask(bbox, factor=BBOX_SCALE, image_size=(512, 512)):
    """Filled inpainting mask (True = region to generate) of the scaled box."""
    return scale_bbox(bbox, factor, image_size).to_mask(image_size)


def dilate(mask, radius_px=DILATE_RADIUS):
    """Binary dilation with a (2r+1)-wide square, i.e. a max filter."""
    if radius_px < 0:
        raise InvalidInputError("radius must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if radius_px == 0 or not m.any():
        return m.copy()
    return ndimage.maximum_filter(m, size=2 * radius_px + 1, mode="constant", cval=False)


def save_mask_png(mask, path):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask_png(path):
    return np.asarray(Image.open(path).convert("L")) > 127


# --- Canny edge target ---------------------------------------------------------

def canonical_labels(labels):
    """Relabel by order of first appearance in raster order (0, 1, 2, ...)."""
    flat = np.asarray(labels).ravel()
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    return rank[inverse].reshape(np.shape(labels)), len(uniq)


def label_gradients(labels, sigma=CANNY_SIGMA):
    """Gradient magnitude and orientation of the smoothed one-hot label image.

    Each region indicator is scaled to 0..255, Gaussian-smoothed and
    Sobel-differentiated; per-pixel channel gradients combine through the 2x2
    structure tensor (magnitude = sqrt of its trace, orientation = its principal
    direction). Only region boundaries contribute, whatever the label values.
    """
    canon, n = canonical_labels(labels)
    h, w = canon.shape
    jxx = np.zeros((h, w))
    jyy = np.zeros((h, w))
    jxy = np.zeros((h, w))
    if n > 1:
        for k in range(n):
            ch = np.where(canon == k, 255.0, 0.0)
            sm = ndimage.gaussian_filter(ch, sigma, mode="nearest")
            gx = ndimage.sobel(sm, axis=1, mode="nearest")
            gy = ndimage.sobel(sm, axis=0, mode="nearest")
            jxx += gx * gx
            jyy += gy * gy
            jxy += gx * gy
    # symmetric ridges straddle two pixels; rounding makes their tie exact
    mag = np.round(np.sqrt(jxx + jyy), 6)
    theta = 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)
    return mag, theta


def quantize_direction(theta):
    """Orientation in radians -> bins 0..3 (0, 45, 90, 135 degrees; rows grow downward)."""
    deg = np.degrees(theta) % 180.0
    return (np.floor((deg + 22.5) / 45.0).astype(np.int8) % 4)


def hysteresis(mag, low, high):
    strong = mag >= high
    weak = mag >= low
    lab, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(weak)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(lab[strong])] = True
    keep[0] = False
    return keep[lab]


def canny_from_semantic(smap, low=CANNY_LOW, high=CANNY_HIGH, sigma=CANNY_SIGMA):
    """Binary (0/255) edge image following region boundaries of a semantic map."""
    if not high >= low >= 0:
        raise InvalidInputError(f"need high >= low >= 0, got low={low}, high={high}")
    labels = smap.labels if isinstance(smap, SemanticMap) else np.asarray(smap)
    mag, theta = label_gradients(labels, sigma)
    thin = _backend.kernels.nms(np.ascontiguousarray(mag), np.ascontiguousarray(quantize_direction(theta)))
    edges = hysteresis(thin, low, high)
    return np.where(edges, 255, 0).astype(np.uint8)


# --- face alignment ------------------------------------------------------------

def face_alignment_quad(eye_left, eye_right, mouth):
    """Oriented crop square from eye and mouth-centre landmarks.

    Returns ``(center, x_axis, y_axis)``: the crop spans ``center +- x_axis +- y_axis``.
    """
    el = np.asarray(eye_left, dtype=np.float64)
    er = np.asarray(eye_right, dtype=np.float64)
    mouth = np.asarray(mouth, dtype=np.float64)
    eye_to_eye = er - el
    eye_avg = 0.5 * (el + er)
    eye_to_mouth = mouth - eye_avg
    scale = max(np.hypot(*eye_to_eye), np.hypot(*eye_to_mouth))
    if np.hypot(*eye_to_eye) <= 1e-9 * max(scale, 1.0):
        raise DegenerateError("eye landmarks coincide")
    cross = eye_to_eye[0] * eye_to_mouth[1] - eye_to_eye[1] * eye_to_mouth[0]
    if abs(cross) <= 1e-9 * max(scale * scale, 1.0):
        raise DegenerateError("mouth lies on the eye axis")
    x = eye_to_eye - np.flipud(eye_to_mouth) * np.array([-1.0, 1.0])
    x /= np.hypot(*x)
    x *= max(np.hypot(*eye_to_eye) * 2.0, np.hypot(*eye_to_mouth) * 1.8)
    y = np.flipud(x) * np.array([-1.0, 1.0])
    c = eye_avg + eye_to_mouth * 0.1
    return c, x, y


def face_alignment_matrix(eye_left, eye_right, mouth, out_size=512):
    """3x3 similarity mapping input pixel coordinates to aligned-crop coordinates."""
    c, x, y = face_alignment_quad(eye_left, eye_right, mouth)
    corner = c - x - y
    # output pixel (u, v) samples corner + (u + 0.5) / S * 2x + (v + 0.5) / S * 2y
    s = float(out_size)
    out_to_in = np.array([
        [2 * x[0] / s, 2 * y[0] / s, corner[0] + (x[0] + y[0]) / s],
        [2 * x[1] / s, 2 * y[1] / s, corner[1] + (x[1] + y[1]) / s],
        [0.0, 0.0, 1.0],
    ])
    return np.linalg.inv(out_to_in)


def align_face(image, eye_left, eye_right, mouth, out_size=512, fill=0):
    """Rotate, scale and crop a face to the canonical square layout.

    Returns ``(crop, matrix)`` where ``matrix`` maps input to output pixels.
    """
    m = face_alignment_matrix(eye_left, eye_right, mouth, out_size)
    crop = warp_image(image, m, (out_size, out_size), "bilinear", fill)
    return crop, m
