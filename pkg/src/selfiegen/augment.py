"""Augmentation sets: fine-tuning composites and zero-padded DreamBooth crops.

All randomness is drawn from ``numpy.random.default_rng([seed, index])`` so each
output depends only on the seed and its own index.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .segmap import BBox
from .warp import resize_image

PARTS = ("face", "upper", "lower", "shoes")
POOL_SIZE = 20
FINETUNE_OUTPUTS = 200
DREAMBOOTH_OUTPUTS = 50
DREAMBOOTH_OUT_RES = 512
FACE_RES_RANGE = (350, 450)
SHOES_RES_RANGE = (400, 500)


def item_rng(seed, index):
    """Generator for output ``index``; ``seed`` may be an int or a tuple of ints."""
    base = [int(v) for v in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.default_rng(base + [int(index)])


@dataclass
class CompositeSpec:
    background: np.ndarray
    part_bbox: BBox
    selfie: np.ndarray
    part: str = "upper"
    mask: np.ndarray | None = None

    def validate(self):
        h, w = self.background.shape[:2]
        b = self.part_bbox
        if b.height <= 0:
            raise InvalidInputError("part bbox has zero height")
        if b.x0 < 0 or b.y0 < 0 or b.x1 > w or b.y1 > h:
            raise InvalidInputError(f"part bbox {b.as_list()} outside image {w}x{h}")
        if self.mask is not None and np.shape(self.mask) != (h, w):
            raise InvalidInputError("mask dims differ from the background")
        if self.part not in PARTS:
            raise InvalidInputError(f"unknown part {self.part!r}")


@dataclass
class AugmentPlan:
    pool_size: int = POOL_SIZE
    num_outputs: int = FINETUNE_OUTPUTS
    rng_seed: int = 0

    def __post_init__(self):
        if self.pool_size < 1 or self.num_outputs < 1:
            raise InvalidInputError("pool_size and num_outputs must be >= 1")


def paste_rect(bbox, selfie_shape):
    """Placement ``(x0, y0, width, height)`` of the selfie resized to the bbox height."""
    sh, sw = selfie_shape[:2]
    nh = bbox.height
    nw = max(1, int(round(sw * nh / sh)))
    x0 = bbox.x0 + (bbox.width - nw) // 2
    return x0, bbox.y0, nw, nh


def compose_finetune_target(spec):
    """Paste the selfie, scaled to the bbox height, centred on the bbox; clipped at borders.

    Returns ``(image, (x0, y0, x1, y1))`` with the clipped pasted rectangle
    (empty when the selfie misses the image entirely).
    """
    spec.validate()
    bg = spec.background
    out = bg.copy()
    x0, y0, nw, nh = paste_rect(spec.part_bbox, spec.selfie.shape)
    resized = resize_image(spec.selfie, (nw, nh))
    h, w = bg.shape[:2]
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + nw, w), min(y0 + nh, h)
    if cx0 < cx1 and cy0 < cy1:
        out[cy0:cy1, cx0:cx1] = resized[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
    return out, (cx0, cy0, max(cx0, cx1), max(cy0, cy1))


@dataclass
class Candidate:
    """One pool entry: a background and the body-part boxes found in a candidate image."""

    background: np.ndarray
    bboxes: dict = field(default_factory=dict)  # part -> BBox
    mask: np.ndarray | None = None


def build_finetune_set(pool, selfies, plan=None):
    """Draw ``plan.num_outputs`` composites; returns ``(images, records)``.

    Each output picks a candidate uniformly from the first ``plan.pool_size``
    pool entries, then a part uniformly among those present in both the
    candidate's boxes and ``selfies``.
    """
    plan = plan or AugmentPlan()
    pool = list(pool)[:plan.pool_size]
    if not pool:
        raise InvalidInputError("candidate pool is empty")
    images, records = [], []
    for i in range(plan.num_outputs):
        rng = item_rng(plan.rng_seed, i)
        ci = int(rng.integers(len(pool)))
        cand = pool[ci]
        parts = [p for p in PARTS if p in cand.bboxes and p in selfies]
        if not parts:
            raise InvalidInputError(f"candidate {ci} shares no part with the selfies")
        part = parts[int(rng.integers(len(parts)))]
        spec = CompositeSpec(cand.background, cand.bboxes[part], selfies[part], part, cand.mask)
        img, rect = compose_finetune_target(spec)
        images.append(img)
        records.append({
            "index": i,
            "source_part": part,
            "candidate_index": ci,
            "resolution": [rect[2] - rect[0], rect[3] - rect[1]],
            "offset": [rect[0], rect[1]],
        })
    return images, records


def center_crop_square(image):
    h, w = image.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    return image[y0:y0 + s, x0:x0 + s]


def dreambooth_pad_augment(image, min_res, max_res, out_res=DREAMBOOTH_OUT_RES,
                           count=DREAMBOOTH_OUTPUTS, rng_seed=0, center_crop=True,
                           resize_method="bilinear"):
    """Random square resize in ``[min_res, max_res]`` placed on a zero canvas.

    Returns ``(images, records)``; each record carries the sampled resolution
    and ``[x, y]`` offset.
    """
    if not 1 <= min_res <= max_res:
        raise InvalidInputError(f"need 1 <= min_res <= max_res, got {min_res}, {max_res}")
    if max_res > out_res:
        raise InvalidInputError(f"max_res {max_res} exceeds output resolution {out_res}")
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    src = center_crop_square(image) if center_crop else image
    images, records = [], []
    for i in range(count):
        rng = item_rng(rng_seed, i)
        r = int(rng.integers(min_res, max_res + 1))
        ox = int(rng.integers(0, out_res - r + 1))
        oy = int(rng.integers(0, out_res - r + 1))
        canvas = np.zeros((out_res, out_res) + src.shape[2:], dtype=src.dtype)
        canvas[oy:oy + r, ox:ox + r] = resize_image(src, (r, r), resize_method)
        images.append(canvas)
        records.append({"index": i, "resolution": r, "offset": [ox, oy]})
    return images, records
