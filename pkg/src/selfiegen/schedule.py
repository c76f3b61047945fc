"""Forward noising and the soft latent-blending rule applied between denoiser calls.

Latent grids are float arrays shaped ``(channels, height, width)``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

BLEND_S = 0.4
TOTAL_STEPS = 50


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep weights ``alpha[t]`` for ``t = 0..T``, non-increasing."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if a.size < 2:
            raise InvalidInputError("schedule needs at least two entries (t = 0 and t = T)")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise InvalidInputError("alpha values must lie in [0, 1]")
        if np.any(np.diff(a) > 0):
            raise InvalidInputError("alpha must be non-increasing in t")
        object.__setattr__(self, "alpha", a)

    @property
    def total_steps(self):
        return self.alpha.size - 1

    @classmethod
    def linear(cls, total_steps=TOTAL_STEPS):
        return cls(1.0 - np.arange(total_steps + 1) / total_steps)

    def to_json(self):
        return [float(v) for v in self.alpha]


def load_schedule(path):
    return NoiseSchedule(json.loads(Path(path).read_text()))


def forward_diffuse(z0, t, eps, schedule):
    """``alpha_t * z0 + (1 - alpha_t) * eps``, the convex-combination noising rule.

    Note this is not the sqrt(alpha-bar) DDPM parameterisation; load whichever
    weights your sampler expects into ``schedule``.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise InvalidInputError(f"z0 {z0.shape} and eps {eps.shape} differ in shape")
    if not 0 <= t <= schedule.total_steps:
        raise InvalidInputError(f"timestep {t} outside [0, {schedule.total_steps}]")
    a = schedule.alpha[int(t)]
    return a * z0 + (1.0 - a) * eps


@dataclass
class BlendConfig:
    mask: np.ndarray  # (H, W) bool, True = foreground (dilated body mask)
    s: float = BLEND_S
    total_steps: int = TOTAL_STEPS

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if not 0.0 <= self.s <= 1.0:
            raise InvalidInputError(f"s must lie in [0, 1], got {self.s}")
        if self.total_steps < 1:
            raise InvalidInputError("total_steps must be >= 1")

    @property
    def threshold(self):
        return self.s * self.total_steps


def blend_step(z_f, z_b, cfg, t):
    """Denoised latent at step ``t`` from foreground/background candidates.

    For ``t <= s*T`` the foreground latent is returned as is; for larger ``t``
    background latents replace it wherever the mask is 0. ``t`` counts down from
    ``T``.
    """
    z_f = np.asarray(z_f)
    z_b = np.asarray(z_b)
    if z_f.shape != z_b.shape:
        raise InvalidInputError(f"z_f {z_f.shape} and z_b {z_b.shape} differ in shape")
    if z_f.ndim != 3 or cfg.mask.shape != z_f.shape[1:]:
        raise InvalidInputError(f"mask {cfg.mask.shape} does not match latent grid {z_f.shape}")
    if t <= cfg.threshold:
        return z_f.copy()
    return np.where(cfg.mask[None, :, :], z_f, z_b)


def downsample_mask_to_latent(mask, latent_size):
    """Block-max pooling to ``latent_size = (height, width)``.

    Cell ``i`` covers source rows ``floor(i*H/h) .. ceil((i+1)*H/h) - 1`` so the
    blocks tile the mask even when the sizes do not divide.
    """
    m = np.asarray(mask, dtype=bool)
    big_h, big_w = m.shape
    h, w = int(latent_size[0]), int(latent_size[1])
    if not (1 <= h <= big_h and 1 <= w <= big_w):
        raise InvalidInputError(f"latent size {(h, w)} must be within mask size {(big_h, big_w)}")
    if big_h % h == 0 and big_w % w == 0:
        return m.reshape(h, big_h // h, w, big_w // w).any(axis=(1, 3))
    # prefix sums give an O(1) "any" per block
    csum = np.zeros((big_h + 1, big_w + 1), dtype=np.int64)
    csum[1:, 1:] = m.cumsum(0).cumsum(1)
    r0 = (np.arange(h) * big_h) // h
    r1 = -((-(np.arange(1, h + 1)) * big_h) // h)
    c0 = (np.arange(w) * big_w) // w
    c1 = -((-(np.arange(1, w + 1)) * big_w) // w)
    total = (csum[r1][:, c1] - csum[r0][:, c1] - csum[r1][:, c0] + csum[r0][:, c0])
    return total > 0


def save_latent(grid, raw_path):
    """Raw little-endian f32 plus a ``.json`` header ``{channels, height, width}``."""
    raw_path = Path(raw_path)
    g = np.asarray(grid)
    if g.ndim != 3:
        raise InvalidInputError("latent grid must be (channels, height, width)")
    g.astype("<f4").tofile(raw_path)
    c, h, w = g.shape
    raw_path.with_suffix(".json").write_text(json.dumps({"channels": c, "height": h, "width": w}))


def load_latent(raw_path):
    raw_path = Path(raw_path)
    header = json.loads(raw_path.with_suffix(".json").read_text())
    shape = (int(header["channels"]), int(header["height"]), int(header["width"]))
    data = np.fromfile(raw_path, dtype="<f4")
    if data.size != np.prod(shape):
        raise InvalidInputError(f"{raw_path}: {data.size} floats, header says {shape}")
    grid = data.reshape(shape).astype(np.float64)
    if not np.all(np.isfinite(grid)):
        raise InvalidInputError(f"{raw_path}: non-finite latent values")
    return grid
