"""Rasterise textured meshes with per-pixel Phong shading at varying camera distances.

Camera space: +z is the viewing direction, +x right, +y down (image rows).
A world point ``p`` maps to camera space as ``R @ (p - subject_center) + (0, 0, d)``,
so the subject centre always sits on the optical axis at depth ``d``.
Pixel centres are at integer coordinates; the principal point is the image
centre ``((S - 1) / 2, (S - 1) / 2)``. Focal lengths are in half-image units
(``f = 1`` spans the image half-width at unit depth), so a focal length of
``f`` is ``f * S / 2`` pixels.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import _backend
from .errors import DegenerateError, InvalidInputError

log = logging.getLogger(__name__)

DEFAULT_F0 = 2.9
INPUT_DISTANCES = (1.0, 1.3, 1.6, 1.9)
GT_DISTANCE = 10.0
NEAR_PLANE = 1e-6


@dataclass(frozen=True)
class Camera:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    distance: float = 1.0
    focal_f0: float = DEFAULT_F0
    image_size: int = 512
    subject_center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "subject_center",
                           np.asarray(self.subject_center, dtype=np.float64).reshape(3))
        if not self.distance > 0:
            raise InvalidInputError(f"camera distance must be positive, got {self.distance}")
        if self.image_size < 1:
            raise InvalidInputError(f"image_size must be >= 1, got {self.image_size}")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), rtol=0, atol=1e-9):
            raise InvalidInputError("rotation must be orthonormal")

    @property
    def focal(self):
        """Effective focal length; always recomputed from the distance."""
        return self.distance * self.focal_f0

    @property
    def focal_px(self):
        return self.focal * self.image_size / 2.0

    @property
    def principal_point(self):
        c = (self.image_size - 1) / 2.0
        return np.array([c, c])

    @property
    def position(self):
        """Camera centre in world coordinates."""
        return self.subject_center - self.distance * self.rotation[2]

    def at_distance(self, distance):
        return replace(self, distance=float(distance))

    def to_camera(self, points):
        p = np.asarray(points, dtype=np.float64)
        return (p - self.subject_center) @ self.rotation.T + np.array([0.0, 0.0, self.distance])


@dataclass(frozen=True)
class PhongLighting:
    """Single directional light.

    ``light_direction`` points from the surface toward the light, expressed in
    camera space; the default lights along the viewing axis.
    """

    light_direction: tuple = (0.0, 0.0, -1.0)
    ambient: float = 0.3
    diffuse: float = 0.6
    specular: float = 0.1
    shininess: float = 16.0

    def __post_init__(self):
        d = np.asarray(self.light_direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise InvalidInputError("light_direction must be unit length")
        for name in ("ambient", "diffuse", "specular"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        if self.shininess < 1.0:
            raise InvalidInputError("shininess must be >= 1")


@dataclass
class RenderedImage:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray | None = None  # camera-space z, inf for background

    @property
    def width(self):
        return self.rgb.shape[1]

    @property
    def height(self):
        return self.rgb.shape[0]

    def coverage(self):
        if self.depth is None:
            raise ValueError("no depth buffer")
        return np.isfinite(self.depth)

    def save(self, path):
        Image.fromarray(self.rgb, mode="RGB").save(path)


def project_points(camera, points):
    """Project world points; returns ``(pixels (N, 2), depth (N,), valid (N,))``.

    Points on or behind the camera plane are marked invalid and their pixel
    coordinates are NaN.
    """
    pc = camera.to_camera(np.atleast_2d(points))
    z = pc[:, 2]
    valid = z > NEAR_PLANE
    safe = np.where(valid, z, 1.0)
    xy = camera.focal_px * pc[:, :2] / safe[:, None] + camera.principal_point
    xy[~valid] = np.nan
    return xy, z, valid


def project(camera, point):
    """Sub-pixel ``(x, y)`` of a single world point and a validity flag.

    Raises :class:`DegenerateError` for the camera centre itself.
    """
    pc = camera.to_camera(point)
    if np.allclose(pc, 0.0, rtol=0, atol=1e-12):
        raise DegenerateError("point coincides with the camera centre")
    xy, _, valid = project_points(camera, point)
    return xy[0], bool(valid[0])


def _shade(camera, lighting, mesh, tri_id, weights, background):
    h = w = camera.image_size
    rgb = np.empty((h, w, 3), dtype=np.float64)
    rgb[:] = np.asarray(background, dtype=np.float64) / 255.0
    covered = tri_id >= 0
    if not covered.any():
        return rgb, covered
    corners = mesh.triangles[tri_id[covered]]  # (P, 3)
    bw = weights[covered]  # (P, 3)

    albedo = np.einsum("pk,pkc->pc", bw, mesh.colors[corners])
    normals_cam = mesh.vertex_normals() @ camera.rotation.T
    n = np.einsum("pk,pkc->pc", bw, normals_cam[corners])
    pos = np.einsum("pk,pkc->pc", bw, camera.to_camera(mesh.vertices)[corners])

    n_len = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, n_len, out=np.zeros_like(n), where=n_len > 0)
    view = -pos
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    # two-sided lighting: face the normal toward the viewer
    n = np.where((np.einsum("pc,pc->p", n, view) < 0)[:, None], -n, n)

    l_dir = np.asarray(lighting.light_direction, dtype=np.float64)
    n_dot_l = n @ l_dir
    refl = 2.0 * n_dot_l[:, None] * n - l_dir
    r_dot_v = np.einsum("pc,pc->p", refl, view)
    intensity = lighting.ambient + lighting.diffuse * np.maximum(0.0, n_dot_l)
    spec = lighting.specular * np.maximum(0.0, r_dot_v) ** lighting.shininess
    rgb[covered] = np.clip(albedo * intensity[:, None] + spec[:, None], 0.0, 1.0)
    return rgb, covered


def rasterize_phong(mesh, camera, lighting=None, background=(0, 0, 0)):
    """Z-buffered rasterisation with per-pixel Phong shading.

    Colours and normals use perspective-correct barycentric interpolation;
    back faces are drawn (two-sided lighting). Triangles with any vertex on or
    behind the camera plane are skipped.
    """
    lighting = lighting or PhongLighting()
    size = camera.image_size
    if mesh.n_triangles == 0:
        raise InvalidInputError("mesh has no triangles")
    xy, z, valid = project_points(camera, mesh.vertices)
    inv_z = np.where(valid, 1.0 / np.where(valid, z, 1.0), 0.0)
    xy = np.ascontiguousarray(np.nan_to_num(xy, nan=0.0))
    tri_id, weights, zbuf = _backend.kernels.rasterize(
        xy, np.ascontiguousarray(inv_z), valid.astype(np.uint8),
        np.ascontiguousarray(mesh.triangles, dtype=np.int64), size, size)
    rgb, covered = _shade(camera, lighting, mesh, tri_id, weights, background)
    depth = np.full((size, size), np.inf)
    depth[covered] = 1.0 / zbuf[covered]
    out = np.rint(rgb * 255.0).astype(np.uint8)
    return RenderedImage(out, depth)


@dataclass
class DistanceSeries:
    inputs: list  # [(distance, RenderedImage)]
    ground_truth: RenderedImage
    gt_distance: float


def render_distance_series(mesh, base_camera, lighting=None, input_distances=INPUT_DISTANCES,
                           gt_distance=GT_DISTANCE, background=(0, 0, 0)):
    """Render one mesh at several distances with ``f = d * f0`` and a fixed rotation."""
    distances = [float(d) for d in input_distances]
    if not distances:
        raise InvalidInputError("need at least one input distance")
    if any(d <= 0 for d in distances) or gt_distance <= 0:
        raise InvalidInputError("distances must be positive")
    inputs = [(d, rasterize_phong(mesh, base_camera.at_distance(d), lighting, background))
              for d in distances]
    gt = rasterize_phong(mesh, base_camera.at_distance(gt_distance), lighting, background)
    return DistanceSeries(inputs, gt, float(gt_distance))


def distance_tag(d):
    return f"d{float(d):g}"


def series_filenames(mesh_id, distances):
    return [f"{mesh_id}_{distance_tag(d)}.png" for d in distances], f"{mesh_id}_gt.png"


def write_series_manifest(path, pairs):
    """``pairs``: list of dicts with ``input``, ``ground_truth`` and ``distance`` keys."""
    Path(path).write_text(json.dumps({"pairs": pairs}, indent=2))
