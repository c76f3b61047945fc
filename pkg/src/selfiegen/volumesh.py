"""Density/colour volumes to textured triangle meshes.

Arrays are indexed ``[ix, iy, iz]``. On disk (and for tie-breaking) nodes are
ordered x-fastest, i.e. linear index ``ix + nx * (iy + ny * iz)``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE
from .errors import InvalidInputError


@dataclass
class DensityVolume:
    """Regular grid of scalar density plus RGB colour in [0, 1]."""

    density: np.ndarray  # (nx, ny, nz)
    color: np.ndarray  # (nx, ny, nz, 3)
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)

    @classmethod
    def from_density(cls, density, color=None, origin=(0.0, 0.0, 0.0), spacing=(1.0, 1.0, 1.0)):
        density = np.asarray(density, dtype=np.float64)
        if color is None:
            color = np.zeros(density.shape + (3,))
        return cls(density, color, np.asarray(origin), np.asarray(spacing))

    @property
    def dims(self):
        return tuple(int(n) for n in self.density.shape)

    def validate(self):
        if self.density.ndim != 3:
            raise InvalidInputError(f"density must be 3-D, got shape {self.density.shape}")
        if min(self.dims) < 2:
            raise InvalidInputError(f"every axis needs at least 2 nodes, got dims {self.dims}")
        if self.color.shape != self.density.shape + (3,):
            raise InvalidInputError(
                f"color grid shape {self.color.shape} does not match density dims {self.dims}")
        if np.any(self.spacing <= 0):
            raise InvalidInputError(f"spacing must be strictly positive, got {self.spacing}")
        if not (np.all(np.isfinite(self.density)) and np.all(np.isfinite(self.color))):
            raise InvalidInputError("volume contains non-finite values")
        if self.color.size and (self.color.min() < 0.0 or self.color.max() > 1.0):
            raise InvalidInputError("color channels must lie in [0, 1]")

    def node_positions(self):
        """World positions of every node, shape (nx, ny, nz, 3)."""
        axes = [self.origin[a] + self.spacing[a] * np.arange(n) for a, n in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def bounds(self):
        lo = self.origin
        hi = self.origin + self.spacing * (np.array(self.dims) - 1)
        return lo, hi

    def center(self):
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)


@dataclass
class TexturedMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64
    colors: np.ndarray  # (V, 3) float64 in [0, 1]

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def validate(self):
        if len(self.colors) != len(self.vertices):
            raise InvalidInputError("colors and vertices differ in length")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise InvalidInputError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise InvalidInputError("triangle repeats a vertex index")

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        if not self.triangles.size:
            return np.empty((0, 2), dtype=np.int64)
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def face_normals(self, normalize=True):
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if normalize:
            norm = np.linalg.norm(n, axis=1, keepdims=True)
            n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
        return n

    def area(self):
        return 0.5 * float(np.linalg.norm(self.face_normals(normalize=False), axis=1).sum())

    def signed_volume(self):
        """Enclosed volume; positive when triangles wind counter-clockwise seen from outside."""
        v = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def vertex_normals(self):
        """Area-weighted average of incident face normals, unit length (zero for isolated vertices)."""
        fn = self.face_normals(normalize=False)  # length = 2 * area
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.triangles[:, k], fn)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        return np.divide(vn, norm, out=np.zeros_like(vn), where=norm > 0)


def _edge_lookup():
    axis = np.empty(12, dtype=np.int64)
    offset = np.empty((12, 3), dtype=np.int64)
    for e, (a, b) in enumerate(EDGE_CORNERS):
        ca, cb = np.array(CORNER_OFFSETS[a]), np.array(CORNER_OFFSETS[b])
        axis[e] = int(np.flatnonzero(ca != cb)[0])
        offset[e] = np.minimum(ca, cb)
    return axis, offset


_EDGE_AXIS, _EDGE_OFFSET = _edge_lookup()
_TRI_TABLE = np.ascontiguousarray(TRI_TABLE)


def marching_cubes(volume, iso_level):
    """Extract the ``density == iso_level`` surface as a triangle mesh.

    Nodes with ``density > iso_level`` are inside. Vertices sit on grid edges
    at the linearly interpolated crossing and are shared between neighbouring
    cells, so closed isosurfaces give watertight meshes. Triangles wind
    counter-clockwise when seen from outside (normals point toward lower
    density). Vertex colours are all zero; see :func:`assign_nearest_colors`.
    """
    volume.validate()
    iso = float(iso_level)
    if not np.isfinite(iso):
        raise InvalidInputError("iso_level must be finite")

    d = volume.density
    outside = d <= iso

    # one vertex per crossed grid edge, numbered axis by axis in C order
    edge_ids = []
    positions = []
    next_id = 0
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        d0, d1 = d[tuple(lo)], d[tuple(hi)]
        crossed = outside[tuple(lo)] != outside[tuple(hi)]
        ids = np.full(crossed.shape, -1, dtype=np.int64)
        idx = np.flatnonzero(crossed)
        ids.ravel()[idx] = np.arange(next_id, next_id + idx.size)
        next_id += idx.size
        edge_ids.append(ids)

        node = np.stack(np.unravel_index(idx, crossed.shape), axis=1).astype(np.float64)
        a, b = d0.ravel()[idx], d1.ravel()[idx]
        t = (iso - a) / (b - a)
        node[:, axis] += t
        positions.append(node)

    corners = np.zeros(tuple(n - 1 for n in volume.dims), dtype=np.uint8)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        nx, ny, nz = volume.dims
        corners |= (outside[ox:nx - 1 + ox, oy:ny - 1 + oy, oz:nz - 1 + oz].astype(np.uint8) << bit)

    tris = _backend.kernels.mc_triangles(corners, tuple(edge_ids), _TRI_TABLE, _EDGE_AXIS, _EDGE_OFFSET)

    grid = np.concatenate(positions) if positions else np.empty((0, 3))
    vertices = volume.origin + grid * volume.spacing
    return TexturedMesh(vertices, tris, np.zeros_like(vertices))


def nearest_node_indices(volume, points):
    """Per-axis index of the nearest grid node, clamped to the grid.

    Exact half-way points resolve to the lower index, which yields the node
    with the lowest linear index among all equidistant nodes.
    """
    u = (np.asarray(points, dtype=np.float64) - volume.origin) / volume.spacing
    idx = np.ceil(u - 0.5).astype(np.int64)
    return np.clip(idx, 0, np.array(volume.dims) - 1)


def assign_nearest_colors(mesh, volume):
    """Colour every vertex with the colour of its nearest grid node."""
    if mesh.n_vertices == 0:
        return mesh
    idx = nearest_node_indices(volume, mesh.vertices)
    colors = volume.color[idx[:, 0], idx[:, 1], idx[:, 2]]
    return TexturedMesh(mesh.vertices.copy(), mesh.triangles.copy(), colors)


# --- file formats --------------------------------------------------------

def save_volume(volume, raw_path):
    """Write ``<name>.raw`` (f32 LE density then RGB colour, x-fastest) and ``<name>.json``."""
    raw_path = Path(raw_path)
    density = volume.density.transpose(2, 1, 0).astype("<f4")
    color = volume.color.transpose(2, 1, 0, 3).astype("<f4")
    with open(raw_path, "wb") as f:
        f.write(density.tobytes())
        f.write(color.tobytes())
    header = {
        "dims": list(volume.dims),
        "origin": volume.origin.tolist(),
        "spacing": volume.spacing.tolist(),
    }
    raw_path.with_suffix(".json").write_text(json.dumps(header, indent=2))


def load_volume(raw_path):
    raw_path = Path(raw_path)
    header = json.loads(raw_path.with_suffix(".json").read_text())
    nx, ny, nz = (int(n) for n in header["dims"])
    data = np.fromfile(raw_path, dtype="<f4")
    n = nx * ny * nz
    if data.size != 4 * n:
        raise InvalidInputError(
            f"{raw_path}: expected {4 * n} floats for dims {(nx, ny, nz)}, found {data.size}")
    density = data[:n].reshape(nz, ny, nx).transpose(2, 1, 0)
    color = data[n:].reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    volume = DensityVolume(density, color, header.get("origin", [0, 0, 0]),
                           header.get("spacing", [1, 1, 1]))
    volume.validate()
    return volume


def write_ply(mesh, path):
    """ASCII PLY with per-vertex uchar RGB."""
    rgb = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {mesh.n_triangles}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(mesh.vertices, rgb):
        lines.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path):
    """Read back an ASCII PLY written by :func:`write_ply`."""
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise InvalidInputError(f"{path}: not a PLY file")
        n_vert = n_face = 0
        for line in f:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                n_vert = int(parts[2])
            elif parts[:2] == ["element", "face"]:
                n_face = int(parts[2])
            elif parts and parts[0] == "end_header":
                break
        verts = np.loadtxt(f, max_rows=n_vert, ndmin=2) if n_vert else np.empty((0, 6))
        faces = np.loadtxt(f, max_rows=n_face, dtype=np.int64, ndmin=2) if n_face else np.empty((0, 4), np.int64)
    return TexturedMesh(verts[:, :3], faces[:, 1:4], verts[:, 3:6] / 255.0)
