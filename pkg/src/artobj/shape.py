"""Occupancy grids, inside/outside labeling, and surface extraction.

A part shape lives on a regular grid inside a normalized frame: grid
coordinates [0,1]^3 map to world space through a rotation, a per-axis
scale, and a translation, with cell centers at (i + 0.5) / n.  The frame
comes from the partial point cloud's OBB, inflated by a padding factor so
completed geometry has room to grow past what was observed.

Labels are generated from watertight meshes with generalized winding
numbers; meshes come back out at iso level 0.5 through marching cubes.
The completion step itself is a pluggable callable so an external
occupancy model can replace the built-in voxelize-and-dilate baseline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import (
    EmptyInput,
    ExternalFormatError,
    NoSurface,
    NotWatertight,
)
from .geom import (
    Obb,
    PointCloud,
    TriMesh,
    _check_rotation,
    _freeze,
    fit_obb,
)

MIN_RESOLUTION = 8
DEFAULT_RESOLUTION = 96
DEFAULT_PADDING = 1.2
COMPLETION_CLOUD_SIZE = 2048
# Winding numbers this close to the inside/outside threshold are rechecked
# with ray-parity votes; covers near-surface and near-degenerate cases.
WINDING_BAND = 0.1
_GRID_MAGIC = b"AOG1"


def _as_resolution(resolution) -> tuple:
    if np.isscalar(resolution):
        resolution = (int(resolution),) * 3
    res = tuple(int(r) for r in resolution)
    if len(res) != 3:
        raise ValueError(f"resolution needs 3 axes, got {len(res)}")
    if min(res) < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION} per axis, got {res}")
    return res


@dataclass(frozen=True)
class GridFrame:
    """Maps grid coordinates [0,1]^3 to world space.

    world = rotation @ (g * scale) + translation.  ``scale`` is the world
    edge length of the grid cube along each box axis.
    """

    rotation: np.ndarray
    scale: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _check_rotation(np.asarray(self.rotation, dtype=np.float64))
        scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.any(scale <= 0):
            raise ValueError(f"frame scale must be positive, got {scale}")
        object.__setattr__(self, "rotation", _freeze(rot))
        object.__setattr__(self, "scale", _freeze(scale))
        object.__setattr__(self, "translation", _freeze(trans))

    def to_world(self, grid_points: np.ndarray) -> np.ndarray:
        g = np.asarray(grid_points, dtype=np.float64)
        return (g * self.scale) @ self.rotation.T + self.translation

    def to_grid(self, world_points: np.ndarray) -> np.ndarray:
        p = np.asarray(world_points, dtype=np.float64)
        return ((p - self.translation) @ self.rotation) / self.scale

    def linear(self) -> np.ndarray:
        """The combined linear map rotation @ diag(scale)."""
        return self.rotation * self.scale


@dataclass(frozen=True)
class OccupancyGrid:
    """Scalar occupancy field on a regular grid in a normalized frame.

    ``values[i, j, k]`` is the occupancy at the cell center with grid
    coordinates ((i+0.5)/nx, (j+0.5)/ny, (k+0.5)/nz); all values lie in
    [0, 1] and every axis has at least 8 cells.
    """

    values: np.ndarray
    frame: GridFrame

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError(f"values must be a 3d array, got shape {vals.shape}")
        _as_resolution(vals.shape)
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("occupancy values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def resolution(self) -> tuple:
        return self.values.shape

    def cell_center_grid(self) -> np.ndarray:
        """(nx*ny*nz, 3) grid coordinates of all cell centers.

        Row order matches ``values.reshape(-1)`` (C order, z fastest); only
        the on-disk format reorders to x fastest.
        """
        nx, ny, nz = self.resolution
        ii, jj, kk = np.meshgrid(
            (np.arange(nx) + 0.5) / nx,
            (np.arange(ny) + 0.5) / ny,
            (np.arange(nz) + 0.5) / nz,
            indexing="ij",
        )
        return np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)

    def cell_centers_world(self) -> np.ndarray:
        return self.frame.to_world(self.cell_center_grid())

    def value_at(self, world_points: np.ndarray) -> np.ndarray:
        """Occupancy at the cells containing the points; 0 outside the grid."""
        g = self.frame.to_grid(np.asarray(world_points, dtype=np.float64).reshape(-1, 3))
        res = np.asarray(self.resolution)
        idx = np.floor(g * res).astype(np.int64)
        inside = np.all((g >= 0.0) & (g < 1.0), axis=1)
        idx = np.clip(idx, 0, res - 1)
        out = np.zeros(g.shape[0])
        if np.any(inside):
            sel = idx[inside]
            out[inside] = self.values[sel[:, 0], sel[:, 1], sel[:, 2]]
        return out


# ------------------------------------------------------------ grid file I/O
# Little-endian binary: magic AOG1, 3xu32 resolution, 12xf64 frame (row-major
# rotation*scale linear map, then translation), then nx*ny*nz f32 values with
# x fastest.


def save_grid(grid: OccupancyGrid, path) -> None:
    nx, ny, nz = grid.resolution
    lin = grid.frame.linear()
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(np.concatenate([lin.reshape(9), grid.frame.translation]).astype("<f8").tobytes())
        fh.write(np.asfortranarray(grid.values.astype("<f4")).tobytes(order="F"))


def load_grid(path) -> OccupancyGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _GRID_MAGIC:
        raise ExternalFormatError(f"not an occupancy grid file: bad magic in {path!r}")
    if len(data) < 4 + 12 + 96:
        raise ExternalFormatError("occupancy grid file truncated before header end")
    nx, ny, nz = struct.unpack_from("<3I", data, 4)
    try:
        _as_resolution((nx, ny, nz))
    except ValueError as e:
        raise ExternalFormatError(str(e)) from None
    frame_vals = np.frombuffer(data, dtype="<f8", count=12, offset=16)
    lin = frame_vals[:9].reshape(3, 3)
    translation = frame_vals[9:]
    scale = np.linalg.norm(lin, axis=0)
    if np.any(scale <= 0) or not np.all(np.isfinite(lin)):
        raise ExternalFormatError("occupancy grid frame is singular or non-finite")
    rotation = lin / scale
    n = nx * ny * nz
    offset = 16 + 96
    if len(data) != offset + 4 * n:
        raise ExternalFormatError(
            f"occupancy grid payload size mismatch: expected {n} f32 values"
        )
    vals = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
    values = np.asarray(vals, dtype=np.float64).reshape((nx, ny, nz), order="F")
    try:
        return OccupancyGrid(values, GridFrame(rotation, scale, translation))
    except ValueError as e:
        raise ExternalFormatError(str(e)) from None


# -------------------------------------------------------- inside / outside


def winding_numbers(points: np.ndarray, mesh: TriMesh, chunk: int | None = None) -> np.ndarray:
    """Generalized winding number of each point with respect to the mesh.

    Sum of signed solid angles over triangles divided by 4 pi: 1 inside a
    watertight surface, 0 outside, fractional near holes or on the surface.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]  # (F, 3, 3)
    n_faces = max(tri.shape[0], 1)
    if chunk is None:
        chunk = max(1, 4_000_000 // n_faces)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        q = pts[start : start + chunk]  # (Q, 3)
        a = tri[None, :, 0, :] - q[:, None, :]  # (Q, F, 3)
        b = tri[None, :, 1, :] - q[:, None, :]
        c = tri[None, :, 2, :] - q[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("qfi,qfi->qf", a, np.cross(b, c))
        denom = (
            la * lb * lc
            + np.einsum("qfi,qfi->qf", a, b) * lc
            + np.einsum("qfi,qfi->qf", b, c) * la
            + np.einsum("qfi,qfi->qf", c, a) * lb
        )
        omega = 2.0 * np.arctan2(det, denom)
        out[start : start + chunk] = omega.sum(axis=1)
    return out / (4.0 * np.pi)


_RAY_DIRS = np.eye(3)


def _ray_parity_inside(point: np.ndarray, tri: np.ndarray) -> bool:
    """Majority vote of x/y/z axis ray-parity tests from the point."""
    votes = 0
    edge1 = tri[:, 1] - tri[:, 0]
    edge2 = tri[:, 2] - tri[:, 0]
    for d in _RAY_DIRS:
        h = np.cross(d, edge2)
        det = np.einsum("fi,fi->f", edge1, h)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = point - tri[:, 0]
        u = np.einsum("fi,fi->f", s, h) * inv
        q = np.cross(s, edge1)
        v = np.einsum("i,fi->f", d, q) * inv
        t = np.einsum("fi,fi->f", edge2, q) * inv
        hits = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        votes += int(np.count_nonzero(hits) % 2 == 1)
    return votes >= 2


def occupancy_from_mesh(mesh: TriMesh, frame: GridFrame,
                        resolution=DEFAULT_RESOLUTION) -> OccupancyGrid:
    """Binary occupancy of a watertight mesh sampled at grid cell centers.

    Inside/outside comes from the generalized winding number at threshold
    0.5; cells whose winding lands within 0.1 of the threshold are settled
    by a majority vote of three axis-parallel ray-parity tests.  The result
    depends only on the triangle set, not on vertex array order.
    """
    open_edges = mesh.open_edge_count()
    if open_edges:
        raise NotWatertight(
            f"occupancy labels need a watertight mesh ({open_edges} open edges)",
            open_edge_count=open_edges,
        )
    resolution = _as_resolution(resolution)
    grid_shape = resolution
    nx, ny, nz = grid_shape
    centers_grid = np.stack(
        np.meshgrid(
            (np.arange(nx) + 0.5) / nx,
            (np.arange(ny) + 0.5) / ny,
            (np.arange(nz) + 0.5) / nz,
            indexing="ij",
        ),
        axis=-1,
    ).reshape(-1, 3)
    centers = frame.to_world(centers_grid)
    w = winding_numbers(centers, mesh)
    occ = w > 0.5
    band = np.abs(w - 0.5) < WINDING_BAND
    if np.any(band):
        tri = mesh.vertices[mesh.faces]
        for i in np.flatnonzero(band):
            occ[i] = _ray_parity_inside(centers[i], tri)
    values = occ.astype(np.float64).reshape(grid_shape)
    return OccupancyGrid(values, frame)


# ------------------------------------------------------ frame normalization


def normalize_frame(partial_pc: PointCloud, padding: float = DEFAULT_PADDING) -> GridFrame:
    """Grid frame from the partial cloud's OBB, half-lengths inflated by
    ``padding`` so the grid covers unobserved geometry."""
    obb = fit_obb(partial_pc)
    scale = 2.0 * padding * obb.half_lengths
    translation = obb.center - obb.rotation @ (scale / 2.0)
    return GridFrame(obb.rotation, scale, translation)


def frame_from_obb(obb: Obb, padding: float = DEFAULT_PADDING) -> GridFrame:
    """Same inflation rule, for a box fitted elsewhere."""
    scale = 2.0 * padding * obb.half_lengths
    translation = obb.center - obb.rotation @ (scale / 2.0)
    return GridFrame(obb.rotation, scale, translation)


# -------------------------------------------------------- training queries


def sample_training_queries(grid: OccupancyGrid, n: int,
                            occupied_fraction: float = 0.25,
                            surface_jitter: float = 0.02,
                            seed: int = 0):
    """Sample n (world point, label) query pairs for occupancy training.

    Exactly floor(occupied_fraction * n) queries originate at occupied cell
    centers, shifted by Gaussian noise with sigma = surface_jitter in grid
    units so they land in the band around the surface; the rest sit at free
    cell centers.  Labels are re-read from the grid at the final positions
    (0 outside).  Returns (points (n,3), labels (n,)); occupied-sourced
    queries come first.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    flat = grid.values.reshape(-1)
    occupied = np.flatnonzero(flat >= 0.5)
    free = np.flatnonzero(flat < 0.5)
    n_occ = int(np.floor(occupied_fraction * n))
    n_free = n - n_occ
    if n_occ > 0 and occupied.size == 0:
        raise EmptyInput("grid has no occupied cells to sample from")
    if n_free > 0 and free.size == 0:
        raise EmptyInput("grid has no free cells to sample from")
    rng = np.random.default_rng(seed)
    res = np.asarray(grid.resolution)

    def centers_of(flat_idx):
        idx = np.stack(np.unravel_index(flat_idx, grid.resolution), axis=1)
        return (idx + 0.5) / res

    parts = []
    if n_occ > 0:
        g = centers_of(rng.choice(occupied, size=n_occ, replace=True))
        g = g + rng.normal(0.0, surface_jitter, size=g.shape)
        parts.append(g)
    if n_free > 0:
        parts.append(centers_of(rng.choice(free, size=n_free, replace=True)))
    g_all = np.concatenate(parts) if parts else np.zeros((0, 3))
    points = grid.frame.to_world(g_all)
    labels = grid.value_at(points)
    return points, labels


# --------------------------------------------------------- surface extract


def marching_cubes(grid: OccupancyGrid, iso: float = 0.5) -> TriMesh:
    """Extract the iso-surface as a world-frame mesh.

    Cell values are treated as samples at cell centers; extracted vertices
    are mapped through (index + 0.5) / resolution and then the grid frame.
    Faces are oriented outward (positive signed volume for closed
    surfaces).  Raises :class:`NoSurface` when the field never crosses the
    iso level.
    """
    vals = grid.values
    if float(vals.max()) <= iso or float(vals.min()) >= iso:
        raise NoSurface(f"field in [{vals.min():g}, {vals.max():g}] never crosses iso={iso:g}")
    verts, faces, _normals, _vals = measure.marching_cubes(vals, level=iso)
    res = np.asarray(grid.resolution, dtype=np.float64)
    world = grid.frame.to_world((verts + 0.5) / res)
    mesh = TriMesh(world, faces.astype(np.int64))
    if mesh.signed_volume() < 0:
        mesh = mesh.flipped()
    return mesh


# ------------------------------------------------------------- completion


@dataclass(frozen=True)
class CompletionRequest:
    """A completion query: partial points, their OBB, and the output grid."""

    points: PointCloud
    partial_obb: Obb
    frame: GridFrame
    resolution: tuple

    def __post_init__(self):
        object.__setattr__(self, "resolution", _as_resolution(self.resolution))
        if self.points.points.shape[0] != COMPLETION_CLOUD_SIZE:
            raise ValueError(
                f"completion cloud must hold {COMPLETION_CLOUD_SIZE} points, "
                f"got {self.points.points.shape[0]}; build requests with "
                "make_completion_request"
            )


def make_completion_request(cloud: PointCloud, resolution=DEFAULT_RESOLUTION,
                            padding: float = DEFAULT_PADDING,
                            seed: int = 0) -> CompletionRequest:
    """Resample the cloud to exactly 2048 points and derive the grid frame.

    Clouds larger than 2048 are subsampled without replacement; smaller
    ones are padded by resampling with replacement.  The frame comes from
    the partial OBB of the *original* cloud, inflated by ``padding``.
    """
    pts = cloud.points
    if pts.shape[0] == 0:
        raise EmptyInput("cannot build a completion request from an empty cloud")
    obb = fit_obb(cloud)
    rng = np.random.default_rng(seed)
    n = pts.shape[0]
    if n >= COMPLETION_CLOUD_SIZE:
        sel = rng.choice(n, size=COMPLETION_CLOUD_SIZE, replace=False)
    else:
        sel = np.concatenate(
            [np.arange(n), rng.choice(n, size=COMPLETION_CLOUD_SIZE - n, replace=True)]
        )
    resampled = PointCloud(pts[sel])
    return CompletionRequest(
        points=resampled,
        partial_obb=obb,
        frame=frame_from_obb(obb, padding),
        resolution=_as_resolution(resolution),
    )


def identity_completer(request: CompletionRequest, dilation: int = 2) -> OccupancyGrid:
    """Voxelize the request points and dilate by ``dilation`` cells.

    The baseline completer: no learned model, just the observed surface
    thickened into a shell so marching cubes has a closed band to extract.
    """
    res = np.asarray(request.resolution)
    g = request.frame.to_grid(request.points.points)
    idx = np.floor(g * res).astype(np.int64)
    keep = np.all((idx >= 0) & (idx < res), axis=1)
    occ = np.zeros(request.resolution, dtype=bool)
    sel = idx[keep]
    occ[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    if dilation > 0:
        structure = ndimage.generate_binary_structure(3, 1)
        occ = ndimage.binary_dilation(occ, structure=structure, iterations=dilation)
    return OccupancyGrid(occ.astype(np.float64), request.frame)


def external_completer(path):
    """Completer that replays a grid file written by an outside model.

    The stored grid must match the request's resolution and frame; a
    mismatch means the file answers a different query and raises
    :class:`ExternalFormatError`.
    """

    def run(request: CompletionRequest) -> OccupancyGrid:
        grid = load_grid(path)
        if grid.resolution != tuple(request.resolution):
            raise ExternalFormatError(
                f"external grid resolution {grid.resolution} != requested "
                f"{tuple(request.resolution)}"
            )
        same = (
            np.allclose(grid.frame.rotation, request.frame.rotation, atol=1e-9)
            and np.allclose(grid.frame.scale, request.frame.scale, atol=1e-9)
            and np.allclose(grid.frame.translation, request.frame.translation, atol=1e-9)
        )
        if not same:
            raise ExternalFormatError("external grid frame differs from the request frame")
        return grid

    return run


def complete(request: CompletionRequest, completer="identity") -> OccupancyGrid:
    """Run a completer: "identity", "external:PATH", or any callable."""
    if completer == "identity":
        completer = identity_completer
    elif isinstance(completer, str) and completer.startswith("external:"):
        completer = external_completer(completer[len("external:"):])
    elif isinstance(completer, str):
        raise ValueError(f"unknown completer {completer!r}")
    grid = completer(request)
    if not isinstance(grid, OccupancyGrid):
        raise ExternalFormatError("completer did not return an OccupancyGrid")
    return grid
