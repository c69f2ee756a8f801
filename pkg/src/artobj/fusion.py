"""Pinhole cameras, depth backprojection, mask NMS, and label fusion.

Part segmentation arrives as per-view scored masks; this module lifts the
depth maps to a world point cloud, decides which masks across views show
the same part, and votes a part label onto every 3D point.

Conventions, fixed here so files are unambiguous: the camera looks down
+z, the image origin is top-left, u = fx*x/z + cx, pixel centers carry
integer coordinates, and depth maps store z-depth (not ray length) with 0
marking invalid pixels.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .errors import (
    BehindCamera,
    EmptyInput,
    ExternalFormatError,
    InvalidPrompt,
)
from .geom import PointCloud, RigidTransform, _freeze, as_vec3

MIN_CAMERA_DEPTH = 1e-9
DEFAULT_IOU_THRESHOLD = 0.7
# A reprojected point counts as visible in a view when its depth agrees
# with the view's depth map to within this tolerance (length units).
DEFAULT_DEPTH_TOL = 1e-3
# Masks from two views are the same part when, among points visible in
# both views, the smaller mask shares at least this fraction with the other.
MASK_GROUP_OVERLAP = 0.5
_POINTMAP_MAGIC = b"APM1"


@dataclass(frozen=True)
class ScoredMask:
    """Binary part mask with SAM-style confidence and stability scores."""

    bitmap: np.ndarray
    confidence: float
    stability: float

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 2:
            raise ValueError(f"mask bitmap must be 2d, got shape {bm.shape}")
        for name in ("confidence", "stability"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "bitmap", _freeze(bm))

    @property
    def score(self) -> float:
        return self.confidence * self.stability


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera with optional depth map and part masks.

    ``depth`` has shape (height, width), z-depth per pixel, 0 = invalid.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: RigidTransform
    depth: np.ndarray | None = None
    masks: tuple = ()

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.depth is not None:
            d = np.asarray(self.depth, dtype=np.float64)
            if d.shape != (self.height, self.width):
                raise ValueError(
                    f"depth shape {d.shape} != (height, width) = "
                    f"({self.height}, {self.width})"
                )
            if d.size and (not np.all(np.isfinite(d)) or d.min() < 0):
                raise ValueError("depth values must be finite and non-negative")
            object.__setattr__(self, "depth", _freeze(d))
        masks = tuple(self.masks)
        for m in masks:
            if m.bitmap.shape != (self.height, self.width):
                raise ValueError(
                    f"mask shape {m.bitmap.shape} != image size "
                    f"({self.height}, {self.width})"
                )
        object.__setattr__(self, "masks", masks)

    def with_data(self, depth=None, masks=None) -> "CameraView":
        """Copy with depth and/or masks attached."""
        out = self
        if depth is not None:
            out = replace(out, depth=depth)
        if masks is not None:
            out = replace(out, masks=tuple(masks))
        return out


@dataclass(frozen=True)
class PointMap:
    """Dense per-pixel 3D coordinates with a validity bitmap."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        val = np.asarray(self.valid, dtype=bool)
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise ValueError(f"point map must be (h, w, 3), got {pts.shape}")
        if val.shape != pts.shape[:2]:
            raise ValueError(f"validity shape {val.shape} != {pts.shape[:2]}")
        if val.any() and not np.all(np.isfinite(pts[val])):
            raise ValueError("valid point-map entries must be finite")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "valid", _freeze(val))


@dataclass(frozen=True)
class PointMapSet:
    """Globally aligned per-view point maps."""

    maps: tuple

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("point map set needs at least one view")
        object.__setattr__(self, "maps", maps)


# ------------------------------------------------------------- projection


def project(point, view: CameraView):
    """Project a world point; returns (u, v, depth, in_frame).

    Raises :class:`BehindCamera` when the point sits at or behind the
    image plane (camera-frame z <= 1e-9); ``in_frame`` flags whether the
    pixel lands inside [0, width) x [0, height).
    """
    p = view.world_to_cam.apply(as_vec3(point))
    z = float(p[2])
    if z <= MIN_CAMERA_DEPTH:
        raise BehindCamera(f"point has camera-frame depth {z:g}")
    u = view.fx * float(p[0]) / z + view.cx
    v = view.fy * float(p[1]) / z + view.cy
    in_frame = (0.0 <= u < view.width) and (0.0 <= v < view.height)
    return u, v, z, in_frame


def _project_many(points: np.ndarray, view: CameraView):
    """Vectorized projection: (u, v, z, in_frame) arrays; no behind check."""
    p = view.world_to_cam.apply(points)
    z = p[:, 2]
    safe = np.where(np.abs(z) > 0, z, 1.0)
    u = view.fx * p[:, 0] / safe + view.cx
    v = view.fy * p[:, 1] / safe + view.cy
    in_frame = (
        (z > MIN_CAMERA_DEPTH)
        & (u >= 0.0) & (u < view.width)
        & (v >= 0.0) & (v < view.height)
    )
    return u, v, z, in_frame


def backproject(view: CameraView) -> PointCloud:
    """Lift every valid-depth pixel to world coordinates."""
    pts, _pix = _backproject_with_pixels(view)
    return PointCloud(pts)


def _backproject_with_pixels(view: CameraView):
    if view.depth is None:
        raise EmptyInput("view has no depth map to backproject")
    vv, uu = np.nonzero(view.depth > 0)
    z = view.depth[vv, uu]
    x = (uu - view.cx) / view.fx * z
    y = (vv - view.cy) / view.fy * z
    cam = np.stack([x, y, z], axis=1)
    world = view.world_to_cam.inverse().apply(cam)
    return world, np.stack([uu, vv], axis=1)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """World-to-camera transform for a camera at ``eye`` looking at
    ``target`` (+z forward, +x right, +y down, consistent with the image
    origin at top-left)."""
    eye = as_vec3(eye)
    forward = as_vec3(target) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    upv = as_vec3(up)
    right = np.cross(forward, upv)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValueError("up direction is parallel to the view direction")
    right = right / rn
    down = np.cross(forward, right)
    cam_to_world = np.stack([right, down, forward], axis=1)
    # world_to_cam = inverse of (R, eye)
    return RigidTransform(cam_to_world.T, -(cam_to_world.T @ eye))


# -------------------------------------------------------------------- NMS


def mask_iou(a: ScoredMask, b: ScoredMask) -> float:
    inter = int(np.count_nonzero(a.bitmap & b.bitmap))
    union = int(np.count_nonzero(a.bitmap | b.bitmap))
    return inter / union if union else 0.0


def rank_and_nms(masks, iou_threshold: float = DEFAULT_IOU_THRESHOLD):
    """Sort by confidence*stability (descending, stable) and greedily keep
    masks overlapping every kept mask by IoU <= threshold."""
    ranked = sorted(enumerate(masks), key=lambda kv: (-kv[1].score, kv[0]))
    kept = []
    for _, m in ranked:
        if all(mask_iou(m, k) <= iou_threshold for k in kept):
            kept.append(m)
    return kept


# ----------------------------------------------------------- label fusion


def _mask_memberships(points: np.ndarray, view: CameraView, depth_tol: float):
    """Per-mask boolean membership of each point in this view.

    A point is visible when it projects in-frame with positive depth
    matching the view's depth map within depth_tol; it belongs to the
    highest-scored mask covering its pixel.
    """
    u, v, z, in_frame = _project_many(points, view)
    iu = np.clip(np.rint(u), 0, view.width - 1).astype(np.int64)
    iv = np.clip(np.rint(v), 0, view.height - 1).astype(np.int64)
    visible = in_frame.copy()
    if view.depth is not None:
        stored = view.depth[iv, iu]
        visible &= (stored > 0) & (np.abs(stored - z) <= depth_tol)
    member = np.zeros((len(view.masks), points.shape[0]), dtype=bool)
    taken = np.zeros(points.shape[0], dtype=bool)
    order = sorted(range(len(view.masks)), key=lambda i: (-view.masks[i].score, i))
    for mi in order:
        idx = np.nonzero(visible & ~taken)[0]
        hit = idx[view.masks[mi].bitmap[iv[idx], iu[idx]]]
        member[mi, hit] = True
        taken[hit] = True
    return member, visible


def _group_and_vote(points, memberships, visibles, confidences,
                    n_seeds: int, seed: int):
    """Shared fusion core: union masks across views by mutual-visibility
    overlap, then label each point by confidence-weighted vote.

    ``memberships[v]`` is an (n_masks_v, n_points) membership matrix,
    ``visibles[v]`` the per-point visibility in view v, ``confidences[v]``
    the per-mask vote weights.  Same-view masks never merge.
    """
    n_views = len(memberships)
    nodes = [(vi, mi) for vi in range(n_views) for mi in range(memberships[vi].shape[0])]
    node_index = {n: i for i, n in enumerate(nodes)}
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    if points.shape[0] > n_seeds:
        sub = np.random.default_rng(seed).choice(points.shape[0], size=n_seeds, replace=False)
    else:
        sub = np.arange(points.shape[0])
    for ai in range(n_views):
        for bi in range(ai + 1, n_views):
            mutual = visibles[ai][sub] & visibles[bi][sub]
            if not np.any(mutual):
                continue
            for mi in range(memberships[ai].shape[0]):
                a_pts = memberships[ai][mi][sub] & mutual
                na = int(np.count_nonzero(a_pts))
                if na == 0:
                    continue
                for mj in range(memberships[bi].shape[0]):
                    b_pts = memberships[bi][mj][sub] & mutual
                    nb = int(np.count_nonzero(b_pts))
                    if nb == 0:
                        continue
                    shared = int(np.count_nonzero(a_pts & b_pts))
                    if shared >= MASK_GROUP_OVERLAP * min(na, nb):
                        union(node_index[(ai, mi)], node_index[(bi, mj)])

    # Compact group ids in first-appearance order: stable across runs.
    group_of_node = {}
    next_group = 0
    for i in range(len(nodes)):
        root = find(i)
        if root not in group_of_node:
            group_of_node[root] = next_group
            next_group += 1
    group_ids = [group_of_node[find(i)] for i in range(len(nodes))]

    votes = np.zeros((points.shape[0], max(next_group, 1)))
    for vi in range(n_views):
        for mi in range(memberships[vi].shape[0]):
            g = group_ids[node_index[(vi, mi)]]
            votes[:, g] += np.where(memberships[vi][mi], confidences[vi][mi], 0.0)
    labels = np.where(votes.max(axis=1) > 0, votes.argmax(axis=1), -1).astype(np.int64)
    return PointCloud(points, labels)


def fuse_labels(views, n_seeds: int = 4096, seed: int = 0,
                depth_tol: float = DEFAULT_DEPTH_TOL) -> PointCloud:
    """Backproject all views and vote a part label onto every 3D point.

    Masks from different views are the same part when, restricted to
    points visible in both views, the smaller mask shares at least half
    its points with the other (computed on an ``n_seeds``-point subsample
    for large clouds, deterministic per ``seed``).  Each point then takes
    the part whose supporting masks carry the highest summed confidence
    across the views that see it; points no mask claims get label -1.
    """
    views = list(views)
    clouds = []
    for view in views:
        if view.depth is not None and np.any(view.depth > 0):
            pts, _ = _backproject_with_pixels(view)
            clouds.append(pts)
        else:
            clouds.append(np.zeros((0, 3)))
    points = np.concatenate(clouds) if clouds else np.zeros((0, 3))
    if points.shape[0] == 0:
        raise EmptyInput("no view has valid depth to fuse")

    memberships, visibles, confidences = [], [], []
    for view in views:
        member, visible = _mask_memberships(points, view, depth_tol)
        memberships.append(member)
        visibles.append(visible)
        confidences.append([m.confidence for m in view.masks])
    return _group_and_vote(points, memberships, visibles, confidences, n_seeds, seed)


def fuse_labels_pointmaps(maps: PointMapSet, masks_per_view,
                          dist_threshold: float, n_seeds: int = 4096,
                          seed: int = 0) -> PointCloud:
    """Pose-free label fusion from dense point maps.

    Without cameras there is no reprojection, so a point counts as
    visible in another view when that view has a valid point within
    ``dist_threshold``; mask membership comes from each point's own pixel.
    Grouping and voting then follow :func:`fuse_labels`.
    """
    pixel_masks = list(masks_per_view)
    if len(pixel_masks) != len(maps.maps):
        raise ValueError(
            f"got masks for {len(pixel_masks)} views but {len(maps.maps)} point maps"
        )
    clouds, pixels = [], []
    for pm in maps.maps:
        vv, uu = np.nonzero(pm.valid)
        clouds.append(pm.points[vv, uu])
        pixels.append((vv, uu))
    points = np.concatenate(clouds) if clouds else np.zeros((0, 3))
    if points.shape[0] == 0:
        raise EmptyInput("no point map has valid pixels to fuse")

    memberships, visibles, confidences = [], [], []
    for vi, pm in enumerate(maps.maps):
        masks = list(pixel_masks[vi])
        vv, uu = pixels[vi]
        # highest-scored mask claiming each of this view's own pixels
        own_mask = np.full(len(clouds[vi]), -1, dtype=np.int64)
        order = sorted(range(len(masks)), key=lambda i: (-masks[i].score, i))
        for mi in order:
            hit = masks[mi].bitmap[vv, uu] & (own_mask == -1)
            own_mask[hit] = mi
        member = np.zeros((len(masks), points.shape[0]), dtype=bool)
        if len(clouds[vi]):
            tree = cKDTree(clouds[vi])
            dist, idx = tree.query(points)
            visible = dist <= dist_threshold
            nearest_mask = own_mask[idx]
            for mi in range(len(masks)):
                member[mi] = visible & (nearest_mask == mi)
        else:
            visible = np.zeros(points.shape[0], dtype=bool)
        memberships.append(member)
        visibles.append(visible)
        confidences.append([m.confidence for m in masks])
    return _group_and_vote(points, memberships, visibles, confidences, n_seeds, seed)


# ------------------------------------------------------------ prompt match


def match_prompts_pointmap(maps: PointMapSet, prompts_2d, dist_threshold: float):
    """Carry 2D prompt pixels from view 0 into every other view.

    Each prompt pixel is lifted through view 0's point map, then matched
    in every other view to the valid pixel whose 3D point is nearest;
    prompts farther than ``dist_threshold`` from every valid point in a
    view are unmatched (None) there.  Returns one list per prompt with a
    (u, v) pair or None per view.
    """
    first = maps.maps[0]
    trees = []
    pixels = []
    for pm in maps.maps:
        vv, uu = np.nonzero(pm.valid)
        pix = np.stack([uu, vv], axis=1)
        pts = pm.points[vv, uu]
        trees.append(cKDTree(pts) if len(pts) else None)
        pixels.append(pix)
    out = []
    for u, v in prompts_2d:
        iu, iv = int(round(u)), int(round(v))
        h, w = first.valid.shape
        if not (0 <= iu < w and 0 <= iv < h) or not first.valid[iv, iu]:
            raise InvalidPrompt(f"prompt pixel ({u}, {v}) has no valid 3D point")
        p3 = first.points[iv, iu]
        row = [(iu, iv)]
        for view_idx in range(1, len(maps.maps)):
            tree = trees[view_idx]
            if tree is None:
                row.append(None)
                continue
            dist, idx = tree.query(p3)
            if dist > dist_threshold:
                row.append(None)
            else:
                pu, pv = pixels[view_idx][idx]
                row.append((int(pu), int(pv)))
        out.append(row)
    return out


# ---------------------------------------------------------------- file I/O


def save_camera(view: CameraView, path) -> None:
    doc = {
        "fx": view.fx, "fy": view.fy, "cx": view.cx, "cy": view.cy,
        "width": view.width, "height": view.height,
        "world_to_cam": [float(v) for v in view.world_to_cam.as_matrix().reshape(16)],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_camera(path) -> CameraView:
    """Camera intrinsics/extrinsics only; attach depth/masks via with_data."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ExternalFormatError(f"malformed camera JSON: {e}") from None
    try:
        mat = np.asarray(doc["world_to_cam"], dtype=np.float64).reshape(4, 4)
        return CameraView(
            fx=float(doc["fx"]), fy=float(doc["fy"]),
            cx=float(doc["cx"]), cy=float(doc["cy"]),
            width=int(doc["width"]), height=int(doc["height"]),
            world_to_cam=RigidTransform.from_matrix(mat),
        )
    except (KeyError, ValueError) as e:
        raise ExternalFormatError(f"bad camera file {path!r}: {e}") from None


def write_pfm(path, depth: np.ndarray) -> None:
    """Single-channel little-endian PFM; rows stored bottom-to-top."""
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError(f"PFM depth must be 2d, got shape {d.shape}")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{d.shape[1]} {d.shape[0]}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(d).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=3)
    if len(parts) < 4 or parts[0] not in (b"Pf", b"PF"):
        raise ExternalFormatError(f"not a PFM file: {path!r}")
    if parts[0] == b"PF":
        raise ExternalFormatError("color PFM not supported; expected single-channel Pf")
    try:
        w, h = int(parts[1]), int(parts[2])
        rest = parts[3]
        scale_str, payload = rest.split(b"\n", 1) if b"\n" in rest else (rest, b"")
        scale = float(scale_str)
    except ValueError:
        raise ExternalFormatError(f"malformed PFM header in {path!r}") from None
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h
    if len(payload) < 4 * n:
        raise ExternalFormatError("PFM payload truncated")
    vals = np.frombuffer(payload, dtype=dtype, count=n).reshape(h, w)
    return np.flipud(vals).astype(np.float64)


def save_mask(path, mask: ScoredMask) -> None:
    """8-bit PNG (nonzero = in-mask) plus a JSON sidecar with the scores."""
    img = Image.fromarray(np.where(mask.bitmap, 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")
    with open(_sidecar(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"confidence": mask.confidence, "stability": mask.stability},
                  fh, sort_keys=True)
        fh.write("\n")


def load_mask(path) -> ScoredMask:
    try:
        img = Image.open(path)
        bitmap = np.asarray(img.convert("L")) > 0
    except (OSError, ValueError) as e:
        raise ExternalFormatError(f"bad mask image {path!r}: {e}") from None
    sidecar = _sidecar(path)
    if not os.path.exists(sidecar):
        raise ExternalFormatError(f"mask {path!r} lacks its score sidecar {sidecar!r}")
    with open(sidecar, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
            return ScoredMask(bitmap, float(doc["confidence"]), float(doc["stability"]))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise ExternalFormatError(f"bad mask sidecar {sidecar!r}: {e}") from None


def _sidecar(path) -> str:
    base, _ext = os.path.splitext(str(path))
    return base + ".json"


def save_pointmap(path, pm: PointMap) -> None:
    """Little-endian binary: magic APM1, u32 w/h, w*h*3 f32 row-major
    points, then w*h u8 validity."""
    h, w = pm.valid.shape
    with open(path, "wb") as fh:
        fh.write(_POINTMAP_MAGIC)
        fh.write(struct.pack("<2I", w, h))
        pts = np.where(pm.valid[:, :, None], pm.points, 0.0)
        fh.write(pts.astype("<f4").tobytes())
        fh.write(pm.valid.astype(np.uint8).tobytes())


def load_pointmap(path) -> PointMap:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != _POINTMAP_MAGIC:
        raise ExternalFormatError(f"not a point-map file: bad magic in {path!r}")
    w, h = struct.unpack_from("<2I", data, 4)
    n = w * h
    expected = 12 + 12 * n + n
    if len(data) != expected:
        raise ExternalFormatError(
            f"point-map payload size mismatch: expected {expected} bytes, got {len(data)}"
        )
    pts = np.frombuffer(data, dtype="<f4", count=3 * n, offset=12)
    valid = np.frombuffer(data, dtype=np.uint8, count=n, offset=12 + 12 * n)
    return PointMap(
        np.asarray(pts, dtype=np.float64).reshape(h, w, 3),
        valid.astype(bool).reshape(h, w),
    )
