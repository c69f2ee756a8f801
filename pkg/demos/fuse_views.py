"""
Multi-view mask fusion
======================

Three synthetic depth cameras look at a two-box scene.  Each view carries
per-part masks under its own numbering; fusion backprojects every pixel
and votes a consistent part label onto the merged cloud.
"""

import numpy as np

from artobj import CameraView, Obb, ScoredMask, fuse_labels, look_at, project


def render(view, boxes):
    # slab-method ray/box intersection through every pixel center; ray
    # direction is scaled to unit camera z so the hit parameter is depth
    h, w = view.height, view.width
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack(
        [(uu - view.cx) / view.fx, (vv - view.cy) / view.fy, np.ones_like(uu, float)],
        axis=-1,
    ).reshape(-1, 3)
    cam_to_world = view.world_to_cam.inverse()
    origin = cam_to_world.translation
    dirs = dirs_cam @ cam_to_world.rotation.T
    depth = np.full(uu.size, np.inf)
    ids = np.full(uu.size, -1, dtype=np.int64)
    for bi, obb in enumerate(boxes):
        o = obb.rotation.T @ (origin - obb.center)
        d = dirs @ obb.rotation
        with np.errstate(divide="ignore"):
            t1 = (-obb.half_lengths - o) / d
            t2 = (obb.half_lengths - o) / d
        lo = np.minimum(t1, t2).max(axis=1)
        hi = np.maximum(t1, t2).min(axis=1)
        hit = (hi >= lo) & (lo > 1e-9) & (lo < depth)
        depth[hit] = lo[hit]
        ids[hit] = bi
    depth[np.isinf(depth)] = 0.0
    return depth.reshape(h, w), ids.reshape(h, w)


boxes = [
    Obb(np.zeros(3), np.eye(3), np.array([0.6, 0.45, 0.4])),
    Obb(np.array([0.0, 0.0, 0.55]), np.eye(3), np.array([0.55, 0.4, 0.15])),
]

views = []
gt_ids = []
for vi, eye in enumerate([(2.6, 1.8, 1.6), (-2.4, 2.0, 1.4), (0.3, -2.8, 1.8)]):
    cam = CameraView(
        fx=100.0, fy=100.0, cx=64.0, cy=48.0, width=128, height=96,
        world_to_cam=look_at(eye, (0.0, 0.0, 0.2)),
    )
    depth, ids = render(cam, boxes)
    # each view numbers its masks differently, like a real detector would
    order = [0, 1] if vi % 2 == 0 else [1, 0]
    masks = [ScoredMask(ids == bi, 0.9, 0.95) for bi in order]
    views.append(cam.with_data(depth=depth, masks=masks))
    gt_ids.append(ids)
    print(f"view {vi}: {int((depth > 0).sum())} px hit, eye {eye}")

fused = fuse_labels(views, seed=0)
print("fused cloud:", fused.points.shape[0], "points,",
      len(set(fused.labels[fused.labels >= 0])), "labels survive")

# Labels should agree with the renderer's part ids across all views.
offset = 0
agree = total = 0
for view, ids in zip(views, gt_ids):
    n = int((view.depth > 0).sum())
    got = fused.labels[offset:offset + n]
    want = ids[ids >= 0]
    # map each fused label to the gt id it covers most
    for lab in set(got):
        sel = got == lab
        best = np.bincount(want[sel]).argmax()
        agree += int((want[sel] == best).sum())
    total += n
    offset += n
print("label consistency:", round(agree / total, 4))

# Reprojection closes: every backprojected point lands on its own pixel.
view = views[0]
pix = np.argwhere(view.depth > 0)
worst = 0.0
for v, u in pix[:: max(1, len(pix) // 300)]:
    z = view.depth[v, u]
    cam_pt = np.array([(u - view.cx) / view.fx * z, (v - view.cy) / view.fy * z, z])
    world = view.world_to_cam.inverse().apply(cam_pt)
    uu, vv, _, _ = project(world, view)
    worst = max(worst, abs(uu - u), abs(vv - v))
print("round-trip pixel error:", worst)
