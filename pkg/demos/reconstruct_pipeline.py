"""
End-to-end reconstruction
=========================

The whole pipeline through the command line: synthesize depth views of a
lidded box, reconstruct with the oracle predictor, evaluate against the
ground truth.  Everything lands in a temp directory printed at the end.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from artobj import (
    ArticulatedObject,
    CameraView,
    Joint,
    Obb,
    Part,
    ScoredMask,
    look_at,
    obb_mesh,
    save_bundle,
)
from artobj.fusion import save_camera, save_mask, write_pfm


def render(view, boxes):
    # same slab-method renderer as in fuse_views.py
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


eye3 = np.eye(3)
base = Obb(np.zeros(3), eye3, np.array([0.55, 0.4, 0.3]))
lid = Obb(np.array([0.0, 0.0, 0.38]), eye3, np.array([0.55, 0.4, 0.08]))
gt = ArticulatedObject(
    parts=(
        Part("base", base, obb_mesh(base)),
        Part("lid", lid, obb_mesh(lid)),
    ),
    joints=(
        Joint("revolute", 0, 1, axis=np.array([0.0, 1.0, 0.0]),
              pivot=np.array([-0.55, 0.0, 0.46]), limits=(0.0, np.pi / 2)),
    ),
    root=0,
)

root = Path(tempfile.mkdtemp(prefix="artobj-pipeline-"))
gt_dir = root / "gt" / "box"
gt_dir.mkdir(parents=True)
save_bundle(gt, gt_dir / "bundle.json", name="box", write_meshes=True)

# Four ring cameras, masks straight from the renderer's part ids.
views_dir = root / "views"
views_dir.mkdir()
boxes = [p.obb for p in gt.parts]
for vi, eye in enumerate([(2.4, 1.8, 1.5), (-2.2, 1.9, 1.4), (-2.3, -1.7, 1.6), (2.2, -1.8, 1.5)]):
    cam = CameraView(
        fx=120.0, fy=120.0, cx=80.0, cy=60.0, width=160, height=120,
        world_to_cam=look_at(eye, (0.0, 0.0, 0.1)),
    )
    depth, ids = render(cam, boxes)
    stem = views_dir / f"view{vi:02d}"
    save_camera(cam, f"{stem}.camera.json")
    write_pfm(f"{stem}.depth.pfm", depth)
    for mi in range(len(boxes)):
        save_mask(f"{stem}.mask{mi:02d}.png", ScoredMask(ids == mi, 0.9, 0.95))

pred_dir = root / "pred" / "box"
eval_dir = root / "eval"


def run(*args):
    cmd = [sys.executable, "-m", "artobj.cli", *args]
    print("$", " ".join(str(a) for a in args), flush=True)
    subprocess.run(cmd, check=True)


run("--seed", "0", "reconstruct", views_dir, pred_dir,
    "--predictor", "oracle", "--gt", gt_dir / "bundle.json", "--resolution", "48")
run("evaluate", root / "pred", root / "gt", eval_dir, "--samples", "2000")

print("--- predicted articulation ---")
print((pred_dir / "object.artcode").read_text(), end="")

report = json.loads((eval_dir / "report.json").read_text())
obj = report["objects"][0]
print("--- evaluation, boxes fitted from completed shells ---")
for key in ("n_pred_parts", "n_gt_parts", "type_accuracy", "rot_err_deg_mean", "whole_chamfer"):
    print(f"{key}: {obj[key]}")

# Swapping fitted boxes for matched ground-truth boxes isolates the
# articulation errors from box-fitting errors; the hinge comes out exact.
pred2 = root / "pred-gtbb" / "box"
eval2 = root / "eval-gtbb"
run("--seed", "0", "reconstruct", views_dir, pred2, "--predictor", "oracle",
    "--gt", gt_dir / "bundle.json", "--resolution", "48", "--use-gt-obb")
run("evaluate", root / "pred-gtbb", root / "gt", eval2, "--samples", "2000")
obj2 = json.loads((eval2 / "report.json").read_text())["objects"][0]
print("--- evaluation, ground-truth boxes ---")
for key in ("type_accuracy", "rot_err_deg_mean", "pos_err_mean"):
    print(f"{key}: {obj2[key]}")
print("stage timings are in", pred_dir / "report.json")
print("all artifacts under", root)
