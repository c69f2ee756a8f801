"""Pipeline command line: subcommands, key=value config, the external
predictor client, and exporters.

Subcommands: ingest, gen-dataset, reconstruct, evaluate, export, fit-obb,
quantize, complete.  Exit codes are a stable contract: 0 success, 1 input
error, 2 pipeline stage error, 3 predictor error.

A views directory holds, per view, ``<stem>.camera.json``,
``<stem>.depth.pfm`` and ``<stem>.mask<k>.png`` (+ score sidecars); the
pose-free variant replaces camera+depth with ``<stem>.pointmap.bin``.
All randomness fans out from one ``--seed`` via per-stage hashing, so
every command is byte-deterministic for fixed inputs (timings inside
``report.json`` are the single exception).
"""

from __future__ import annotations

import argparse
import base64
import glob
import json
import os
import re
import sys
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .artcode import (
    JointLiteral,
    emit_document,
    emit_joints,
    emit_prompt,
    execute,
    export_mjcf,
    parse_artcode,
)
from .articulation import (
    ArticulatedObject,
    Joint,
    Part,
    dequantize_joint,
    posed,
    quantize_joint,
)
from .errors import (
    ArtObjError,
    EmptyInput,
    ExternalFormatError,
    InvalidPrompt,
    MalformedResponse,
    MissingMesh,
    ParseError,
    PredictorUnavailable,
    StateLengthMismatch,
    UnresolvedLink,
    UnsupportedJoint,
)
from .evalharness import (
    UNMATCHED_PENALTY,
    EvalReport,
    bucket_for,
    evaluate_object,
    match_parts,
    report_tables,
)
from .fusion import (
    PointMapSet,
    fuse_labels,
    fuse_labels_pointmaps,
    load_camera,
    load_mask,
    load_pointmap,
    rank_and_nms,
    read_pfm,
)
from .geom import PointCloud, fit_obb, merge_meshes, obb_mesh
from .ingest import (
    ingest_urdf,
    load_bundle,
    make_dataset,
    pose_object,
    save_bundle,
    save_dataset_jsonl,
)
from .meshio import read_obj, read_ply, write_obj
from .seeding import derive_rng, derive_seed
from .shape import complete, make_completion_request, marching_cubes, save_grid

RETRY_BACKOFF_BASE = 0.5
RETRY_BACKOFF_FACTOR = 2.0
# Fused labels supported by fewer points than this are treated as noise.
MIN_PART_POINTS = 16


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class PipelineConfig:
    """All tunable pipeline parameters with their defaults.

    Sourced from three layers with increasing precedence: these defaults,
    then a ``key = value`` config file, then explicit CLI flags.
    """

    seed: int = 0
    jobs: int = 1
    samples: int = 10000
    poses: int = 5
    rotations: int = 5
    resolution: int = 96
    padding: float = 1.2
    completer: str = "identity"
    predictor: str = "oracle"
    iou_threshold: float = 0.7
    dist_threshold: float = 0.05
    depth_tol: float = 1e-3
    n_seeds: int = 4096
    timeout: float = 10.0
    retries: int = 2

    def validate(self) -> "PipelineConfig":
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        for name in ("samples", "poses", "rotations", "n_seeds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")
        if self.padding < 1.0:
            raise ValueError(f"padding must be >= 1, got {self.padding}")
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must lie in [0, 1], got {self.iou_threshold}")
        for name in ("dist_threshold", "depth_tol", "timeout"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")
        if self.predictor != "oracle" and not self.predictor.startswith(("file:", "http:", "https:")):
            raise ValueError(
                f"predictor must be oracle, file:PATH or http(s)://URL, got {self.predictor!r}"
            )
        if self.completer != "identity" and not self.completer.startswith("external:"):
            raise ValueError(
                f"completer must be identity or external:PATH, got {self.completer!r}"
            )
        return self

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Parse a flat ``key = value`` file; '#' starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                value = value.strip().strip("\"'")
                if not sep or not key:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
                if key not in types:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                kind = types[key]
                try:
                    values[key] = int(value) if kind == "int" else (
                        float(value) if kind == "float" else value
                    )
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: bad {kind} value for {key}: {value!r}"
                    ) from None
        return cls(**values)

    def with_overrides(self, **kw) -> "PipelineConfig":
        """Apply non-None overrides (CLI flags beat file values)."""
        present = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **present) if present else self


# --------------------------------------------------------------- predictor


class PredictorClient:
    """Prompt-to-completion client for joint prediction.

    Endpoint specs: ``oracle`` (quantizes ground-truth joints against the
    prompt's boxes; needs the GT object), ``file:PATH`` (replays a stored
    completion), ``http(s)://URL`` (POST ``{"prompt": ...}``, expect
    ``{"completion": ...}``, retried with exponential backoff).
    """

    def __init__(self, spec: str, timeout: float = 10.0, retries: int = 2,
                 gt: ArticulatedObject | None = None,
                 max_inflight: int | None = None,
                 backoff_base: float = RETRY_BACKOFF_BASE):
        if timeout <= 0:
            raise ValueError(f"timeout must be positive, got {timeout}")
        if retries < 0:
            raise ValueError(f"retries must be >= 0, got {retries}")
        self.spec = spec
        self.timeout = timeout
        self.retries = retries
        self.gt = gt
        self.backoff_base = backoff_base
        self._gate = threading.Semaphore(max_inflight) if max_inflight else None
        if spec == "oracle":
            self._call = self._predict_oracle
        elif spec.startswith("file:"):
            self._call = self._predict_file
        elif spec.startswith(("http://", "https://")):
            self._call = self._predict_http
        else:
            raise ValueError(
                f"predictor must be oracle, file:PATH or http(s)://URL, got {spec!r}"
            )

    def predict(self, prompt: str) -> str:
        if not prompt.strip():
            raise EmptyInput("predictor prompt is empty")
        return self._call(prompt)

    def _predict_file(self, prompt: str) -> str:
        return open(self.spec[len("file:"):], "r", encoding="utf-8").read()

    def _predict_http(self, prompt: str) -> str:
        payload = json.dumps({"prompt": prompt}).encode("utf-8")
        trace = []
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_base * RETRY_BACKOFF_FACTOR ** (attempt - 1))
            try:
                req = urllib.request.Request(
                    self.spec, data=payload,
                    headers={"Content-Type": "application/json"}, method="POST",
                )
                if self._gate:
                    self._gate.acquire()
                try:
                    with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                        body = resp.read()
                finally:
                    if self._gate:
                        self._gate.release()
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as e:
                trace.append(f"attempt {attempt + 1}: {e}")
                continue
            try:
                doc = json.loads(body)
            except json.JSONDecodeError as e:
                raise MalformedResponse(f"predictor returned non-JSON body: {e}") from None
            if not isinstance(doc, dict) or not isinstance(doc.get("completion"), str):
                raise MalformedResponse(
                    "predictor response must be an object with a string 'completion'"
                )
            return doc["completion"]
        raise PredictorUnavailable(
            f"{self.spec} failed after {self.retries + 1} attempts: " + "; ".join(trace)
        )

    def _predict_oracle(self, prompt: str) -> str:
        if self.gt is None:
            raise PredictorUnavailable(
                "oracle predictor needs a ground-truth bundle (--gt)"
            )
        doc = parse_artcode(prompt + "]\n")
        boxes = [lit.to_obb() for lit in doc.boxes]
        if not boxes:
            raise EmptyInput("prompt contains no boxes to quantize against")
        box_of_part = _match_gt_parts_to_boxes(self.gt, boxes)
        lits = []
        for j in self.gt.joints:
            if isinstance(j, Joint):
                explicit = j
            else:
                explicit = dequantize_joint(j, self.gt.parts[j.child].obb)
            parent = box_of_part.get(explicit.parent)
            child = box_of_part.get(explicit.child)
            if parent is None or child is None:
                continue  # that part was not reconstructed
            rel = quantize_joint(explicit, boxes[child])
            lits.append(JointLiteral(
                type=rel.type, parent=parent, child=child,
                axis_idx=rel.axis_idx, axis_sign=rel.axis_sign,
                edge_signs=rel.edge_signs,
            ))
        return emit_joints(lits)


def _match_gt_parts_to_boxes(gt: ArticulatedObject, boxes) -> dict:
    """GT part index -> prompt box index, matched on center distance plus
    sorted-half-length mismatch (exact-zero cost when boxes ARE the GT)."""
    cost = np.zeros((len(gt.parts), len(boxes)))
    for i, part in enumerate(gt.parts):
        for j, box in enumerate(boxes):
            cost[i, j] = (
                np.linalg.norm(part.obb.center - box.center)
                + np.abs(np.sort(part.obb.half_lengths) - np.sort(box.half_lengths)).sum()
            )
    pairs, _total = match_parts(list(range(len(gt.parts))), list(range(len(boxes))),
                                cost=cost)
    return dict(pairs)


# ------------------------------------------------------------------- glTF


def export_gltf(obj: ArticulatedObject) -> str:
    """Minimal self-contained glTF 2.0: one node+mesh per part, positions
    and indices in a single embedded base64 buffer."""
    blob = bytearray()
    views, accessors, meshes, nodes = [], [], [], []
    for pi, part in enumerate(obj.parts):
        mesh = part.mesh if part.mesh is not None else obb_mesh(part.obb)
        pos = np.asarray(mesh.vertices, dtype="<f4")
        idx = np.asarray(mesh.faces, dtype="<u4").reshape(-1)
        pos_off, pos_bytes = len(blob), pos.tobytes()
        blob.extend(pos_bytes)
        idx_off, idx_bytes = len(blob), idx.tobytes()
        blob.extend(idx_bytes)
        views.append({"buffer": 0, "byteOffset": pos_off,
                      "byteLength": len(pos_bytes), "target": 34962})
        views.append({"buffer": 0, "byteOffset": idx_off,
                      "byteLength": len(idx_bytes), "target": 34963})
        accessors.append({
            "bufferView": 2 * pi, "componentType": 5126, "count": int(pos.shape[0]),
            "type": "VEC3",
            "min": [float(v) for v in pos.min(axis=0)],
            "max": [float(v) for v in pos.max(axis=0)],
        })
        accessors.append({
            "bufferView": 2 * pi + 1, "componentType": 5125,
            "count": int(idx.shape[0]), "type": "SCALAR",
        })
        meshes.append({
            "name": part.name,
            "primitives": [{"attributes": {"POSITION": 2 * pi}, "indices": 2 * pi + 1}],
        })
        nodes.append({"name": part.name, "mesh": pi})
    doc = {
        "asset": {"version": "2.0"},
        "scene": 0,
        "scenes": [{"nodes": list(range(len(nodes)))}],
        "nodes": nodes,
        "meshes": meshes,
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [{
            "byteLength": len(blob),
            "uri": "data:application/octet-stream;base64," + base64.b64encode(bytes(blob)).decode("ascii"),
        }],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# ------------------------------------------------------------- subcommands


class _StageTimer:
    """Collects wall-clock stage timings for report.json."""

    def __init__(self):
        self.timings = {}
        self._name = None
        self._t0 = 0.0

    def stage(self, name):
        self._name, self._t0 = name, time.perf_counter()
        return self

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.timings[self._name] = time.perf_counter() - self._t0
        return False


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _find_urdf(obj_dir) -> str | None:
    preferred = os.path.join(obj_dir, "mobility.urdf")
    if os.path.exists(preferred):
        return preferred
    found = sorted(glob.glob(os.path.join(obj_dir, "*.urdf")))
    return found[0] if found else None


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    """Parse URDF scenes, optionally pose them, write object bundles."""
    targets = []
    if _find_urdf(args.urdf_dir):
        targets.append((os.path.basename(os.path.normpath(args.urdf_dir)), args.urdf_dir))
    else:
        for entry in sorted(os.listdir(args.urdf_dir)):
            sub = os.path.join(args.urdf_dir, entry)
            if os.path.isdir(sub):
                targets.append((entry, sub))
    if not targets:
        raise FileNotFoundError(f"no URDF objects under {args.urdf_dir!r}")
    os.makedirs(args.out, exist_ok=True)

    def build(item):
        obj_id, obj_dir = item
        urdf = _find_urdf(obj_dir)
        if urdf is None:
            raise FileNotFoundError(f"{obj_dir!r} contains no .urdf file")
        obj = ingest_urdf(urdf)
        if args.pose:
            obj, _states = pose_object(obj, derive_rng(cfg.seed, "ingest-pose", obj_id))
        out_dir = os.path.join(args.out, obj_id)
        os.makedirs(out_dir, exist_ok=True)
        save_bundle(obj, os.path.join(out_dir, "bundle.json"), name=obj_id,
                    write_meshes=True)
        return obj_id

    failures = []
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for item, result in zip(targets, pool.map(_trap(build), targets)):
            if isinstance(result, Exception):
                failures.append((item[0], result))
    for obj_id, err in failures:
        print(f"{obj_id}: {type(err).__name__}: {err}", file=sys.stderr)
    print(f"ingested {len(targets) - len(failures)}/{len(targets)} objects -> {args.out}")
    return 1 if failures else 0


def _trap(fn):
    """Wrap a pool worker so one failure doesn't cancel the batch."""
    def run(item):
        try:
            return fn(item)
        except Exception as e:  # collected and reported by the caller
            return e
    return run


def cmd_gen_dataset(args, cfg: PipelineConfig) -> int:
    """Render the (object x pose x rotation) training grid to JSONL."""
    objects = []
    for entry in sorted(os.listdir(args.bundles)):
        path = os.path.join(args.bundles, entry, "bundle.json")
        if os.path.exists(path):
            _name, obj = load_bundle(path)
            objects.append((entry, obj))
    if not objects:
        raise FileNotFoundError(f"no bundles under {args.bundles!r}")
    samples, skipped = make_dataset(objects, n_poses=cfg.poses,
                                    n_rotations=cfg.rotations, seed=cfg.seed)
    save_dataset_jsonl(samples, args.out)
    for s in skipped:
        print(f"skipped {s.object_id} pose {s.pose_index} rot {s.rotation_index}: {s.reason}",
              file=sys.stderr)
    print(f"wrote {len(samples)} samples from {len(objects)} objects -> {args.out}")
    return 0


def _load_views(views_dir):
    """Load a posed views directory; returns (views, None) or, for the
    pose-free layout, (None, (PointMapSet, masks_per_view))."""
    cam_files = sorted(glob.glob(os.path.join(views_dir, "*.camera.json")))
    if cam_files:
        views = []
        for cam_path in cam_files:
            stem = cam_path[:-len(".camera.json")]
            view = load_camera(cam_path)
            depth_path = stem + ".depth.pfm"
            if not os.path.exists(depth_path):
                raise FileNotFoundError(f"missing depth map {depth_path!r}")
            masks = [load_mask(p) for p in sorted(glob.glob(stem + ".mask*.png"))]
            views.append(view.with_data(depth=read_pfm(depth_path), masks=masks))
        return views, None
    pm_files = sorted(glob.glob(os.path.join(views_dir, "*.pointmap.bin")))
    if not pm_files:
        raise FileNotFoundError(
            f"{views_dir!r} has neither *.camera.json nor *.pointmap.bin views"
        )
    maps, masks_per_view = [], []
    for pm_path in pm_files:
        stem = pm_path[:-len(".pointmap.bin")]
        maps.append(load_pointmap(pm_path))
        masks_per_view.append([load_mask(p) for p in sorted(glob.glob(stem + ".mask*.png"))])
    return None, (PointMapSet(tuple(maps)), masks_per_view)


def cmd_reconstruct(args, cfg: PipelineConfig) -> int:
    """Views -> fused labels -> completed parts -> OBBs -> predicted joints
    -> executable code description plus meshes, MJCF, and a stage report."""
    timer = _StageTimer()
    gt_obj = None
    if args.gt:
        _name, gt_obj = load_bundle(args.gt)
    if args.use_gt_obb and gt_obj is None:
        raise ValueError("--use-gt-obb requires --gt BUNDLE")

    with timer.stage("load"):
        views, pointmap_input = _load_views(args.views)
        if views is not None:
            views = [v.with_data(masks=rank_and_nms(v.masks, cfg.iou_threshold))
                     for v in views]

    with timer.stage("fuse"):
        if views is not None:
            cloud = fuse_labels(views, n_seeds=cfg.n_seeds,
                                seed=derive_seed(cfg.seed, "fuse"),
                                depth_tol=cfg.depth_tol)
        else:
            maps, masks_per_view = pointmap_input
            cloud = fuse_labels_pointmaps(maps, masks_per_view,
                                          dist_threshold=cfg.dist_threshold,
                                          n_seeds=cfg.n_seeds,
                                          seed=derive_seed(cfg.seed, "fuse"))
        part_clouds = []
        for label in np.unique(cloud.labels):
            if label < 0:
                continue
            pts = cloud.points[cloud.labels == label]
            if pts.shape[0] >= MIN_PART_POINTS:
                part_clouds.append(pts)
        if not part_clouds:
            raise EmptyInput("label fusion produced no usable parts")

    with timer.stage("complete"):
        part_meshes = []
        for k, pts in enumerate(part_clouds):
            request = make_completion_request(
                PointCloud(pts), resolution=cfg.resolution, padding=cfg.padding,
                seed=derive_seed(cfg.seed, "complete", k),
            )
            grid = complete(request, cfg.completer)
            part_meshes.append(marching_cubes(grid))

    with timer.stage("fit"):
        boxes = [fit_obb(m.vertices) for m in part_meshes]
        if args.use_gt_obb:
            box_of_part = _match_gt_parts_to_boxes(gt_obj, boxes)
            for part_idx, box_idx in box_of_part.items():
                boxes[box_idx] = gt_obj.parts[part_idx].obb

    with timer.stage("predict"):
        prompt = emit_prompt(boxes)
        client = PredictorClient(cfg.predictor, timeout=cfg.timeout,
                                 retries=cfg.retries, gt=gt_obj,
                                 max_inflight=cfg.jobs)
        completion = client.predict(prompt)

    with timer.stage("execute"):
        if re.search(r"^\s*bbox_0\s*=", completion, re.MULTILINE):
            doc = parse_artcode(completion)  # predictor returned a full document
        else:
            doc = parse_artcode(prompt + completion)
        obj = execute(doc, boxes=boxes)
        obj = ArticulatedObject(
            tuple(Part(name=f"part{i}", obb=p.obb, mesh=part_meshes[i])
                  for i, p in enumerate(obj.parts)),
            obj.joints, root=obj.root,
        )

    with timer.stage("export"):
        parts_dir = os.path.join(args.out, "parts")
        os.makedirs(parts_dir, exist_ok=True)
        for i, mesh in enumerate(part_meshes):
            write_obj(os.path.join(parts_dir, f"part{i}.obj"), mesh)
        _write_text(os.path.join(args.out, "object.artcode"), emit_document(doc))
        _write_text(os.path.join(args.out, "object.mjcf.xml"), export_mjcf(obj))
        save_bundle(obj, os.path.join(args.out, "bundle.json"), name="reconstruction",
                    write_meshes=False)

    report = {
        "n_views": len(views) if views is not None else len(pointmap_input[0].maps),
        "n_parts": len(part_meshes),
        "predictor": cfg.predictor,
        "resolution": cfg.resolution,
        "seed": cfg.seed,
        "stages": timer.timings,
        "timestamp": time.time(),
    }
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"reconstructed {len(part_meshes)} parts, {len(obj.joints)} joints -> {args.out}")
    return 0


def _full_error_report(name: str, gt: ArticulatedObject, cfg: PipelineConfig) -> EvalReport:
    """Score for an object the prediction directory does not contain."""
    has_rev = any(j.type == "revolute" for j in gt.joints)
    return EvalReport(
        name=name, bucket=bucket_for(len(gt.parts)),
        n_pred_parts=0, n_gt_parts=len(gt.parts),
        whole_chamfer=UNMATCHED_PENALTY, part_chamfer_mean=None,
        rot_err_deg_mean=90.0 if gt.joints else None,
        pos_err_mean=UNMATCHED_PENALTY if has_rev else None,
        type_accuracy=0.0 if gt.joints else None,
        matching=(), unmatched_pred_parts=0, unmatched_gt_parts=len(gt.parts),
        unmatched_joints=len(gt.joints), samples=cfg.samples, seed=cfg.seed,
    )


def _load_prediction(pred_dir):
    """Load a predicted object from a bundle or a reconstruction directory."""
    bundle = os.path.join(pred_dir, "bundle.json")
    if os.path.exists(bundle):
        _name, obj = load_bundle(bundle)
        if any(p.mesh is None for p in obj.parts):
            obj = _attach_part_meshes(obj, os.path.join(pred_dir, "parts"))
        return obj
    code = os.path.join(pred_dir, "object.artcode")
    if os.path.exists(code):
        with open(code, "r", encoding="utf-8") as fh:
            obj = execute(parse_artcode(fh.read()))
        return _attach_part_meshes(obj, os.path.join(pred_dir, "parts"))
    return None


def _attach_part_meshes(obj: ArticulatedObject, parts_dir):
    parts = []
    for i, p in enumerate(obj.parts):
        mesh = p.mesh
        if mesh is None:
            path = os.path.join(parts_dir, f"part{i}.obj")
            if os.path.exists(path):
                mesh = read_obj(path)
        parts.append(Part(name=p.name, obb=p.obb, mesh=mesh, cloud=p.cloud))
    return ArticulatedObject(tuple(parts), obj.joints, root=obj.root)


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    """Score every GT object against the prediction directory and write
    report.csv / report.json."""
    ids = sorted(
        entry for entry in os.listdir(args.gt)
        if os.path.exists(os.path.join(args.gt, entry, "bundle.json"))
    )
    if not ids:
        raise FileNotFoundError(f"no GT bundles under {args.gt!r}")

    def score(obj_id):
        _name, gt_obj = load_bundle(os.path.join(args.gt, obj_id, "bundle.json"))
        pred = _load_prediction(os.path.join(args.pred, obj_id))
        if pred is None:
            return _full_error_report(obj_id, gt_obj, cfg)
        return evaluate_object(pred, gt_obj, samples=cfg.samples,
                               seed=cfg.seed, name=obj_id)

    reports = []
    failures = []
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        for obj_id, result in zip(ids, pool.map(_trap(score), ids)):
            if isinstance(result, Exception):
                failures.append((obj_id, result))
            else:
                reports.append(result)
    for obj_id, err in failures:
        print(f"{obj_id}: {type(err).__name__}: {err}", file=sys.stderr)
    if failures:
        return 1
    csv_text, json_text = report_tables(reports)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "report.csv"), csv_text)
    _write_text(os.path.join(args.out, "report.json"), json_text)
    print(f"evaluated {len(reports)} objects -> {args.out}")
    return 0


def cmd_export(args, cfg: PipelineConfig) -> int:
    """Execute a code description and export posed geometry."""
    with open(args.artcode, "r", encoding="utf-8") as fh:
        obj = execute(parse_artcode(fh.read()))
    if args.states is not None:
        states = [float(s) for s in args.states.split(",")] if args.states else []
        obj = posed(obj, states)
    out = args.out or os.path.splitext(args.artcode)[0] + {
        "mjcf": ".mjcf.xml", "obj": ".obj", "gltf": ".gltf",
    }[args.format]
    if args.format == "mjcf":
        _write_text(out, export_mjcf(obj))
    elif args.format == "obj":
        write_obj(out, merge_meshes([
            p.mesh if p.mesh is not None else obb_mesh(p.obb) for p in obj.parts
        ]))
    else:
        _write_text(out, export_gltf(obj))
    print(f"exported {args.format} -> {out}")
    return 0


def _read_points(path) -> PointCloud:
    if path.endswith(".obj"):
        return PointCloud(read_obj(path).vertices)
    data = read_ply(path)
    return data if isinstance(data, PointCloud) else PointCloud(data.vertices)


def cmd_fit_obb(args, cfg: PipelineConfig) -> int:
    """Fit an oriented box to a point file and print it as JSON."""
    obb = fit_obb(_read_points(args.points))
    doc = {
        "center": [float(v) for v in obb.center],
        "rotation": [[float(v) for v in row] for row in obb.rotation],
        "half_lengths": [float(v) for v in obb.half_lengths],
    }
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_quantize(args, cfg: PipelineConfig) -> int:
    """Re-encode a bundle's joints in the box-relative dialect and emit
    the code document."""
    path = args.bundle
    if os.path.isdir(path):
        path = os.path.join(path, "bundle.json")
    _name, obj = load_bundle(path)
    rel_joints = tuple(
        quantize_joint(j, obj.parts[j.child].obb) if isinstance(j, Joint) else j
        for j in obj.joints
    )
    from .artcode import document_from_object

    doc = document_from_object(ArticulatedObject(obj.parts, rel_joints, root=obj.root))
    text = emit_document(doc)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_complete(args, cfg: PipelineConfig) -> int:
    """Complete a partial point cloud to an occupancy grid (and mesh)."""
    cloud = _read_points(args.points)
    request = make_completion_request(cloud, resolution=cfg.resolution,
                                      padding=cfg.padding,
                                      seed=derive_seed(cfg.seed, "complete"))
    grid = complete(request, cfg.completer)
    save_grid(grid, args.out)
    if args.mesh:
        write_obj(args.mesh, marching_cubes(grid))
    print(f"completed {len(cloud)} points -> {args.out}")
    return 0


# ------------------------------------------------------------ entry point


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors: exit 1, not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artobj",
                description="Articulated-object reconstruction pipeline.")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="master seed (fanned out per stage)")
    p.add_argument("--jobs", type=int, help="parallel objects / in-flight requests")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="URDF scenes -> object bundles")
    sp.add_argument("urdf_dir")
    sp.add_argument("out")
    sp.add_argument("--pose", action="store_true",
                    help="sample an articulated pose before bundling")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("gen-dataset", help="bundles -> prompt/completion JSONL")
    sp.add_argument("bundles")
    sp.add_argument("out")
    sp.add_argument("--rotations", type=int)
    sp.add_argument("--poses", type=int)
    sp.set_defaults(func=cmd_gen_dataset)

    sp = sub.add_parser("reconstruct", help="views -> code description + meshes")
    sp.add_argument("views")
    sp.add_argument("out")
    sp.add_argument("--predictor", help="oracle | file:PATH | http(s)://URL")
    sp.add_argument("--gt", help="ground-truth bundle (required by oracle)")
    sp.add_argument("--use-gt-obb", action="store_true",
                    help="swap fitted boxes for matched ground-truth boxes")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--padding", type=float)
    sp.add_argument("--completer")
    sp.add_argument("--iou-threshold", type=float, dest="iou_threshold")
    sp.add_argument("--dist-threshold", type=float, dest="dist_threshold")
    sp.add_argument("--depth-tol", type=float, dest="depth_tol")
    sp.add_argument("--n-seeds", type=int, dest="n_seeds")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--retries", type=int)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("evaluate", help="pred dir vs GT bundles -> reports")
    sp.add_argument("pred")
    sp.add_argument("gt")
    sp.add_argument("out")
    sp.add_argument("--samples", type=int)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("export", help="code description -> mjcf | obj | gltf")
    sp.add_argument("artcode")
    sp.add_argument("--format", choices=("mjcf", "obj", "gltf"), default="mjcf")
    sp.add_argument("--states", help="comma-separated joint states")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("fit-obb", help="points (.ply/.obj) -> oriented box JSON")
    sp.add_argument("points")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit_obb)

    sp = sub.add_parser("quantize", help="bundle joints -> box-relative code")
    sp.add_argument("bundle")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("complete", help="partial cloud -> occupancy grid")
    sp.add_argument("points")
    sp.add_argument("out")
    sp.add_argument("--mesh", help="also extract a surface mesh to this path")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--padding", type=float)
    sp.add_argument("--completer")
    sp.set_defaults(func=cmd_complete)
    return p


_INPUT_ERRORS = (
    ParseError, ExternalFormatError, MissingMesh, UnsupportedJoint,
    UnresolvedLink, InvalidPrompt, StateLengthMismatch, OSError, ValueError,
)
_PREDICTOR_ERRORS = (PredictorUnavailable, MalformedResponse)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        overrides = {
            f.name: getattr(args, f.name)
            for f in fields(PipelineConfig) if getattr(args, f.name, None) is not None
        }
        cfg = cfg.with_overrides(**overrides).validate()
        return int(args.func(args, cfg) or 0)
    except _PREDICTOR_ERRORS as e:
        print(f"predictor error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as e:
        print(f"input error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except ArtObjError as e:
        print(f"pipeline error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
