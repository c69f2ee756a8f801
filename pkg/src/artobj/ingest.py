"""URDF ingestion, part grouping, pose sampling, and dataset generation.

The ingest path turns a URDF scene into ground truth: links connected by
fixed joints collapse into single rigid parts (their meshes merged in the
world frame at the zero state), every remaining joint becomes an explicit
world-frame :class:`~artobj.articulation.Joint`, and each part gets an
oriented bounding box fitted to its merged mesh vertices.

Dataset generation then renders that ground truth into prompt/completion
training text: each object is posed a few times with partially-open
joints, each pose is augmented with several random rotations about the
world z axis, and each (pose, rotation) becomes one sample whose prompt
holds the part boxes and whose completion holds the quantized joints.
Samples whose joints cannot be quantized (degenerate boxes with ambiguous
axes) are skipped and reported, never dropped silently.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import xml.etree.ElementTree as ET

from .articulation import (
    ArticulatedObject,
    Joint,
    Part,
    RelativeJoint,
    dequantize_joint,
    posed,
    quantize_joint,
    validate_tree,
)
from .artcode import emit_joints, emit_prompt
from .errors import (
    DegenerateGeometry,
    MissingMesh,
    ParseError,
    UnresolvedLink,
    UnsupportedJoint,
)
from .geom import (
    Obb,
    PointCloud,
    RigidTransform,
    TriMesh,
    fit_obb,
    merge_meshes,
    rot_x,
    rot_y,
    rot_z,
)
from .meshio import read_obj, write_obj
from .seeding import derive_rng

SUPPORTED_JOINTS = ("revolute", "prismatic", "continuous", "fixed")

# Partially-open sampling: states are drawn uniformly from the middle half
# of the joint's range so doors are visibly ajar, never closed or slammed.
POSE_RANGE_FRACTION = (0.25, 0.75)
DEFAULT_REVOLUTE_RANGE = (0.0, math.pi / 2)
PRISMATIC_EXTENT_FRACTION = 0.4


# ------------------------------------------------------------ URDF parsing


@dataclass(frozen=True)
class UrdfMesh:
    filename: str
    origin: RigidTransform
    scale: tuple = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class UrdfLink:
    name: str
    visual_meshes: tuple = ()
    collision_meshes: tuple = ()

    def meshes(self) -> tuple:
        """Collision geometry when present, else visual."""
        return self.collision_meshes or self.visual_meshes


@dataclass(frozen=True)
class UrdfJoint:
    name: str
    type: str
    parent: str
    child: str
    origin: RigidTransform
    axis: tuple = (1.0, 0.0, 0.0)
    limits: tuple | None = None  # (lower, upper)


@dataclass(frozen=True)
class UrdfModel:
    name: str
    links: tuple
    joints: tuple
    root: str

    def link(self, name: str) -> UrdfLink:
        for l in self.links:
            if l.name == name:
                return l
        raise UnresolvedLink(f"no link named {name!r}")

    def world_transforms(self) -> dict:
        """World transform of every link frame at the zero state."""
        by_child = {j.child: j for j in self.joints}
        out: dict[str, RigidTransform] = {}
        visiting: set[str] = set()

        def resolve(name: str) -> RigidTransform:
            if name in out:
                return out[name]
            if name in visiting:
                raise ParseError(f"joint cycle through link {name!r}")
            visiting.add(name)
            j = by_child.get(name)
            t = RigidTransform.identity() if j is None else resolve(j.parent) @ j.origin
            visiting.discard(name)
            out[name] = t
            return t

        for l in self.links:
            resolve(l.name)
        return out


def _rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def _parse_vec3(text: str, what: str) -> list:
    try:
        vals = [float(v) for v in text.split()]
    except ValueError:
        raise ParseError(f"non-numeric {what}: {text!r}") from None
    if len(vals) != 3:
        raise ParseError(f"{what} needs 3 values, got {len(vals)}: {text!r}")
    return vals


def _parse_origin(el) -> RigidTransform:
    if el is None:
        return RigidTransform.identity()
    xyz = _parse_vec3(el.get("xyz", "0 0 0"), "origin xyz")
    rpy = _parse_vec3(el.get("rpy", "0 0 0"), "origin rpy")
    return RigidTransform(_rpy_matrix(*rpy), xyz)


def _parse_link_meshes(link_el, tag: str) -> tuple:
    out = []
    for geom_parent in link_el.findall(tag):
        origin = _parse_origin(geom_parent.find("origin"))
        for mesh_el in geom_parent.findall("geometry/mesh"):
            filename = mesh_el.get("filename")
            if not filename:
                raise ParseError(f"<{tag}> mesh without filename in link "
                                 f"{link_el.get('name')!r}")
            scale = tuple(float(v) for v in mesh_el.get("scale", "1 1 1").split())
            out.append(UrdfMesh(filename=filename, origin=origin, scale=scale))
    return tuple(out)


def parse_urdf(path) -> UrdfModel:
    """Parse the URDF subset: links with mesh geometry and 1-DoF joints.

    ``continuous`` joints become unlimited revolute joints; ``fixed``
    joints are kept for grouping.  ``planar``, ``floating``, ``ball`` or
    unknown joint types raise :class:`UnsupportedJoint`.  Joints that name
    a missing link raise :class:`UnresolvedLink`; the scene must have
    exactly one root link.
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as e:
        raise ParseError(f"malformed URDF XML: {e}") from None
    robot = tree.getroot()
    if robot.tag != "robot":
        raise ParseError(f"expected <robot> root element, got <{robot.tag}>")

    links = []
    for link_el in robot.findall("link"):
        name = link_el.get("name")
        if not name:
            raise ParseError("link without a name")
        links.append(
            UrdfLink(
                name=name,
                visual_meshes=_parse_link_meshes(link_el, "visual"),
                collision_meshes=_parse_link_meshes(link_el, "collision"),
            )
        )
    link_names = {l.name for l in links}
    if len(link_names) != len(links):
        raise ParseError("duplicate link names")

    joints = []
    for joint_el in robot.findall("joint"):
        name = joint_el.get("name") or f"joint_{len(joints)}"
        jtype = joint_el.get("type")
        if jtype not in SUPPORTED_JOINTS:
            raise UnsupportedJoint(f"joint {name!r} has unsupported type {jtype!r}")
        parent_el = joint_el.find("parent")
        child_el = joint_el.find("child")
        if parent_el is None or child_el is None:
            raise ParseError(f"joint {name!r} lacks parent or child")
        parent, child = parent_el.get("link"), child_el.get("link")
        for ref in (parent, child):
            if ref not in link_names:
                raise UnresolvedLink(f"joint {name!r} references missing link {ref!r}")
        axis_el = joint_el.find("axis")
        axis = (1.0, 0.0, 0.0)
        if axis_el is not None:
            axis = tuple(_parse_vec3(axis_el.get("xyz", "1 0 0"), "joint axis"))
        limits = None
        limit_el = joint_el.find("limit")
        if limit_el is not None and jtype in ("revolute", "prismatic"):
            limits = (float(limit_el.get("lower", "0")), float(limit_el.get("upper", "0")))
        if jtype == "continuous":
            jtype, limits = "revolute", None
        joints.append(
            UrdfJoint(
                name=name, type=jtype, parent=parent, child=child,
                origin=_parse_origin(joint_el.find("origin")),
                axis=axis, limits=limits,
            )
        )

    children = [j.child for j in joints]
    if len(set(children)) != len(children):
        dupes = sorted({c for c in children if children.count(c) > 1})
        raise ParseError(f"links with more than one parent joint: {dupes}")
    children = set(children)
    roots = [l.name for l in links if l.name not in children]
    if len(roots) != 1:
        raise ParseError(
            f"expected exactly one root link, found {len(roots)}: {sorted(roots)}"
        )
    return UrdfModel(
        name=robot.get("name", "scene"), links=tuple(links),
        joints=tuple(joints), root=roots[0],
    )


# ----------------------------------------------------------- part grouping


def _load_link_mesh(link: UrdfLink, world: RigidTransform, mesh_dir):
    """Merged world-frame mesh of one link, or None without geometry."""
    metas = link.meshes()
    if not metas:
        return None
    loaded = []
    for m in metas:
        path = os.path.join(mesh_dir, m.filename)
        if not os.path.exists(path):
            raise MissingMesh(f"link {link.name!r} references missing mesh {m.filename!r}")
        mesh = read_obj(path)
        verts = (world @ m.origin).apply(mesh.vertices * np.asarray(m.scale))
        loaded.append(TriMesh(verts, mesh.faces))
    return merge_meshes(loaded)


def group_part_meshes(model: UrdfModel, mesh_dir) -> ArticulatedObject:
    """Collapse fixed-connected links into rigid parts.

    Part meshes are merged in the world frame at the zero state; the part
    frame is the world frame.  Each part's OBB is fitted to its merged
    mesh vertices.  Non-fixed joints become explicit world-frame joints
    between the groups; the returned object's root is the group holding
    the URDF root link.
    """
    order = {l.name: i for i, l in enumerate(model.links)}
    parent_uf = {l.name: l.name for l in model.links}

    def find(x):
        while parent_uf[x] != x:
            parent_uf[x] = parent_uf[parent_uf[x]]
            x = parent_uf[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return
        # keep the earliest-declared link as the representative
        if order[ra] <= order[rb]:
            parent_uf[rb] = ra
        else:
            parent_uf[ra] = rb

    for j in model.joints:
        if j.type == "fixed":
            union(j.parent, j.child)

    reps = []
    members: dict[str, list[str]] = {}
    for l in model.links:
        r = find(l.name)
        if r not in members:
            members[r] = []
            reps.append(r)
        members[r].append(l.name)

    world = model.world_transforms()
    parts = []
    group_index = {}
    for i, rep in enumerate(reps):
        group_index.update({name: i for name in members[rep]})
        link_meshes = []
        for name in members[rep]:
            m = _load_link_mesh(model.link(name), world[name], mesh_dir)
            if m is not None:
                link_meshes.append(m)
        if not link_meshes:
            raise MissingMesh(f"part {rep!r} has no mesh geometry")
        mesh = merge_meshes(link_meshes)
        parts.append(Part(name=rep, obb=fit_obb(PointCloud(mesh.vertices)), mesh=mesh))

    joints = []
    for j in model.joints:
        if j.type == "fixed":
            continue
        child_world = world[j.child]
        axis_world = child_world.rotation @ np.asarray(j.axis, dtype=np.float64)
        joints.append(
            Joint(
                type=j.type,
                parent=group_index[j.parent],
                child=group_index[j.child],
                axis=axis_world,
                pivot=child_world.translation.copy() if j.type == "revolute" else None,
                state=0.0,
                limits=j.limits,
            )
        )
    obj = ArticulatedObject(tuple(parts), tuple(joints), root=group_index[model.root])
    validate_tree(obj)
    return obj


def ingest_urdf(path) -> ArticulatedObject:
    """parse_urdf + group_part_meshes, meshes resolved next to the file."""
    model = parse_urdf(path)
    return group_part_meshes(model, os.path.dirname(os.path.abspath(path)))


# ------------------------------------------------------------------ posing


def _axis_extent(obb: Obb, axis: np.ndarray) -> float:
    """Width of the box along a direction (its support-function extent)."""
    return float(2.0 * np.sum(obb.half_lengths * np.abs(axis @ obb.rotation)))


def _state_range(joint: Joint, child_obb: Obb) -> tuple:
    if joint.limits is not None:
        return joint.limits
    if joint.type == "revolute":
        return DEFAULT_REVOLUTE_RANGE
    return (0.0, PRISMATIC_EXTENT_FRACTION * _axis_extent(child_obb, joint.axis))


def pose_object(obj: ArticulatedObject, rng) -> tuple:
    """Sample a partially-open pose and apply it.

    Each joint's state is drawn uniformly from the middle half of its
    range ([0.25, 0.75] of the span).  Joints without limits default to
    (0, pi/2) for revolute and (0, 0.4 x child-box extent along the axis)
    for prismatic.  Part boxes are re-canonicalized after the rigid move,
    matching what a fresh fit would produce.  Returns (posed object,
    state vector).
    """
    rng = np.random.default_rng(rng)
    states = []
    for j in obj.joints:
        explicit = (
            dequantize_joint(j, obj.parts[j.child].obb)
            if isinstance(j, RelativeJoint) else j
        )
        lo, hi = _state_range(explicit, obj.parts[j.child].obb)
        u = rng.uniform(*POSE_RANGE_FRACTION)
        states.append(lo + u * (hi - lo))
    states = np.asarray(states)
    moved = posed(obj, states)
    parts = tuple(
        Part(name=p.name, obb=p.obb.canonical(), mesh=p.mesh, cloud=p.cloud)
        for p in moved.parts
    )
    return ArticulatedObject(parts, moved.joints, moved.root), states


def rotate_object_z(obj: ArticulatedObject, angle: float) -> ArticulatedObject:
    """Rigidly rotate the whole object about the world z axis."""
    t = RigidTransform(rot_z(angle), np.zeros(3))
    parts = tuple(
        Part(
            name=p.name,
            obb=p.obb.transformed(t).canonical(),
            mesh=p.mesh.transformed(t) if p.mesh is not None else None,
            cloud=PointCloud(t.apply(p.cloud.points), p.cloud.labels)
            if p.cloud is not None else None,
        )
        for p in obj.parts
    )
    joints = []
    for j in obj.joints:
        if isinstance(j, RelativeJoint):
            joints.append(j)  # follows its box
            continue
        joints.append(
            Joint(
                type=j.type, parent=j.parent, child=j.child,
                axis=t.rotation @ j.axis,
                pivot=t.apply(j.pivot) if j.pivot is not None else None,
                state=j.state, limits=j.limits,
            )
        )
    return ArticulatedObject(parts, tuple(joints), obj.root)


# ------------------------------------------------------- dataset assembly


@dataclass(frozen=True)
class DatasetSample:
    object_id: str
    pose_index: int
    rotation_index: int
    prompt: str
    completion: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "object_id": self.object_id,
            "pose_index": self.pose_index,
            "rotation_index": self.rotation_index,
            "prompt": self.prompt,
            "completion": self.completion,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSample":
        return cls(
            object_id=d["object_id"], pose_index=int(d["pose_index"]),
            rotation_index=int(d["rotation_index"]), prompt=d["prompt"],
            completion=d["completion"], meta=d.get("meta", {}),
        )


@dataclass(frozen=True)
class SkippedSample:
    object_id: str
    pose_index: int
    rotation_index: int
    reason: str


def encode_observed(obj: ArticulatedObject) -> tuple:
    """(prompt, completion) for an object at its observed pose.

    Boxes go into the prompt; every joint is quantized against its child
    part's box and written to the completion.  Raises
    :class:`DegenerateGeometry` when quantization is ambiguous.
    """
    rel_joints = []
    for j in obj.joints:
        if isinstance(j, RelativeJoint):
            rel_joints.append(j)
        else:
            rel_joints.append(quantize_joint(j, obj.parts[j.child].obb))
    prompt = emit_prompt([p.obb for p in obj.parts])
    completion = emit_joints(rel_joints)
    return prompt, completion


def make_dataset(objects, n_poses: int = 5, n_rotations: int = 5, seed: int = 0):
    """Render (object, pose, rotation) grid samples.

    ``objects`` is an iterable of ``(object_id, ArticulatedObject)``;
    output order is sorted by object id, so the result is reproducible
    regardless of input order.  Returns ``(samples, skipped)`` where
    ``skipped`` records every sample lost to ambiguous quantization.
    """
    samples: list[DatasetSample] = []
    skipped: list[SkippedSample] = []
    for object_id, obj in sorted(objects, key=lambda kv: str(kv[0])):
        rng = derive_rng(seed, "dataset", object_id)
        for pose_idx in range(n_poses):
            opened, states = pose_object(obj, rng)
            for rot_idx in range(n_rotations):
                angle = float(rng.uniform(0.0, 2.0 * math.pi))
                rotated = rotate_object_z(opened, angle)
                try:
                    prompt, completion = encode_observed(rotated)
                except DegenerateGeometry as e:
                    skipped.append(
                        SkippedSample(str(object_id), pose_idx, rot_idx, str(e))
                    )
                    continue
                samples.append(
                    DatasetSample(
                        object_id=str(object_id),
                        pose_index=pose_idx,
                        rotation_index=rot_idx,
                        prompt=prompt,
                        completion=completion,
                        meta={
                            "z_angle": angle,
                            "states": [float(s) for s in states],
                            "n_parts": len(obj.parts),
                            "joint_types": [j.type for j in obj.joints],
                            "dialect": "edge_axis",
                        },
                    )
                )
    return samples, skipped


def save_dataset_jsonl(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True))
            fh.write("\n")


def load_dataset_jsonl(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DatasetSample.from_json(json.loads(line)))
    return out


# -------------------------------------------------------------- bundle I/O

BUNDLE_FORMAT = "artobj-bundle-v1"


def _obb_to_json(obb: Obb) -> dict:
    return {
        "center": [float(v) for v in obb.center],
        "rotation": [[float(v) for v in row] for row in obb.rotation],
        "half_lengths": [float(v) for v in obb.half_lengths],
        "degenerate": bool(obb.degenerate),
    }


def _obb_from_json(d: dict) -> Obb:
    return Obb(
        np.asarray(d["center"]), np.asarray(d["rotation"]),
        np.asarray(d["half_lengths"]), degenerate=bool(d.get("degenerate", False)),
    )


def _joint_to_json(j) -> dict:
    if isinstance(j, RelativeJoint):
        return {
            "kind": "relative", "type": j.type, "parent": j.parent, "child": j.child,
            "axis_idx": j.axis_idx, "axis_sign": j.axis_sign,
            "edge_signs": list(j.edge_signs) if j.edge_signs is not None else None,
            "state": j.state,
        }
    return {
        "kind": "explicit", "type": j.type, "parent": j.parent, "child": j.child,
        "axis": [float(v) for v in j.axis],
        "pivot": [float(v) for v in j.pivot] if j.pivot is not None else None,
        "state": j.state,
        "limits": list(j.limits) if j.limits is not None else None,
    }


def _joint_from_json(d: dict):
    if d.get("kind") == "relative":
        return RelativeJoint(
            type=d["type"], parent=int(d["parent"]), child=int(d["child"]),
            axis_idx=int(d["axis_idx"]), axis_sign=int(d["axis_sign"]),
            edge_signs=tuple(d["edge_signs"]) if d.get("edge_signs") else None,
            state=float(d.get("state", 0.0)),
        )
    return Joint(
        type=d["type"], parent=int(d["parent"]), child=int(d["child"]),
        axis=np.asarray(d["axis"]),
        pivot=np.asarray(d["pivot"]) if d.get("pivot") is not None else None,
        state=float(d.get("state", 0.0)),
        limits=tuple(d["limits"]) if d.get("limits") is not None else None,
    )


def save_bundle(obj: ArticulatedObject, path, name: str = "object",
                write_meshes: bool = False) -> None:
    """Serialize an object as JSON; optionally write part meshes as OBJ
    files next to it (referenced by relative path)."""
    base_dir = os.path.dirname(os.path.abspath(path))
    parts = []
    for i, p in enumerate(obj.parts):
        mesh_ref = None
        if write_meshes and p.mesh is not None:
            mesh_ref = f"{name}_part{i}.obj"
            write_obj(os.path.join(base_dir, mesh_ref), p.mesh)
        parts.append({"name": p.name, "obb": _obb_to_json(p.obb), "mesh": mesh_ref})
    doc = {
        "format": BUNDLE_FORMAT,
        "name": name,
        "root": obj.root,
        "parts": parts,
        "joints": [_joint_to_json(j) for j in obj.joints],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_bundle(path) -> tuple:
    """Read a bundle; returns (name, ArticulatedObject).  Parts whose mesh
    reference is missing on disk raise :class:`MissingMesh`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed bundle JSON: {e}") from None
    if doc.get("format") != BUNDLE_FORMAT:
        raise ParseError(f"not an object bundle (format={doc.get('format')!r})")
    base_dir = os.path.dirname(os.path.abspath(path))
    parts = []
    for p in doc["parts"]:
        mesh = None
        if p.get("mesh"):
            mesh_path = os.path.join(base_dir, p["mesh"])
            if not os.path.exists(mesh_path):
                raise MissingMesh(f"bundle references missing mesh {p['mesh']!r}")
            mesh = read_obj(mesh_path)
        parts.append(Part(name=p["name"], obb=_obb_from_json(p["obb"]), mesh=mesh))
    obj = ArticulatedObject(
        tuple(parts),
        tuple(_joint_from_json(j) for j in doc["joints"]),
        root=int(doc.get("root", 0)),
    )
    validate_tree(obj)
    return doc.get("name", "object"), obj
