"""Parts-and-joints articulation model.

An :class:`ArticulatedObject` is a set of rigid parts connected by 1-DoF
joints into a kinematic tree.  Joints come in two interchangeable forms:

* :class:`Joint` carries explicit world-frame geometry: a unit axis, and
  for revolute joints a pivot point on the rotation line;
* :class:`RelativeJoint` is the quantized, box-relative form: the axis is
  one of the child OBB's three axes (index + sign) and the revolute pivot
  is the midpoint of one of the four box edges parallel to that axis
  (selected by two signs over the remaining axes).

Quantizing an axis to the nearest box axis changes it by at most
``arccos(1/sqrt(3))`` (about 54.7 deg), since the largest of the three
|axis . r_i| over an orthonormal triad is at least 1/sqrt(3).

Frames: part geometry is stored in the observed pose, and joint axis/pivot
are expressed in that same frame.  ``forward_kinematics`` applies *further*
motion on top of the observed pose; ``Joint.state`` records how far the
observed pose already is from closed, and is not re-applied by FK.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CycleDetected,
    DegenerateGeometry,
    InvalidAxisIndex,
    MissingPivot,
    StateLengthMismatch,
    UnknownPart,
)
from .geom import Obb, PointCloud, RigidTransform, TriMesh, as_vec3, _freeze

JOINT_TYPES = ("revolute", "prismatic")

# Two leading |axis . r_i| within this of each other on a degenerate box
# means the axis choice is arbitrary noise rather than signal.
AXIS_TIE_TOL = 1e-6

QUANTIZATION_BOUND = float(np.arccos(1.0 / np.sqrt(3.0)))

# Candidate edge sign pairs in tie-break order.
_EDGE_SIGN_ORDER = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class Joint:
    """Explicit 1-DoF joint from part ``parent`` to part ``child``.

    ``axis`` is normalized on construction.  ``pivot`` is a point on the
    rotation line (revolute only; prismatic joints must not carry one).
    ``state`` is the displacement of the observed pose from the closed
    pose: radians for revolute, length units for prismatic.  ``limits``
    optionally bounds the state range.
    """

    type: str
    parent: int
    child: int
    axis: np.ndarray
    pivot: np.ndarray | None = None
    state: float = 0.0
    limits: tuple[float, float] | None = None

    def __post_init__(self):
        if self.type not in JOINT_TYPES:
            raise ValueError(f"joint type must be one of {JOINT_TYPES}, got {self.type!r}")
        axis = as_vec3(self.axis)
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise ValueError("joint axis has zero length")
        if abs(norm - 1.0) > 1e-12:  # keep already-unit axes bit-identical
            axis = axis / norm
        object.__setattr__(self, "axis", _freeze(axis))
        if self.pivot is not None:
            if self.type == "prismatic":
                raise ValueError("prismatic joints do not take a pivot")
            object.__setattr__(self, "pivot", _freeze(as_vec3(self.pivot)))
        if self.limits is not None:
            lo, hi = float(self.limits[0]), float(self.limits[1])
            if hi < lo:
                raise ValueError(f"joint limits reversed: ({lo}, {hi})")
            object.__setattr__(self, "limits", (lo, hi))
        object.__setattr__(self, "state", float(self.state))


@dataclass(frozen=True)
class RelativeJoint:
    """Box-relative (quantized) joint; resolved against the child part's OBB."""

    type: str
    parent: int
    child: int
    axis_idx: int
    axis_sign: int
    edge_signs: tuple[int, int] | None = None
    state: float = 0.0

    def __post_init__(self):
        if self.type not in JOINT_TYPES:
            raise ValueError(f"joint type must be one of {JOINT_TYPES}, got {self.type!r}")
        if self.axis_idx not in (0, 1, 2):
            raise InvalidAxisIndex(f"axis index must be 0, 1 or 2, got {self.axis_idx}")
        if self.axis_sign not in (1, -1):
            raise ValueError(f"axis sign must be +1 or -1, got {self.axis_sign}")
        if self.type == "prismatic":
            if self.edge_signs is not None:
                raise ValueError("prismatic joints do not take edge signs")
        else:
            if self.edge_signs is None:
                raise MissingPivot("revolute joint needs edge signs")
            s1, s2 = self.edge_signs
            if s1 not in (1, -1) or s2 not in (1, -1):
                raise ValueError(f"edge signs must be +/-1, got {self.edge_signs}")
            object.__setattr__(self, "edge_signs", (int(s1), int(s2)))
        object.__setattr__(self, "state", float(self.state))


@dataclass(frozen=True)
class Part:
    """Rigid part: display name, bounding box, optional mesh and point cloud."""

    name: str
    obb: Obb
    mesh: TriMesh | None = None
    cloud: PointCloud | None = None


@dataclass(frozen=True)
class ArticulatedObject:
    """Kinematic tree of parts; joints may mix explicit and relative forms."""

    parts: tuple[Part, ...]
    joints: tuple[Joint | RelativeJoint, ...]
    root: int = 0

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "joints", tuple(self.joints))

    def part_index(self, name: str) -> int:
        for i, p in enumerate(self.parts):
            if p.name == name:
                return i
        raise UnknownPart(f"no part named {name!r}")


def resolve_axis(obb: Obb, axis_idx: int, axis_sign: int) -> np.ndarray:
    """World-frame unit axis for a box-relative axis selection."""
    if axis_idx not in (0, 1, 2):
        raise InvalidAxisIndex(f"axis index must be 0, 1 or 2, got {axis_idx}")
    if axis_sign not in (1, -1):
        raise ValueError(f"axis sign must be +1 or -1, got {axis_sign}")
    return axis_sign * obb.rotation[:, axis_idx]


def resolve_edge(obb: Obb, axis_idx: int, edge_signs) -> np.ndarray:
    """Midpoint of the box edge parallel to axis ``axis_idx``.

    The edge is picked by signs (s1, s2) along the other two axes in cyclic
    order j = (idx+1) % 3, k = (idx+2) % 3.
    """
    if axis_idx not in (0, 1, 2):
        raise InvalidAxisIndex(f"axis index must be 0, 1 or 2, got {axis_idx}")
    s1, s2 = edge_signs
    if s1 not in (1, -1) or s2 not in (1, -1):
        raise ValueError(f"edge signs must be +/-1, got {edge_signs}")
    j = (axis_idx + 1) % 3
    k = (axis_idx + 2) % 3
    return (
        obb.center
        + s1 * obb.half_lengths[j] * obb.rotation[:, j]
        + s2 * obb.half_lengths[k] * obb.rotation[:, k]
    )


def point_line_distance(point, line_point, line_dir) -> float:
    """Distance from ``point`` to the line through ``line_point`` along unit ``line_dir``."""
    d = as_vec3(point) - as_vec3(line_point)
    u = as_vec3(line_dir)
    return float(np.linalg.norm(d - np.dot(d, u) * u))


def quantize_joint(joint: Joint, child_obb: Obb) -> RelativeJoint:
    """Snap an explicit joint to the child box's nearest axis and edge.

    The axis becomes the box axis with the largest |dot| (ties break to the
    lowest index; the sign follows the dot, +1 on an exact zero).  For
    revolute joints the pivot becomes the midpoint of whichever parallel
    box edge lies closest to the joint line, with ties broken in the order
    (+,+), (+,-), (-,+), (-,-).

    Raises :class:`DegenerateGeometry` when the box is degenerate *and*
    the two leading |dot| values are within ``AXIS_TIE_TOL``: on a
    collapsed box such a near-tie means the axis choice would be noise.
    """
    dots = joint.axis @ child_obb.rotation  # dots[i] = axis . r_i
    mags = np.abs(dots)
    axis_idx = int(np.argmax(mags))  # first max wins ties
    if child_obb.degenerate:
        runner_up = float(np.partition(mags, -2)[-2])
        if mags[axis_idx] - runner_up <= AXIS_TIE_TOL:
            raise DegenerateGeometry(
                "ambiguous axis on a degenerate box "
                f"(|dots| {mags[axis_idx]:.6f} vs {runner_up:.6f})"
            )
    axis_sign = 1 if dots[axis_idx] >= 0.0 else -1

    edge_signs = None
    if joint.type == "revolute":
        if joint.pivot is None:
            raise MissingPivot("revolute joint has no pivot to quantize")
        best, best_d = None, np.inf
        for cand in _EDGE_SIGN_ORDER:
            d = point_line_distance(
                resolve_edge(child_obb, axis_idx, cand), joint.pivot, joint.axis
            )
            if d < best_d:
                best, best_d = cand, d
        edge_signs = best
    return RelativeJoint(
        type=joint.type,
        parent=joint.parent,
        child=joint.child,
        axis_idx=axis_idx,
        axis_sign=axis_sign,
        edge_signs=edge_signs,
        state=joint.state,
    )


def dequantize_joint(rel: RelativeJoint, child_obb: Obb) -> Joint:
    """Resolve a box-relative joint back to explicit world-frame geometry."""
    axis = resolve_axis(child_obb, rel.axis_idx, rel.axis_sign)
    pivot = None
    if rel.type == "revolute":
        pivot = resolve_edge(child_obb, rel.axis_idx, rel.edge_signs)
    return Joint(
        type=rel.type,
        parent=rel.parent,
        child=rel.child,
        axis=axis,
        pivot=pivot,
        state=rel.state,
    )


def _as_explicit(joint, obj: ArticulatedObject) -> Joint:
    if isinstance(joint, RelativeJoint):
        return dequantize_joint(joint, obj.parts[joint.child].obb)
    return joint


def validate_tree(obj: ArticulatedObject) -> None:
    """Check part indices, single parentage, acyclicity and the root index.

    Raises :class:`UnknownPart` or :class:`CycleDetected`.  Orphan parts
    (no parent joint) are allowed; they stay fixed under FK.
    """
    n = len(obj.parts)
    if not (0 <= obj.root < n):
        raise UnknownPart(f"root index {obj.root} out of range for {n} parts")
    parent_of: dict[int, int] = {}
    for joint in obj.joints:
        for idx in (joint.parent, joint.child):
            if not (0 <= idx < n):
                raise UnknownPart(f"joint references part {idx}, object has {n}")
        if joint.child == joint.parent:
            raise CycleDetected(f"joint connects part {joint.child} to itself")
        if joint.child in parent_of:
            raise CycleDetected(f"part {joint.child} has multiple parent joints")
        parent_of[joint.child] = joint.parent
    for start in range(n):
        seen = {start}
        cur = start
        while cur in parent_of:
            cur = parent_of[cur]
            if cur in seen:
                raise CycleDetected(f"kinematic cycle through part {cur}")
            seen.add(cur)


def joint_motion(joint: Joint, s: float) -> RigidTransform:
    """Rigid motion of the child for a further displacement ``s``."""
    if joint.type == "prismatic":
        return RigidTransform.from_translation(s * joint.axis)
    if joint.pivot is None:
        raise MissingPivot("revolute joint has no pivot")
    return RigidTransform.rotation_about_line(joint.axis, joint.pivot, s)


def forward_kinematics(obj: ArticulatedObject, state) -> list[RigidTransform]:
    """World transform of every part after moving each joint by ``state[i]``.

    ``state`` holds one further displacement per joint, in joint order.
    Parts with no parent joint (the root and any orphans) stay at identity.
    Each child's transform is its parent's composed with the joint motion,
    whose axis/pivot are expressed in the zero-state frame.  At the zero
    state every transform is exactly the identity.
    """
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if state.shape[0] != len(obj.joints):
        raise StateLengthMismatch(
            f"state has {state.shape[0]} entries for {len(obj.joints)} joints"
        )
    validate_tree(obj)
    n = len(obj.parts)
    children: dict[int, list[int]] = {}
    joint_for_child: dict[int, tuple[Joint, float]] = {}
    for i, joint in enumerate(obj.joints):
        children.setdefault(joint.parent, []).append(joint.child)
        joint_for_child[joint.child] = (_as_explicit(joint, obj), float(state[i]))

    world: list[RigidTransform | None] = [None] * n
    roots = [i for i in range(n) if i not in joint_for_child]
    stack = list(roots)
    for r in roots:
        world[r] = RigidTransform.identity()
    while stack:
        cur = stack.pop()
        for child in children.get(cur, ()):  # each child has exactly one parent
            joint, s = joint_for_child[child]
            world[child] = world[cur] @ joint_motion(joint, s)
            stack.append(child)
    # validate_tree guarantees no cycles, so everything was reached
    assert all(t is not None for t in world)
    return world


def posed(obj: ArticulatedObject, state) -> ArticulatedObject:
    """The object with every part rigidly moved by its FK transform.

    Meshes, clouds and OBBs are transformed; joint axes and pivots are
    re-expressed in the new pose (each joint moves with its *parent*, so
    the returned object's joints again describe motion from the new pose).
    Relative joints stay relative; their geometry follows the child OBB.
    """
    transforms = forward_kinematics(obj, state)
    new_parts = []
    for part, t in zip(obj.parts, transforms):
        new_parts.append(
            Part(
                name=part.name,
                obb=part.obb.transformed(t),
                mesh=part.mesh.transformed(t) if part.mesh is not None else None,
                cloud=PointCloud(t.apply(part.cloud.points), part.cloud.labels)
                if part.cloud is not None
                else None,
            )
        )
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    new_joints = []
    for i, joint in enumerate(obj.joints):
        if isinstance(joint, RelativeJoint):
            new_joints.append(replace(joint, state=joint.state + float(state[i])))
            continue
        t = transforms[joint.parent]
        new_joints.append(
            replace(
                joint,
                axis=t.rotation @ joint.axis,
                pivot=t.apply(joint.pivot) if joint.pivot is not None else None,
                state=joint.state + float(state[i]),
            )
        )
    return ArticulatedObject(tuple(new_parts), tuple(new_joints), obj.root)
