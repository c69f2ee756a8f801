"""Code-style articulation DSL: emission, tolerant parsing, execution.

A document is a short program describing one articulated object.  The
normative layout is one statement per line::

    bbox_0 = OBB(center=[0.0000, 0.0000, 0.0000], R=[[1.0000, 0.0000, 0.0000], [0.0000, 1.0000, 0.0000], [0.0000, 0.0000, 1.0000]], half=[1.0000, 1.0000, 1.0000])
    bbox_1 = OBB(...)
    joints = [
    Joint(type="revolute", parent=0, child=1, axis=Axis(box=1, idx=2, sign=+1), pivot=Edge(s1=+1, s2=-1)),
    Joint(type="prismatic", parent=0, child=2, axis=Axis(box=2, idx=0, sign=-1)),
    ]

All numbers are fixed 4-decimal (banker's rounding, the ``format(x, '.4f')``
convention); ``R`` is printed row-major (its columns are the box axes);
signs are written ``+1``/``-1``.  A prompt is everything up to and
including the ``joints = [`` line; a completion is the joint lines plus
the closing ``]``, so prompt + completion concatenate into a full document.

Three joint dialects exist and must not be mixed within a document:

* edge/axis (normative): ``axis=Axis(box=c, idx=i, sign=s)`` with the
  revolute pivot picked as a box edge, ``pivot=Edge(s1=.., s2=..)``;
* absolute numeric: ``axis=[x, y, z]`` with ``pos=[x, y, z]`` on revolute
  joints;
* center-relative: ``axis=Axis(...)`` with ``pos2d=[a, b]``, the revolute
  pivot offset from the box center along the two cyclic remaining axes.

``Axis(box=...)`` must always name the joint's child part.

Parsing is tolerant of the wrappers language models produce: markdown
code fences, leading/trailing prose, indentation, a missing trailing
comma, and joints-only completions are all accepted.  Anything else is a
:class:`ParseError` carrying the 1-based line (and column when known).
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .articulation import (
    ArticulatedObject,
    Joint,
    Part,
    RelativeJoint,
    dequantize_joint,
    resolve_axis,
    validate_tree,
)
from .errors import DialectMismatch, EmptyInput, ParseError
from .geom import Obb


class PredictionDialect(Enum):
    EDGE_AXIS = "edge_axis"
    ABSOLUTE_NUMERIC = "absolute_numeric"
    RELATIVE_TO_CENTER = "relative_to_center"


def _num(x: float) -> str:
    return format(float(x), ".4f")


def _round4(x: float) -> float:
    return float(_num(x))


def _vec(v) -> str:
    return "[" + ", ".join(_num(x) for x in v) + "]"


def _sgn(s: int) -> str:
    return "+1" if s > 0 else "-1"


@dataclass(frozen=True)
class BoxLiteral:
    """Raw numbers of one ``bbox_i = OBB(...)`` statement (rotation as rows)."""

    center: tuple
    rotation: tuple  # 3 rows of 3
    half: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        rows = tuple(tuple(float(x) for x in row) for row in self.rotation)
        if len(rows) != 3 or any(len(r) != 3 for r in rows):
            raise ValueError("rotation must be 3 rows of 3")
        object.__setattr__(self, "rotation", rows)
        object.__setattr__(self, "half", tuple(float(x) for x in self.half))
        if len(self.center) != 3 or len(self.half) != 3:
            raise ValueError("center and half must have 3 entries")

    @classmethod
    def from_obb(cls, obb: Obb) -> "BoxLiteral":
        return cls(
            center=tuple(obb.center),
            rotation=tuple(tuple(row) for row in obb.rotation),
            half=tuple(obb.half_lengths),
        )

    def rounded(self) -> "BoxLiteral":
        return BoxLiteral(
            center=tuple(_round4(x) for x in self.center),
            rotation=tuple(tuple(_round4(x) for x in row) for row in self.rotation),
            half=tuple(_round4(x) for x in self.half),
        )

    def to_obb(self) -> Obb:
        """Box with the rotation projected to the nearest true rotation.

        Emitted matrices are rounded to 4 decimals, so the raw rows are
        only orthonormal to ~1e-4; the polar projection (SVD) restores a
        proper rotation before geometry code sees it.
        """
        raw = np.asarray(self.rotation, dtype=np.float64)
        u, _, vt = np.linalg.svd(raw)
        if np.linalg.det(u @ vt) < 0:
            u = u.copy()
            u[:, -1] = -u[:, -1]
        return Obb(np.asarray(self.center), u @ vt, np.maximum(self.half, 1e-6))


@dataclass(frozen=True)
class JointLiteral:
    """One ``Joint(...)`` statement.  Exactly one axis form is set:
    box-relative (``axis_idx``/``axis_sign``, with ``edge_signs`` or
    ``offsets`` on revolute joints) or numeric (``axis``, with ``pos`` on
    revolute joints)."""

    type: str
    parent: int
    child: int
    axis_idx: int | None = None
    axis_sign: int | None = None
    edge_signs: tuple | None = None
    offsets: tuple | None = None
    axis: tuple | None = None
    pos: tuple | None = None

    def __post_init__(self):
        if self.type not in ("revolute", "prismatic"):
            raise ValueError(f"joint type must be revolute or prismatic, got {self.type!r}")
        relative = self.axis_idx is not None
        numeric = self.axis is not None
        if relative == numeric:
            raise ValueError("joint needs exactly one of axis=Axis(...) or axis=[x, y, z]")
        if relative:
            if self.axis_idx not in (0, 1, 2):
                raise ValueError(f"axis idx must be 0, 1 or 2, got {self.axis_idx}")
            if self.axis_sign not in (1, -1):
                raise ValueError(f"axis sign must be +1 or -1, got {self.axis_sign}")
            if self.pos is not None:
                raise ValueError("pos is only valid with a numeric axis")
        else:
            object.__setattr__(self, "axis", tuple(float(x) for x in self.axis))
            if len(self.axis) != 3:
                raise ValueError("axis must have 3 entries")
            if self.edge_signs is not None or self.offsets is not None:
                raise ValueError("pivot=Edge(...)/pos2d are only valid with axis=Axis(...)")
        pivot_forms = [
            name
            for name, val in (
                ("pivot", self.edge_signs),
                ("pos2d", self.offsets),
                ("pos", self.pos),
            )
            if val is not None
        ]
        if self.type == "prismatic":
            if pivot_forms:
                raise ValueError(f"prismatic joints take no {pivot_forms[0]}")
        else:
            if len(pivot_forms) != 1:
                raise ValueError("revolute joint needs exactly one pivot form")
        if self.edge_signs is not None:
            s1, s2 = self.edge_signs
            if s1 not in (1, -1) or s2 not in (1, -1):
                raise ValueError(f"edge signs must be +/-1, got {self.edge_signs}")
            object.__setattr__(self, "edge_signs", (int(s1), int(s2)))
        if self.offsets is not None:
            object.__setattr__(self, "offsets", tuple(float(x) for x in self.offsets))
            if len(self.offsets) != 2:
                raise ValueError("pos2d must have 2 entries")
        if self.pos is not None:
            object.__setattr__(self, "pos", tuple(float(x) for x in self.pos))
            if len(self.pos) != 3:
                raise ValueError("pos must have 3 entries")

    def dialect(self) -> PredictionDialect | None:
        """This joint's dialect, or None when it fits several (a prismatic
        joint with a box-relative axis reads the same in the edge/axis and
        center-relative dialects)."""
        if self.axis is not None:
            return PredictionDialect.ABSOLUTE_NUMERIC
        if self.edge_signs is not None:
            return PredictionDialect.EDGE_AXIS
        if self.offsets is not None:
            return PredictionDialect.RELATIVE_TO_CENTER
        return None

    def rounded(self) -> "JointLiteral":
        def r(t):
            return None if t is None else tuple(_round4(x) for x in t)

        return JointLiteral(
            type=self.type,
            parent=self.parent,
            child=self.child,
            axis_idx=self.axis_idx,
            axis_sign=self.axis_sign,
            edge_signs=self.edge_signs,
            offsets=r(self.offsets),
            axis=r(self.axis),
            pos=r(self.pos),
        )


@dataclass(frozen=True)
class ArtCodeDocument:
    """A parsed or constructed document: boxes, joints, detected dialect."""

    boxes: tuple = ()
    joints: tuple = ()
    dialect: PredictionDialect = PredictionDialect.EDGE_AXIS

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "joints", tuple(self.joints))

    def rounded(self) -> "ArtCodeDocument":
        return ArtCodeDocument(
            tuple(b.rounded() for b in self.boxes),
            tuple(j.rounded() for j in self.joints),
            self.dialect,
        )


# ---------------------------------------------------------------- emission


def _box_line(i: int, box) -> str:
    if isinstance(box, Obb):
        box = BoxLiteral.from_obb(box)
    rows = ", ".join(_vec(row) for row in box.rotation)
    return (
        f"bbox_{i} = OBB(center={_vec(box.center)}, R=[{rows}], half={_vec(box.half)})"
    )


def _joint_line(j) -> str:
    if isinstance(j, RelativeJoint):
        j = JointLiteral(
            type=j.type,
            parent=j.parent,
            child=j.child,
            axis_idx=j.axis_idx,
            axis_sign=j.axis_sign,
            edge_signs=j.edge_signs,
        )
    head = f'Joint(type="{j.type}", parent={j.parent}, child={j.child}, '
    if j.axis_idx is not None:
        axis = f"axis=Axis(box={j.child}, idx={j.axis_idx}, sign={_sgn(j.axis_sign)})"
        if j.edge_signs is not None:
            tail = f", pivot=Edge(s1={_sgn(j.edge_signs[0])}, s2={_sgn(j.edge_signs[1])})"
        elif j.offsets is not None:
            tail = f", pos2d={_vec(j.offsets)}"
        else:
            tail = ""
    else:
        axis = f"axis={_vec(j.axis)}"
        tail = f", pos={_vec(j.pos)}" if j.pos is not None else ""
    return head + axis + tail + "),"


def emit_prompt(boxes) -> str:
    """Box statements plus the opening ``joints = [`` line."""
    lines = [_box_line(i, b) for i, b in enumerate(boxes)]
    lines.append("joints = [")
    return "\n".join(lines) + "\n"


def emit_joints(joints) -> str:
    """Joint statements plus the closing ``]`` (the completion text)."""
    lines = [_joint_line(j) for j in joints]
    lines.append("]")
    return "\n".join(lines) + "\n"


def emit_document(doc: ArtCodeDocument) -> str:
    return emit_prompt(doc.boxes) + emit_joints(doc.joints)


# ----------------------------------------------------------------- parsing

_BBOX_RE = re.compile(r"^bbox_(\d+)\s*=")
_JOINTS_OPEN_RE = re.compile(r"^joints\s*=\s*\[\s*$")
_JOINTS_EMPTY_RE = re.compile(r"^joints\s*=\s*\[\s*\]\s*$")
_CLOSE_RE = re.compile(r"^\]\s*,?\s*$")


def _fail(msg: str, lineno: int, col: int | None = None) -> ParseError:
    return ParseError(msg, line=lineno, column=col)


def _number(node, lineno: int, indent: int) -> float:
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        inner = _number(node.operand, lineno, indent)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    raise _fail("expected a number", lineno, getattr(node, "col_offset", 0) + indent + 1)


def _integer(node, lineno: int, indent: int) -> int:
    val = _number(node, lineno, indent)
    if val != int(val):
        raise _fail(f"expected an integer, got {val}", lineno,
                    getattr(node, "col_offset", 0) + indent + 1)
    return int(val)


def _float_list(node, n: int, lineno: int, indent: int) -> tuple:
    if not isinstance(node, ast.List):
        raise _fail("expected a list of numbers", lineno,
                    getattr(node, "col_offset", 0) + indent + 1)
    vals = tuple(_number(el, lineno, indent) for el in node.elts)
    if len(vals) != n:
        raise _fail(f"expected {n} numbers, got {len(vals)}", lineno,
                    node.col_offset + indent + 1)
    return vals


def _keywords(call: ast.Call, name: str, allowed, lineno: int, indent: int) -> dict:
    if call.args:
        raise _fail(f"{name} takes keyword arguments only", lineno,
                    call.args[0].col_offset + indent + 1)
    out = {}
    for kw in call.keywords:
        if kw.arg is None:
            raise _fail(f"{name} does not accept **kwargs", lineno,
                        kw.value.col_offset + indent + 1)
        if kw.arg not in allowed:
            raise _fail(f"unknown argument {kw.arg!r} to {name}", lineno,
                        kw.value.col_offset + indent + 1)
        if kw.arg in out:
            raise _fail(f"duplicate argument {kw.arg!r} to {name}", lineno,
                        kw.value.col_offset + indent + 1)
        out[kw.arg] = kw.value
    return out


def _call_named(node, name: str, lineno: int, indent: int) -> ast.Call:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id == name):
        raise _fail(f"expected a {name}(...) call", lineno,
                    getattr(node, "col_offset", 0) + indent + 1)
    return node


def _parse_box_line(line: str, lineno: int, indent: int, expect_idx: int) -> BoxLiteral:
    m = _BBOX_RE.match(line)
    idx = int(m.group(1))
    if idx != expect_idx:
        raise _fail(f"expected bbox_{expect_idx}, got bbox_{idx}", lineno, indent + 1)
    try:
        mod = ast.parse(line)
    except SyntaxError as e:
        raise _fail(e.msg or "invalid syntax", lineno,
                    (e.offset or 0) + indent) from None
    if len(mod.body) != 1 or not isinstance(mod.body[0], ast.Assign):
        raise _fail("expected a single bbox assignment", lineno, indent + 1)
    call = _call_named(mod.body[0].value, "OBB", lineno, indent)
    kws = _keywords(call, "OBB", {"center", "R", "half"}, lineno, indent)
    for req in ("center", "R", "half"):
        if req not in kws:
            raise _fail(f"OBB is missing {req!r}", lineno, call.col_offset + indent + 1)
    r_node = kws["R"]
    if not isinstance(r_node, ast.List) or len(r_node.elts) != 3:
        raise _fail("R must be 3 rows of 3 numbers", lineno,
                    r_node.col_offset + indent + 1)
    rows = tuple(_float_list(row, 3, lineno, indent) for row in r_node.elts)
    try:
        return BoxLiteral(
            center=_float_list(kws["center"], 3, lineno, indent),
            rotation=rows,
            half=_float_list(kws["half"], 3, lineno, indent),
        )
    except ValueError as e:
        raise _fail(str(e), lineno, indent + 1) from None


def _parse_joint_line(line: str, lineno: int, indent: int) -> JointLiteral:
    text = line.rstrip()
    if text.endswith(","):
        text = text[:-1]
    try:
        expr = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise _fail(e.msg or "invalid syntax", lineno,
                    (e.offset or 0) + indent) from None
    call = _call_named(expr.body, "Joint", lineno, indent)
    kws = _keywords(
        call, "Joint",
        {"type", "parent", "child", "axis", "pivot", "pos", "pos2d"},
        lineno, indent,
    )
    for req in ("type", "parent", "child", "axis"):
        if req not in kws:
            raise _fail(f"Joint is missing {req!r}", lineno, call.col_offset + indent + 1)
    type_node = kws["type"]
    if not (isinstance(type_node, ast.Constant) and isinstance(type_node.value, str)):
        raise _fail('type must be a string, "revolute" or "prismatic"', lineno,
                    type_node.col_offset + indent + 1)
    jtype = type_node.value
    parent = _integer(kws["parent"], lineno, indent)
    child = _integer(kws["child"], lineno, indent)

    axis_idx = axis_sign = None
    axis_vec = None
    axis_node = kws["axis"]
    if isinstance(axis_node, ast.List):
        axis_vec = _float_list(axis_node, 3, lineno, indent)
    else:
        axis_call = _call_named(axis_node, "Axis", lineno, indent)
        akws = _keywords(axis_call, "Axis", {"box", "idx", "sign"}, lineno, indent)
        for req in ("box", "idx", "sign"):
            if req not in akws:
                raise _fail(f"Axis is missing {req!r}", lineno,
                            axis_call.col_offset + indent + 1)
        box_ref = _integer(akws["box"], lineno, indent)
        if box_ref != child:
            raise _fail(
                f"Axis box={box_ref} must reference the child part ({child})",
                lineno, akws["box"].col_offset + indent + 1,
            )
        axis_idx = _integer(akws["idx"], lineno, indent)
        axis_sign = _integer(akws["sign"], lineno, indent)

    edge_signs = None
    if "pivot" in kws:
        edge_call = _call_named(kws["pivot"], "Edge", lineno, indent)
        ekws = _keywords(edge_call, "Edge", {"s1", "s2"}, lineno, indent)
        for req in ("s1", "s2"):
            if req not in ekws:
                raise _fail(f"Edge is missing {req!r}", lineno,
                            edge_call.col_offset + indent + 1)
        edge_signs = (_integer(ekws["s1"], lineno, indent),
                      _integer(ekws["s2"], lineno, indent))
    offsets = _float_list(kws["pos2d"], 2, lineno, indent) if "pos2d" in kws else None
    pos = _float_list(kws["pos"], 3, lineno, indent) if "pos" in kws else None

    try:
        return JointLiteral(
            type=jtype, parent=parent, child=child,
            axis_idx=axis_idx, axis_sign=axis_sign,
            edge_signs=edge_signs, offsets=offsets,
            axis=axis_vec, pos=pos,
        )
    except ValueError as e:
        raise _fail(str(e), lineno, call.col_offset + indent + 1) from None


def _candidate_lines(text: str):
    """Numbered lines to parse, preferring the first fenced block that
    contains articulation code when markdown fences are present."""
    lines = list(enumerate(text.splitlines(), start=1))
    fence_rows = [i for i, (_, l) in enumerate(lines) if l.lstrip().startswith("```")]
    for a, b in zip(fence_rows[::2], fence_rows[1::2]):
        block = lines[a + 1 : b]
        if any(
            _BBOX_RE.match(l.strip()) or l.strip().startswith("Joint(")
            or _JOINTS_OPEN_RE.match(l.strip()) or _JOINTS_EMPTY_RE.match(l.strip())
            for _, l in block
        ):
            return block
    if fence_rows:  # fences without code inside: treat fence lines as prose
        drop = set(fence_rows)
        return [pair for i, pair in enumerate(lines) if i not in drop]
    return lines


def parse_artcode(text: str, dialect: PredictionDialect | None = None) -> ArtCodeDocument:
    """Parse a document or a joints-only completion.

    Cleans up markdown fences and leading/trailing prose first.  When
    ``dialect`` is given the joints must conform to it; otherwise the
    dialect is detected (and must be consistent across joints), raising
    :class:`DialectMismatch` on conflicts.  Malformed statements raise
    :class:`ParseError` with the 1-based source line.
    """
    boxes: list[BoxLiteral] = []
    joints: list[JointLiteral] = []
    state = "pre"
    for lineno, raw in _candidate_lines(text):
        line = raw.strip()
        if not line:
            continue
        indent = len(raw) - len(raw.lstrip())
        is_box = bool(_BBOX_RE.match(line))
        is_open = bool(_JOINTS_OPEN_RE.match(line))
        is_empty = bool(_JOINTS_EMPTY_RE.match(line))
        is_joint = line.startswith("Joint(") or line.startswith("Joint (")
        is_close = bool(_CLOSE_RE.match(line))
        joint_and_close = False
        if is_joint and line.rstrip().endswith("]"):
            line = line.rstrip()[:-1].rstrip()  # 'Joint(...),]' on one line
            joint_and_close = True

        if state == "pre":
            if is_box:
                boxes.append(_parse_box_line(line, lineno, indent, 0))
                state = "boxes"
            elif is_open:
                state = "joints"
            elif is_empty:
                state = "done"
            elif is_joint:
                joints.append(_parse_joint_line(line, lineno, indent))
                state = "done" if joint_and_close else "joints"
            else:
                continue  # leading prose
        elif state == "boxes":
            if is_box:
                boxes.append(_parse_box_line(line, lineno, indent, len(boxes)))
            elif is_open:
                state = "joints"
            elif is_empty:
                state = "done"
            else:
                raise _fail("expected another bbox or 'joints = ['", lineno, indent + 1)
        elif state == "joints":
            if is_joint:
                joints.append(_parse_joint_line(line, lineno, indent))
                if joint_and_close:
                    state = "done"
            elif is_close:
                state = "done"
            else:
                raise _fail("expected a Joint(...) or ']'", lineno, indent + 1)
        else:  # done: anything after the close is trailing prose
            break

    if state == "pre":
        raise ParseError("no articulation code found")
    if state == "boxes":
        raise ParseError("missing 'joints = [' section")
    if state == "joints":
        raise ParseError("unterminated joints list (no closing ']')")

    detected = None
    for j in joints:
        d = j.dialect()
        if d is None:
            continue
        if detected is None:
            detected = d
        elif detected is not d:
            raise DialectMismatch(
                f"document mixes {detected.value} and {d.value} joints"
            )
    if dialect is not None:
        if detected is not None and detected is not dialect:
            raise DialectMismatch(
                f"expected {dialect.value} but document uses {detected.value}"
            )
        detected = dialect
    if detected is None:
        detected = PredictionDialect.EDGE_AXIS
    # a numeric-dialect document must not hide box-relative prismatics
    if detected is PredictionDialect.ABSOLUTE_NUMERIC:
        for j in joints:
            if j.axis_idx is not None:
                raise DialectMismatch(
                    "absolute_numeric document contains a box-relative axis"
                )
    return ArtCodeDocument(tuple(boxes), tuple(joints), detected)


# --------------------------------------------------------------- execution


def document_from_object(obj: ArticulatedObject) -> ArtCodeDocument:
    """Encode an object's boxes and (relative) joints as a document."""
    boxes = tuple(BoxLiteral.from_obb(p.obb) for p in obj.parts)
    lits = []
    for j in obj.joints:
        if isinstance(j, RelativeJoint):
            lits.append(
                JointLiteral(
                    type=j.type, parent=j.parent, child=j.child,
                    axis_idx=j.axis_idx, axis_sign=j.axis_sign,
                    edge_signs=j.edge_signs,
                )
            )
        else:
            lits.append(
                JointLiteral(
                    type=j.type, parent=j.parent, child=j.child,
                    axis=tuple(j.axis),
                    pos=tuple(j.pivot) if j.pivot is not None else None,
                )
            )
    dialect = (
        PredictionDialect.ABSOLUTE_NUMERIC
        if any(l.axis is not None for l in lits)
        else PredictionDialect.EDGE_AXIS
    )
    return ArtCodeDocument(boxes, tuple(lits), dialect)


def _literal_to_joint(lit: JointLiteral, boxes) -> Joint | RelativeJoint:
    if lit.axis is not None:
        return Joint(
            type=lit.type, parent=lit.parent, child=lit.child,
            axis=np.asarray(lit.axis),
            pivot=np.asarray(lit.pos) if lit.pos is not None else None,
        )
    if lit.edge_signs is not None or lit.type == "prismatic":
        return RelativeJoint(
            type=lit.type, parent=lit.parent, child=lit.child,
            axis_idx=lit.axis_idx, axis_sign=lit.axis_sign,
            edge_signs=lit.edge_signs,
        )
    # center-relative revolute: resolve the pivot now
    obb = boxes[lit.child]
    j = (lit.axis_idx + 1) % 3
    k = (lit.axis_idx + 2) % 3
    pivot = (
        obb.center
        + lit.offsets[0] * obb.rotation[:, j]
        + lit.offsets[1] * obb.rotation[:, k]
    )
    return Joint(
        type=lit.type, parent=lit.parent, child=lit.child,
        axis=resolve_axis(obb, lit.axis_idx, lit.axis_sign), pivot=pivot,
    )


def execute(doc: ArtCodeDocument, boxes=None) -> ArticulatedObject:
    """Build an :class:`ArticulatedObject` from a document.

    ``boxes`` overrides the document's own box literals with full-precision
    OBBs (the usual path: the document came from a predictor that saw
    4-decimal prompts, but the caller kept the real boxes).  Part indices
    must be in range; the tree is validated.
    """
    if boxes is None:
        if not doc.boxes:
            raise EmptyInput("document has no boxes and none were supplied")
        boxes = [b.to_obb() for b in doc.boxes]
    else:
        boxes = [b.to_obb() if isinstance(b, BoxLiteral) else b for b in boxes]
        if not boxes:
            raise EmptyInput("empty box list")
    n = len(boxes)
    for lit in doc.joints:
        if not (0 <= lit.parent < n and 0 <= lit.child < n):
            raise ParseError(
                f"joint references part {max(lit.parent, lit.child)}, "
                f"document has {n} boxes"
            )
    parts = tuple(Part(name=f"part_{i}", obb=b) for i, b in enumerate(boxes))
    joints = tuple(_literal_to_joint(l, boxes) for l in doc.joints)
    child_set = {j.child for j in joints}
    root = next((i for i in range(n) if i not in child_set), 0)
    obj = ArticulatedObject(parts, joints, root=root)
    validate_tree(obj)
    return obj


# ------------------------------------------------------------- MJCF export

_XML_NUM = lambda x: format(float(x), ".10g")  # noqa: E731


def _quat_wxyz(r: np.ndarray):
    """Rotation matrix to unit quaternion (w, x, y, z), Shepperd's method."""
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        return (s / 4, (r[2, 1] - r[1, 2]) / s,
                (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s)
    i = int(np.argmax(np.diag(r)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = np.sqrt(r[i, i] - r[j, j] - r[k, k] + 1.0) * 2
    q = [0.0, 0.0, 0.0, 0.0]
    q[0] = (r[k, j] - r[j, k]) / s
    q[1 + i] = s / 4
    q[1 + j] = (r[j, i] + r[i, j]) / s
    q[1 + k] = (r[k, i] + r[i, k]) / s
    return tuple(q)


def export_mjcf(obj: ArticulatedObject, model_name: str = "artobj") -> str:
    """Serialize as a MuJoCo MJCF model.

    Bodies are nested along the kinematic tree, each world-axis-aligned at
    its part's OBB center, with the box geom rotated inside the body.
    Joints are body-local (hinge for revolute, slide for prismatic).  The
    observed joint states are recorded as a ``<keyframe>`` qpos block.
    """
    import xml.etree.ElementTree as ET

    validate_tree(obj)
    n = len(obj.parts)
    explicit = []
    for j in obj.joints:
        explicit.append(
            dequantize_joint(j, obj.parts[j.child].obb)
            if isinstance(j, RelativeJoint) else j
        )
    children: dict[int, list[int]] = {}
    joint_of: dict[int, Joint] = {}
    for j in explicit:
        children.setdefault(j.parent, []).append(j.child)
        joint_of[j.child] = j

    used = set()
    names = []
    for i, p in enumerate(obj.parts):
        name = p.name if p.name and p.name not in used else f"part_{i}"
        used.add(name)
        names.append(name)

    root_el = ET.Element("mujoco", model=model_name)
    ET.SubElement(root_el, "compiler", angle="radian")
    world = ET.SubElement(root_el, "worldbody")
    qpos: list[float] = []

    def emit_body(parent_el, idx: int, parent_center):
        part = obj.parts[idx]
        center = part.obb.center
        rel = center - parent_center
        body = ET.SubElement(
            parent_el, "body", name=names[idx],
            pos=" ".join(_XML_NUM(v) for v in rel),
        )
        if idx in joint_of:
            j = joint_of[idx]
            attrs = {
                "name": f"joint_{names[idx]}",
                "type": "hinge" if j.type == "revolute" else "slide",
                "axis": " ".join(_XML_NUM(v) for v in j.axis),
            }
            if j.type == "revolute":
                attrs["pos"] = " ".join(_XML_NUM(v) for v in (j.pivot - center))
            if j.limits is not None:
                attrs["limited"] = "true"
                attrs["range"] = f"{_XML_NUM(j.limits[0])} {_XML_NUM(j.limits[1])}"
            ET.SubElement(body, "joint", **attrs)
            qpos.append(j.state)
        w, x, y, z = _quat_wxyz(part.obb.rotation)
        ET.SubElement(
            body, "geom", type="box",
            size=" ".join(_XML_NUM(v) for v in part.obb.half_lengths),
            quat=f"{_XML_NUM(w)} {_XML_NUM(x)} {_XML_NUM(y)} {_XML_NUM(z)}",
        )
        for child in children.get(idx, ()):
            emit_body(body, child, center)

    tree_roots = [i for i in range(n) if i not in joint_of]
    for r in tree_roots:
        emit_body(world, r, np.zeros(3))

    if qpos:
        kf = ET.SubElement(root_el, "keyframe")
        ET.SubElement(
            kf, "key", name="observed", qpos=" ".join(_XML_NUM(v) for v in qpos)
        )
    ET.indent(root_el)
    return ET.tostring(root_el, encoding="unicode") + "\n"
