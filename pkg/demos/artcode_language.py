"""
The articulation DSL
====================

Objects serialize to a short code snippet: one bbox line per part, one
joint line per articulation.  The snippet splits into a prompt (the
boxes) and a completion (the joints), round-trips through the parser,
and executes back into a posable object.
"""

import numpy as np

from artobj import (
    ArticulatedObject,
    Joint,
    Obb,
    Part,
    document_from_object,
    emit_document,
    emit_joints,
    emit_prompt,
    execute,
    export_mjcf,
    parse_artcode,
    posed,
    quantize_joint,
)

cabinet = Obb(np.zeros(3), np.eye(3), np.array([0.6, 0.5, 0.8]))
door = Obb(np.array([0.65, 0.0, 0.0]), np.eye(3), np.array([0.05, 0.45, 0.75]))
hinge = Joint(
    "revolute",
    parent=0,
    child=1,
    axis=np.array([0.0, 0.0, 1.0]),
    pivot=np.array([0.6, -0.45, 0.0]),
    limits=(0.0, np.pi / 2),
)
parts = (Part("cabinet", cabinet), Part("door", door))

# Quantizing the hinge against its child box gives the normative
# edge-axis dialect: discrete fields only, no coordinates in the joint.
obj = ArticulatedObject(parts, (quantize_joint(hinge, door),), root=0)
doc = document_from_object(obj)
print("== edge-axis dialect ==")
print(emit_document(doc))

# The explicit joint emits the numeric dialect instead.
numeric = document_from_object(ArticulatedObject(parts, (hinge,), root=0))
print("== absolute-numeric joint line ==")
print(emit_document(numeric).splitlines()[-2].strip())

# A third spelling (axis index + in-plane pivot offsets) is accepted on
# parse; models emit it often enough to support it.
snippet = emit_prompt(doc.boxes) + (
    '    Joint(type="revolute", parent=0, child=1,'
    " axis=Axis(box=1, idx=2, sign=+1), pos2d=[-0.0500, -0.4500]),\n]\n"
)
print("pos2d form parses:", parse_artcode(snippet).dialect.value)

# prompt + completion concatenate into a complete document
prompt = emit_prompt(doc.boxes)
completion = emit_joints(doc.joints)
assert parse_artcode(prompt + completion) == parse_artcode(emit_document(doc))
print("prompt lines:", len(prompt.splitlines()), " completion lines:", len(completion.splitlines()))

# Execute and swing the door half open.
rebuilt = execute(parse_artcode(emit_document(doc)))
half_open = posed(rebuilt, [np.pi / 4])
print("door center closed:", np.round(rebuilt.parts[1].obb.center, 4))
print("door center open:  ", np.round(half_open.parts[1].obb.center, 4))

# And the same object as a MuJoCo model.
print(export_mjcf(rebuilt).splitlines()[0], "... OK")
