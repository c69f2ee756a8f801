"""
Quantized joint encoding
========================

A joint is stored relative to its child box: an axis index with a sign
(one of the six box directions) and, for hinges, two edge signs that pick
a box edge as the pivot line.  For axis-aligned furniture the code is
exact; a worst-case diagonal axis shows the quantization bound.
"""

import math

import numpy as np

from artobj import Joint, Obb, dequantize_joint, quantize_joint
from artobj.articulation import point_line_distance

# A cabinet door: thin box on the +x face of a unit-ish cabinet.
door = Obb(
    center=np.array([0.55, 0.0, 0.0]),
    rotation=np.eye(3),
    half_lengths=np.array([0.05, 0.4, 0.7]),
)

# Hinge on the door's rear-left vertical edge.
hinge = Joint(
    "revolute",
    parent=0,
    child=1,
    axis=np.array([0.0, 0.0, 1.0]),
    pivot=np.array([0.5, -0.4, 0.0]),
)

rel = quantize_joint(hinge, door)
print("discrete code:", rel)

back = dequantize_joint(rel, door)
dot = abs(float(np.dot(back.axis, hinge.axis)))
print("axis error (deg): ", math.degrees(math.acos(min(dot, 1.0))))
print("pivot line error: ", point_line_distance(back.pivot, hinge.pivot, hinge.axis))

# Worst case: an axis along the box diagonal is equally far from all
# three box directions.  The bound is arccos(1/sqrt(3)) ~ 54.7356 deg.
diag = Joint(
    "prismatic",
    parent=0,
    child=1,
    axis=np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0),
    pivot=None,
)
worst = dequantize_joint(quantize_joint(diag, door), door)
dot = abs(float(np.dot(worst.axis, diag.axis)))
print("diagonal axis error (deg):", round(math.degrees(math.acos(min(dot, 1.0))), 4))
print("bound arccos(1/sqrt(3)):  ", round(math.degrees(math.acos(1.0 / math.sqrt(3.0))), 4))
