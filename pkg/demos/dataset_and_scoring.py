"""
Training samples and the evaluation harness
===============================================

From one articulated object to prompt/completion training pairs, and
from a (deliberately perturbed) prediction back to numbers: part
matching, joint type accuracy, axis and pivot errors.
"""

import numpy as np

from artobj import (
    ArticulatedObject,
    Joint,
    Obb,
    Part,
    evaluate_object,
    execute,
    make_dataset,
    parse_artcode,
    report_tables,
)

eye = np.eye(3)
gt = ArticulatedObject(
    parts=(
        Part("body", Obb(np.zeros(3), eye, np.array([0.6, 0.5, 0.7]))),
        Part("door", Obb(np.array([0.65, 0.0, 0.25]), eye, np.array([0.05, 0.45, 0.3]))),
        Part("drawer", Obb(np.array([0.7, 0.0, -0.4]), eye, np.array([0.12, 0.4, 0.18]))),
    ),
    joints=(
        Joint("revolute", 0, 1, axis=np.array([0.0, 0.0, 1.0]),
              pivot=np.array([0.6, -0.45, 0.25]), limits=(0.0, np.pi / 2)),
        Joint("prismatic", 0, 2, axis=np.array([1.0, 0.0, 0.0]), pivot=None,
              limits=(0.0, 0.3)),
    ),
    root=0,
)

# Pose x rotation grid of prompt/completion pairs from the one object.
samples, skipped = make_dataset([("demo", gt)], n_poses=2, n_rotations=3, seed=4)
print("samples:", len(samples), " skipped:", len(skipped))
print("--- sample 0 prompt (first line) ---")
print(samples[0].prompt.splitlines()[0][:84], "...")
print("--- sample 0 completion ---")
print(samples[0].completion, end="")

# Every pair concatenates into an executable document.
roundtrip = execute(parse_artcode(samples[0].prompt + samples[0].completion))
print("re-executed:", len(roundtrip.parts), "parts,", len(roundtrip.joints), "joints")

# Score a perturbed prediction: door axis tilted 2 degrees, pivot nudged.
tilt = np.array([np.sin(np.radians(2.0)), 0.0, np.cos(np.radians(2.0))])
pred = ArticulatedObject(
    parts=gt.parts,
    joints=(
        Joint("revolute", 0, 1, axis=tilt, pivot=np.array([0.6, -0.43, 0.25])),
        Joint("prismatic", 0, 2, axis=np.array([1.0, 0.0, 0.0]), pivot=None),
    ),
    root=0,
)
report = evaluate_object(pred, gt, samples=2000, seed=0)
print("type accuracy:   ", report.type_accuracy)
print("axis error, mean over both joints (deg):", round(report.rot_err_deg_mean, 3))
print("pivot error:     ", round(report.pos_err_mean, 5))
print("whole chamfer:   ", round(report.whole_chamfer, 5))

csv_text, _ = report_tables([report])
print("--- report csv ---")
print(csv_text, end="")
