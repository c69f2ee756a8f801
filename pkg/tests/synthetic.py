"""Shared synthetic fixtures: box parts, hinged objects, URDF scenes,
and an analytic two-view depth renderer.  Test-only helpers."""

import os

import numpy as np

from artobj.articulation import ArticulatedObject, Joint, Part
from artobj.geom import Obb, PointCloud, TriMesh, fit_obb, merge_meshes, obb_mesh, sample_surface
from artobj.meshio import write_obj


def box_part(name, center, half, rotation=None, n_points=0, seed=0) -> Part:
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    obb = Obb(center, rot, half)
    mesh = obb_mesh(obb)
    cloud = sample_surface(mesh, n_points, seed=seed) if n_points else None
    return Part(name=name, obb=obb, mesh=mesh, cloud=cloud)


def hinged_pair(angle_state=0.0) -> ArticulatedObject:
    """Cabinet-ish fixture: a static base and a door hinged on a shared
    vertical edge at x = 1.  At zero state the door lies flat against the
    base's +x face."""
    base = box_part("base", [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    door = box_part("door", [1.05, 0.0, 0.0], [0.05, 1.0, 1.0])
    hinge = Joint(
        type="revolute",
        parent=0,
        child=1,
        axis=[0.0, 0.0, 1.0],
        pivot=[1.1, 1.0, 0.0],
        state=angle_state,
        limits=(0.0, np.pi / 2),
    )
    return ArticulatedObject((base, door), (hinge,), root=0)


def sliding_pair(offset_state=0.0) -> ArticulatedObject:
    """A base and a drawer sliding out along +x."""
    base = box_part("base", [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    drawer = box_part("drawer", [0.2, 0.0, 0.5], [0.7, 0.8, 0.3])
    slide = Joint(
        type="prismatic",
        parent=0,
        child=1,
        axis=[1.0, 0.0, 0.0],
        state=offset_state,
        limits=(0.0, 1.2),
    )
    return ArticulatedObject((base, drawer), (slide,), root=0)


def random_chain(n_parts: int, seed: int) -> ArticulatedObject:
    """A serial chain of boxes with random alternating joint types."""
    rng = np.random.default_rng(seed)
    parts, joints = [], []
    for i in range(n_parts):
        center = np.array([1.5 * i, 0.0, 0.0]) + rng.normal(scale=0.1, size=3)
        parts.append(box_part(f"p{i}", center, rng.uniform(0.2, 0.6, size=3)))
        if i == 0:
            continue
        axis = rng.normal(size=3)
        if rng.random() < 0.5:
            joints.append(Joint("prismatic", parent=i - 1, child=i, axis=axis))
        else:
            joints.append(
                Joint(
                    "revolute",
                    parent=i - 1,
                    child=i,
                    axis=axis,
                    pivot=rng.normal(scale=1.0, size=3),
                )
            )
    return ArticulatedObject(tuple(parts), tuple(joints), root=0)


# ---------------------------------------------------------------------------
# Boxy cabinet generator.  One geometry sampler feeds two backends: in-memory
# stub objects (synth_object) and a URDF scene on disk (write_synthetic_urdf).
# All boxes are axis-aligned at rest, hinge axes vertical through a door edge
# and slide axes along a box axis, so quantized joint encodings recover the
# ground truth exactly.

_EYE3 = np.eye(3)


# Child slots: eight (face, side, vertical band) combinations plus the top
# face.  One child per slot keeps sibling boxes disjoint at the rest state;
# overlapping siblings give overlapping masks, and the contaminated part
# shells make chamfer matching against ground-truth boxes ambiguous.
_SIDE_SLOTS = (
    (0, 1, 1), (1, 1, 1), (0, -1, 1), (1, -1, 1),
    (0, 1, -1), (1, 1, -1), (0, -1, -1), (1, -1, -1),
)


def _boxy_specs(rng, n_parts):
    """Sample a base box plus n_parts-1 door/drawer child specs.

    Every child is an axis-aligned box hung on its own slot of the base:
    a side face crossed with an upper or lower band, or (ninth child) a
    lid sliding across the top face.  Specs carry world-frame geometry at
    the rest state: center/half of the child box, optional handle box
    touching its front face, the joint axis/pivot and limits, and the
    parent part index.
    """
    if n_parts > 10:
        raise ValueError("slot layout supports at most 9 child parts")
    base_half = np.array(
        [rng.uniform(0.55, 0.9), rng.uniform(0.5, 0.85), rng.uniform(0.45, 0.8)]
    )
    specs = []
    for i in range(1, n_parts):
        parent = 0
        center = np.zeros(3)
        half = np.zeros(3)
        if i - 1 < len(_SIDE_SLOTS):
            t, s, band = _SIDE_SLOTS[i - 1]  # face normal, side, z band
            o = 1 - t  # lateral axis
            center[2] = band * base_half[2] * rng.uniform(0.45, 0.55)
            half[2] = base_half[2] * rng.uniform(0.24, 0.36)
            # Lateral jitter fraction; the bound keeps the child from
            # crossing the corner territory of a neighbouring face.
            lat = rng.uniform(-1.0, 1.0)
            if rng.random() < 0.55:
                kind, name = "door", f"door_{i}"
                thin = rng.uniform(0.04, 0.07)
                half[t] = thin
                half[o] = base_half[o] * rng.uniform(0.45, 0.72)
                center[t] = s * (base_half[t] + thin)
                center[o] = lat * (0.88 * base_half[o] - half[o])
                # Hinge on a vertical edge of the inner face so a handle on
                # the outer face never shifts the fitted box past the pivot
                # line.
                pivot = center.copy()
                pivot[t] -= s * thin
                pivot[o] += float(rng.choice([-1.0, 1.0])) * half[o]
                axis = np.array([0.0, 0.0, 1.0])
                limits = (0.0, float(np.pi / 2))
            else:
                kind, name = "drawer", f"drawer_{i}"
                # Drawer front proud of the face, sunk 0.05 into it.  Deep
                # drawers reach the base interior where fronts from other
                # faces can cross them.
                half[t] = rng.uniform(0.1, 0.18)
                half[o] = base_half[o] * rng.uniform(0.5, 0.8)
                center[t] = s * (base_half[t] + half[t] - 0.05)
                center[o] = lat * (0.88 * base_half[o] - half[o])
                pivot = None
                axis = np.zeros(3)
                axis[t] = float(s)
                limits = (0.0, 0.35)
        else:
            # Top slot: a thin lid resting on the roof, sliding along +x.
            t, s = 2, 1
            kind, name = "drawer", f"drawer_{i}"
            half = np.array(
                [
                    base_half[0] * rng.uniform(0.5, 0.7),
                    base_half[1] * rng.uniform(0.5, 0.7),
                    rng.uniform(0.05, 0.1),
                ]
            )
            center = np.array(
                [
                    rng.uniform(-1.0, 1.0) * (0.92 * base_half[0] - half[0]),
                    rng.uniform(-1.0, 1.0) * (0.92 * base_half[1] - half[1]),
                    base_half[2] + half[2],
                ]
            )
            pivot = None
            axis = np.array([1.0, 0.0, 0.0])
            limits = (0.0, 0.35)
        handle = None
        if rng.random() < 0.25:
            hh = np.full(3, rng.uniform(0.015, 0.03))
            hh[t] = rng.uniform(0.03, 0.06)
            handle = hh
        hcenter = None
        if handle is not None:
            hcenter = center.copy()
            hcenter[t] += s * (half[t] + handle[t])
        specs.append(
            {
                "name": name,
                "kind": kind,
                "parent": parent,
                "center": center,
                "half": half,
                "axis": axis,
                "pivot": pivot,
                "limits": limits,
                "handle_center": hcenter,
                "handle_half": handle,
            }
        )
    return base_half, specs


def _spec_corner_stack(spec):
    """Child box corners plus handle corners, in link declaration order."""
    corners = [Obb(spec["center"], _EYE3, spec["half"]).corners()]
    if spec["handle_half"] is not None:
        corners.append(Obb(spec["handle_center"], _EYE3, spec["handle_half"]).corners())
    return np.vstack(corners)


def _spec_joint(spec, child_index):
    jtype = "revolute" if spec["kind"] == "door" else "prismatic"
    return Joint(
        jtype,
        parent=spec["parent"],
        child=child_index,
        axis=spec["axis"],
        pivot=spec["pivot"],
        limits=spec["limits"],
    )


def synth_object(n_parts: int, seed: int) -> ArticulatedObject:
    """Meshless cabinet stub whose joints quantize and recover exactly."""
    rng = np.random.default_rng(seed)
    base_half, specs = _boxy_specs(rng, n_parts)
    parts = [Part("base", fit_obb(Obb(np.zeros(3), _EYE3, base_half).corners()))]
    joints = []
    for idx, spec in enumerate(specs, start=1):
        parts.append(Part(spec["name"], fit_obb(_spec_corner_stack(spec))))
        joints.append(_spec_joint(spec, idx))
    return ArticulatedObject(tuple(parts), tuple(joints), root=0)


def _urdf_vec(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def write_synthetic_urdf(dirpath, n_parts: int, seed: int, name: str = "cabinet"):
    """Write a cabinet URDF with OBJ meshes; return (urdf_path, expected).

    ``expected`` is the ArticulatedObject the loader should produce: parts
    in link declaration order with handle links merged into their door or
    drawer (fixed joints), OBBs fitted to the merged corner sets, and
    world-frame joints.  Mesh vertices are stored in each link's own frame
    (revolute frames sit at the pivot, prismatic and fixed frames at the
    box center) so loading exercises the frame-composition path.
    """
    rng = np.random.default_rng(seed)
    base_half, specs = _boxy_specs(rng, n_parts)
    os.makedirs(dirpath, exist_ok=True)

    base_box = Obb(np.zeros(3), _EYE3, base_half)
    write_obj(os.path.join(dirpath, "base.obj"), obb_mesh(base_box))
    links = ['  <link name="base"><visual><geometry>'
             '<mesh filename="base.obj"/></geometry></visual></link>']
    joints_xml = []
    # Link frame origins in world coordinates, for parent-relative origins.
    frame_origin = {"base": np.zeros(3)}
    link_of_part = {0: "base"}

    expected_parts = [Part("base", fit_obb(base_box.corners()), mesh=obb_mesh(base_box))]
    expected_joints = []
    for idx, spec in enumerate(specs, start=1):
        link = spec["name"]
        link_of_part[idx] = link
        origin = spec["pivot"] if spec["kind"] == "door" else spec["center"]
        frame_origin[link] = origin
        child_mesh = obb_mesh(Obb(spec["center"], _EYE3, spec["half"]))
        local = TriMesh(child_mesh.vertices - origin, child_mesh.faces)
        write_obj(os.path.join(dirpath, f"{link}.obj"), local)
        geom = f'<geometry><mesh filename="{link}.obj"/></geometry>'
        if idx % 2 == 0:  # alternate collision/visual tags to cover both
            body = f"<collision>{geom}</collision><visual>{geom}</visual>"
        else:
            body = f"<visual>{geom}</visual>"
        links.append(f'  <link name="{link}">{body}</link>')

        parent_link = link_of_part[spec["parent"]]
        rel = origin - frame_origin[parent_link]
        jtype = "revolute" if spec["kind"] == "door" else "prismatic"
        lo, hi = spec["limits"]
        joints_xml.append(
            f'  <joint name="j_{link}" type="{jtype}">\n'
            f'    <origin xyz="{_urdf_vec(rel)}"/>\n'
            f'    <parent link="{parent_link}"/>\n'
            f'    <child link="{link}"/>\n'
            f'    <axis xyz="{_urdf_vec(spec["axis"])}"/>\n'
            f'    <limit lower="{repr(float(lo))}" upper="{repr(float(hi))}"/>\n'
            "  </joint>"
        )

        part_meshes = [child_mesh]
        if spec["handle_half"] is not None:
            hbox = Obb(spec["handle_center"], _EYE3, spec["handle_half"])
            hmesh = obb_mesh(hbox)
            hlocal = TriMesh(hmesh.vertices - spec["handle_center"], hmesh.faces)
            write_obj(os.path.join(dirpath, f"{link}_handle.obj"), hlocal)
            links.append(
                f'  <link name="{link}_handle"><visual><geometry>'
                f'<mesh filename="{link}_handle.obj"/></geometry></visual></link>'
            )
            hrel = spec["handle_center"] - origin
            joints_xml.append(
                f'  <joint name="j_{link}_handle" type="fixed">\n'
                f'    <origin xyz="{_urdf_vec(hrel)}"/>\n'
                f'    <parent link="{link}"/>\n'
                f'    <child link="{link}_handle"/>\n'
                "  </joint>"
            )
            part_meshes.append(hmesh)

        expected_parts.append(
            Part(link, fit_obb(_spec_corner_stack(spec)), mesh=merge_meshes(part_meshes))
        )
        expected_joints.append(_spec_joint(spec, idx))

    doc = (
        '<?xml version="1.0"?>\n'
        f'<robot name="{name}">\n'
        + "\n".join(links)
        + "\n"
        + "\n".join(joints_xml)
        + "\n</robot>\n"
    )
    urdf_path = os.path.join(dirpath, f"{name}.urdf")
    with open(urdf_path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    expected = ArticulatedObject(tuple(expected_parts), tuple(expected_joints), root=0)
    return urdf_path, expected


def render_boxes(view, boxes):
    """Analytic depth + part-id render of oriented boxes into a camera.

    Rays go through integer pixel centers; with the ray direction scaled
    to unit camera-frame z, the slab-method hit parameter IS the z-depth.
    Returns (depth (h, w) with 0 = miss, part_id (h, w) with -1 = miss).
    """
    from artobj.fusion import CameraView  # local import: fixture helper

    assert isinstance(view, CameraView)
    h, w = view.height, view.width
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack(
        [(uu - view.cx) / view.fx, (vv - view.cy) / view.fy, np.ones_like(uu, dtype=np.float64)],
        axis=-1,
    ).reshape(-1, 3)
    cam_to_world = view.world_to_cam.inverse()
    origin = cam_to_world.translation
    dirs = dirs_cam @ cam_to_world.rotation.T

    depth = np.full(uu.size, np.inf)
    part_id = np.full(uu.size, -1, dtype=np.int64)
    for bi, obb in enumerate(boxes):
        o = obb.rotation.T @ (origin - obb.center)
        d = dirs @ obb.rotation
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-obb.half_lengths - o) * inv
            t2 = (obb.half_lengths - o) * inv
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        # rays parallel to a slab: hit only if origin lies inside it
        parallel = np.abs(d) < 1e-14
        inside = np.abs(o) <= obb.half_lengths
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
        tmin = lo.max(axis=1)
        tmax = hi.min(axis=1)
        hit = (tmax >= np.maximum(tmin, 0.0)) & (tmin > 1e-9) & (tmin < depth)
        depth[hit] = tmin[hit]
        part_id[hit] = bi
    depth[~np.isfinite(depth)] = 0.0
    return depth.reshape(h, w), part_id.reshape(h, w)


def two_part_scene():
    """A base cube and a lid box, axis-aligned and separable by any view."""
    base = Obb([0.0, 0.0, 0.0], np.eye(3), [0.5, 0.5, 0.5])
    lid = Obb([0.0, 0.0, 0.65], np.eye(3), [0.55, 0.55, 0.15])
    return [base, lid]


def rendered_views(boxes, eyes, width=128, height=96, fx=110.0, fy=110.0,
                   confidence=(0.95, 0.9), stability=(0.97, 0.92)):
    """Render each eye position looking at the origin; masks straight from
    the GT part ids.  Returns (views, gt_id_maps)."""
    from artobj.fusion import CameraView, ScoredMask, look_at

    views, gt = [], []
    for eye in eyes:
        cam = CameraView(
            fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
            width=width, height=height, world_to_cam=look_at(eye, [0.0, 0.0, 0.0]),
        )
        depth, ids = render_boxes(cam, boxes)
        masks = [
            ScoredMask(ids == bi, confidence[bi % len(confidence)],
                       stability[bi % len(stability)])
            for bi in range(len(boxes))
        ]
        views.append(cam.with_data(depth=depth, masks=masks))
        gt.append(ids)
    return views, gt


def write_views_dir(views, out_dir):
    """Store rendered views in the on-disk layout the pipeline reads:
    <stem>.camera.json + <stem>.depth.pfm + <stem>.maskNN.png."""
    from artobj.fusion import save_camera, save_mask, write_pfm

    os.makedirs(out_dir, exist_ok=True)
    for vi, view in enumerate(views):
        stem = os.path.join(out_dir, f"view{vi:02d}")
        save_camera(view, stem + ".camera.json")
        write_pfm(stem + ".depth.pfm", view.depth)
        for mi, mask in enumerate(view.masks):
            save_mask(stem + f".mask{mi:02d}.png", mask)


def lidded_box_object():
    """Ground truth matching ``two_part_scene``: a hinge along +y on the
    lid's -x top edge, pivot exactly at that edge midpoint."""
    base, lid = two_part_scene()
    parts = (
        Part(name="base", obb=base, mesh=obb_mesh(base)),
        Part(name="lid", obb=lid, mesh=obb_mesh(lid)),
    )
    joint = Joint(type="revolute", parent=0, child=1,
                  axis=np.array([0.0, 1.0, 0.0]),
                  pivot=np.array([-0.55, 0.0, 0.8]))
    return ArticulatedObject(parts, (joint,), root=0)
