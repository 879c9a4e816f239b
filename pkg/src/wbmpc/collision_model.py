"""Collision bodies attached to robot links, pair sets, and sphere covers.

The collision-model document is JSON:

    {"bodies": [{"name": ..., "link": ..., "group": "arm"|"base",
                 "shape": {"type": ..., ...dims},
                 "origin": {"xyz": [...], "rpy": [...]},
                 "delta_max": optional}, ...],
     "pairs": "arm_x_base" | [[name, name], ...]}

Sphere decomposition covers a primitive with equal-radius spheres whose
surfaces protrude at most delta_max beyond the primitive surface.
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wbmpc.geometry import Box, Capsule, Cylinder, Pose, Primitive, Sphere
from wbmpc.kinematics import FrameSet, RobotModel
from wbmpc import so3


class CollisionModelError(ValueError):
    pass


@dataclass
class AttachedPrimitive:
    link: str
    local_pose: Pose
    shape: Primitive
    body_name: str
    group: str = "base"
    delta_max: float | None = None


@dataclass
class CollisionModelSpec:
    bodies: list
    pairs: list  # (body_name, body_name) tuples
    _by_name: dict = field(default_factory=dict, repr=False)

    def body(self, name: str) -> AttachedPrimitive:
        return self._by_name[name]

    def group(self, tag: str) -> list:
        return [b for b in self.bodies if b.group == tag]

    def packed(self, robot: RobotModel):
        """Flat body arrays + pair index array for the kernels."""
        B = len(self.bodies)
        blink = np.empty(B, dtype=np.int32)
        btype = np.empty(B, dtype=np.int32)
        bparams = np.zeros((B, 4))
        bq = np.zeros((B, 4))
        bt = np.zeros((B, 3))
        for k, b in enumerate(self.bodies):
            blink[k] = robot.link_index(b.link)
            btype[k] = b.shape.ptype
            bparams[k] = b.shape.params
            bq[k] = b.local_pose.rotation
            bt[k] = b.local_pose.translation
        idx = {b.body_name: k for k, b in enumerate(self.bodies)}
        pairs = np.array(
            [(idx[a], idx[b]) for a, b in self.pairs], dtype=np.int32
        ).reshape(-1, 2)
        arm = np.array(
            [k for k, b in enumerate(self.bodies) if b.group == "arm"], dtype=np.int32
        )
        base = np.array(
            [k for k, b in enumerate(self.bodies) if b.group == "base"], dtype=np.int32
        )
        return (blink, btype, bparams, bq, bt), pairs, arm, base


_SHAPE_PARSERS = {
    "sphere": lambda d: Sphere(float(d["radius"])),
    "box": lambda d: Box(tuple(d["half_extents"])),
    "cylinder": lambda d: Cylinder(float(d["radius"]), float(d["half_length"])),
    "capsule": lambda d: Capsule(float(d["radius"]), float(d["half_length"])),
}


def _parse_shape(doc) -> Primitive:
    t = doc.get("type")
    if t not in _SHAPE_PARSERS:
        raise CollisionModelError(f"unknown shape type: {t}")
    return _SHAPE_PARSERS[t](doc)


def _parse_pose(doc) -> Pose:
    xyz = np.asarray(doc.get("xyz", (0, 0, 0)), dtype=float)
    rpy = doc.get("rpy", (0, 0, 0))
    return Pose(xyz, so3.quat_from_rpy(*rpy))


def load_collision_model(document, robot: RobotModel) -> CollisionModelSpec:
    """Parse and validate a collision-model document against a robot."""
    if isinstance(document, (str, Path)):
        p = Path(document)
        doc = json.loads(p.read_text()) if p.exists() else json.loads(str(document))
    else:
        doc = document
    bodies = []
    names = set()
    for b in doc.get("bodies", []):
        name = b.get("name")
        if name in names:
            raise CollisionModelError(f"duplicate body name: {name}")
        names.add(name)
        link = b.get("link")
        robot.link_index(link)  # raises on unknown link
        bodies.append(
            AttachedPrimitive(
                link=link,
                local_pose=_parse_pose(b.get("origin", {})),
                shape=_parse_shape(b.get("shape", {})),
                body_name=name,
                group=b.get("group", "base"),
                delta_max=b.get("delta_max"),
            )
        )
    pairs_doc = doc.get("pairs", [])
    if pairs_doc == "arm_x_base":
        arm = [b.body_name for b in bodies if b.group == "arm"]
        base = [b.body_name for b in bodies if b.group == "base"]
        pairs = [(a, b) for a in arm for b in base]
    else:
        pairs = [tuple(p) for p in pairs_doc]
        for a, b in pairs:
            if a not in names or b not in names:
                raise CollisionModelError(f"pair references unknown body: {a}, {b}")
            if a == b:
                raise CollisionModelError(f"self pair not allowed: {a}")
    spec = CollisionModelSpec(bodies, pairs)
    spec._by_name = {b.body_name: b for b in bodies}
    return spec


# ---------------------------------------------------------------------------
# sphere decomposition


@dataclass
class SphereSet:
    links: list
    centers: np.ndarray  # (n, 3)
    radii: np.ndarray  # (n,)

    def __len__(self):
        return len(self.radii)

    @staticmethod
    def concat(parts: list) -> "SphereSet":
        links = [l for p in parts for l in p.links]
        centers = (
            np.vstack([p.centers for p in parts]) if parts else np.zeros((0, 3))
        )
        radii = np.concatenate([p.radii for p in parts]) if parts else np.zeros(0)
        return SphereSet(links, centers, radii)


def decompose_primitive(shape: Primitive, delta_max: float) -> SphereSet:
    """Cover a primitive's volume with equal-radius spheres (local frame).

    No sphere surface exceeds the primitive surface by more than delta_max.
    """
    if not delta_max > 0.0:
        raise CollisionModelError("delta_max must be positive")
    if isinstance(shape, Sphere):
        return SphereSet([""], np.zeros((1, 3)), np.array([shape.radius]))
    if isinstance(shape, Box):
        return _decompose_box(np.asarray(shape.half_extents), delta_max)
    if isinstance(shape, Cylinder):
        return _decompose_cylinder(shape.radius, shape.half_length, delta_max)
    raise CollisionModelError(f"unsupported shape variant: {type(shape).__name__}")


def _decompose_box(h: np.ndarray, delta: float) -> SphereSet:
    # grid of sub-cells; radius = half-diagonal of a cell (guarantees cover);
    # worst protrusion is along a face normal of an outer cell: r - min(c)
    nmax = [int(np.ceil(2.0 * h[i] / delta)) + 1 for i in range(3)]
    grids = sorted(
        itertools.product(*(range(1, nmax[i] + 1) for i in range(3))),
        key=lambda n: (
            n[0] * n[1] * n[2],
            float(np.linalg.norm(h / np.array(n, dtype=float))),
            n,
        ),
    )
    for n in grids:
        c = h / np.array(n, dtype=float)
        r = float(np.linalg.norm(c))
        if r - float(c.min()) <= delta:
            axes = [(-h[i] + (2 * k + 1) * c[i] for k in range(n[i])) for i in range(3)]
            centers = np.array(list(itertools.product(*axes)))
            return SphereSet([""] * len(centers), centers, np.full(len(centers), r))
    raise CollisionModelError("no feasible box decomposition")


def _decompose_cylinder(r: float, hl: float, delta: float) -> SphereSet:
    # k spheres on the axis, half-spacing s = hl/k, radius sqrt(r^2 + s^2);
    # protrusion is max(R - r, R - s) (radial bulge / end-cap overhang),
    # which is not monotone in k, so scan from the smallest count
    for k in range(1, 10001):
        s = hl / k
        R = float(np.hypot(r, s))
        if max(R - r, R - s) <= delta:
            z = np.array([-hl + (2 * j + 1) * s for j in range(k)])
            centers = np.zeros((k, 3))
            centers[:, 2] = z
            return SphereSet([""] * k, centers, np.full(k, R))
    raise CollisionModelError("no feasible cylinder decomposition")


def build_sphere_set(
    spec: CollisionModelSpec, default_delta: float | None = None
) -> SphereSet:
    """Decompose every body of a collision model into link-attached spheres."""
    parts = []
    for b in spec.bodies:
        delta = b.delta_max if b.delta_max is not None else default_delta
        if delta is None:
            raise CollisionModelError(
                f"body {b.body_name} has no delta_max and no default given"
            )
        local = decompose_primitive(b.shape, delta)
        centers = np.array(
            [b.local_pose.transform_point(c) for c in local.centers]
        ).reshape(-1, 3)
        parts.append(SphereSet([b.link] * len(local), centers, local.radii.copy()))
    return SphereSet.concat(parts)


def pack_spheres(spheres: SphereSet, robot: RobotModel):
    slink = np.array([robot.link_index(l) for l in spheres.links], dtype=np.int32)
    return slink, np.ascontiguousarray(spheres.centers), np.ascontiguousarray(spheres.radii)


def sphere_centers_world(spheres: SphereSet, frames: FrameSet) -> np.ndarray:
    """World-frame center of every sphere."""
    out = np.empty((len(spheres), 3))
    for k, (link, c) in enumerate(zip(spheres.links, spheres.centers)):
        out[k] = frames.position_of(link, c)
    return out
