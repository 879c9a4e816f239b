"""Kinematic tree of a floating-base robot.

Robot documents are JSON:

    {"links": [{"name": ..., "parent": ..., "joint": {"type": ...,
                "axis": [...], "origin": {"xyz": [...], "rpy": [...]}}}],
     "end_effector": ...}

The root link carries the single floating joint; revolute and prismatic
joints contribute one generalized coordinate each, in document order.
Configuration-space tangents are (base linear velocity in world frame,
base angular velocity in body frame, joint rates).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from wbmpc import so3
from wbmpc.backend import core as _core
from wbmpc.geometry import Pose

JOINT_TYPES = {"fixed": 0, "revolute": 1, "prismatic": 2, "floating": 3}


class ModelError(ValueError):
    pass


@dataclass
class Joint:
    type: str
    axis: np.ndarray
    origin: Pose


@dataclass
class Link:
    name: str
    parent: str | None
    joint: Joint


@dataclass
class PackedModel:
    """Flat arrays consumed by the query kernels."""

    parents: np.ndarray
    jtypes: np.ndarray
    jaxes: np.ndarray
    oq: np.ndarray
    ot: np.ndarray
    qmap: np.ndarray

    def tuple(self):
        return (self.parents, self.jtypes, self.jaxes, self.oq, self.ot, self.qmap)


@dataclass
class RobotModel:
    links: list
    end_effector_link: str
    _index: dict = field(default_factory=dict, repr=False)
    _packed: PackedModel | None = field(default=None, repr=False)

    @property
    def n_joints(self) -> int:
        return sum(1 for l in self.links if l.joint.type in ("revolute", "prismatic"))

    @property
    def dofs(self) -> int:
        """Tangent-space dimension: 6 base + actuated joints."""
        return 6 + self.n_joints

    def link_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown link: {name}") from None

    @property
    def packed(self) -> PackedModel:
        return self._packed


@dataclass
class Configuration:
    base_pose: Pose
    joint_positions: np.ndarray

    def __post_init__(self):
        self.joint_positions = np.atleast_1d(
            np.asarray(self.joint_positions, dtype=float)
        )

    def check(self, model: RobotModel):
        if self.joint_positions.shape != (model.n_joints,):
            raise ModelError(
                f"configuration has {self.joint_positions.shape[0]} joint "
                f"positions, model needs {model.n_joints}"
            )


@dataclass
class FrameSet:
    """World pose of every link, plus the raw arrays for the kernels."""

    names: list
    lq: np.ndarray
    lt: np.ndarray
    _index: dict

    def pose_of(self, link: str) -> Pose:
        i = self._index[link]
        return Pose(self.lt[i].copy(), self.lq[i].copy())

    def position_of(self, link: str, local_point=(0.0, 0.0, 0.0)) -> np.ndarray:
        i = self._index[link]
        return self.lt[i] + so3.quat_rotate(self.lq[i], np.asarray(local_point, float))


def _parse_origin(doc) -> Pose:
    xyz = np.asarray(doc.get("xyz", (0.0, 0.0, 0.0)), dtype=float)
    rpy = doc.get("rpy", (0.0, 0.0, 0.0))
    return Pose(xyz, so3.quat_from_rpy(*rpy))


def load_model(document) -> RobotModel:
    """Build a RobotModel from a document dict, JSON string, or file path."""
    if isinstance(document, (str, Path)):
        p = Path(document)
        doc = json.loads(p.read_text()) if p.exists() else json.loads(str(document))
    else:
        doc = document
    if "links" not in doc:
        raise ModelError("document missing 'links'")
    raw = doc["links"]
    names = [l.get("name") for l in raw]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})[0]
        raise ModelError(f"duplicate link name: {dup}")
    by_name = dict(zip(names, raw))

    links: list[Link] = []
    for l in raw:
        j = l.get("joint", {})
        jtype = j.get("type", "fixed")
        if jtype not in JOINT_TYPES:
            raise ModelError(f"unknown joint type: {jtype}")
        axis = np.asarray(j.get("axis", (0.0, 0.0, 1.0)), dtype=float)
        if jtype in ("revolute", "prismatic"):
            n = np.linalg.norm(axis)
            if abs(n - 1.0) > 1e-6:
                raise ModelError(f"joint axis of {l['name']} must be unit norm")
            axis = axis / n
        origin = _parse_origin(j.get("origin", {}))
        parent = l.get("parent") or None
        links.append(Link(l["name"], parent, Joint(jtype, axis, origin)))

    roots = [l for l in links if l.parent is None]
    if len(roots) != 1 or roots[0].joint.type != "floating":
        raise ModelError("model needs exactly one floating root link")
    if any(l.joint.type == "floating" for l in links if l.parent is not None):
        raise ModelError("floating joint allowed only at the root")
    root = roots[0]
    if (
        np.linalg.norm(root.joint.origin.translation) > 1e-12
        or abs(root.joint.origin.rotation[0] - 1.0) > 1e-12
    ):
        raise ModelError("floating root joint must have identity origin")

    for l in links:
        if l.parent is not None and l.parent not in by_name:
            raise ModelError(f"unknown parent: {l.parent}")

    # topological order by DFS from the root, document order within siblings
    children: dict = {l.name: [] for l in links}
    for l in links:
        if l.parent is not None:
            children[l.parent].append(l.name)
    ordered: list[Link] = []
    seen = set()
    stack = [root.name]
    lut = {l.name: l for l in links}
    while stack:
        name = stack.pop(0)
        if name in seen:
            raise ModelError("cycle detected")
        seen.add(name)
        ordered.append(lut[name])
        stack = children[name] + stack
    if len(ordered) != len(links):
        raise ModelError("cycle detected")

    ee = doc.get("end_effector")
    if ee is None or ee not in by_name:
        raise ModelError(f"unknown end effector link: {ee}")

    model = RobotModel(ordered, ee)
    model._index = {l.name: i for i, l in enumerate(ordered)}
    model._packed = _pack(model)
    return model


def _pack(model: RobotModel) -> PackedModel:
    L = len(model.links)
    parents = np.empty(L, dtype=np.int32)
    jtypes = np.empty(L, dtype=np.int32)
    jaxes = np.zeros((L, 3))
    oq = np.zeros((L, 4))
    ot = np.zeros((L, 3))
    qmap = np.full(L, -1, dtype=np.int32)
    nq = 0
    for i, l in enumerate(model.links):
        parents[i] = -1 if l.parent is None else model._index[l.parent]
        jtypes[i] = JOINT_TYPES[l.joint.type]
        jaxes[i] = l.joint.axis
        oq[i] = l.joint.origin.rotation
        ot[i] = l.joint.origin.translation
        if l.joint.type in ("revolute", "prismatic"):
            qmap[i] = nq
            nq += 1
    return PackedModel(parents, jtypes, jaxes, oq, ot, qmap)


def forward_kinematics(model: RobotModel, q: Configuration) -> FrameSet:
    """World pose of every link."""
    q.check(model)
    lq, lt = _core.fk_links(
        *model.packed.tuple(),
        q.base_pose.rotation,
        q.base_pose.translation,
        q.joint_positions,
    )
    return FrameSet([l.name for l in model.links], lq, lt, model._index)


def point_jacobian(
    model: RobotModel,
    q: Configuration,
    link: str,
    local_point=(0.0, 0.0, 0.0),
    frames: FrameSet | None = None,
) -> np.ndarray:
    """3 x (6+n_a) Jacobian of a link-fixed point's world position.

    Columns map (v_world, omega_body, qdot) to the point's world velocity;
    equivalently, the derivative of the point w.r.t. the local state tangent.
    """
    if frames is None:
        frames = forward_kinematics(model, q)
    i = model.link_index(link)
    p_world = frames.position_of(link, local_point)
    pk = model.packed
    return _core.point_jacobian_arrays(
        pk.parents, pk.jtypes, pk.jaxes, pk.qmap,
        frames.lq, frames.lt, i, p_world, model.n_joints,
    )


def configuration_distance(a: Configuration, b: Configuration) -> float:
    """Translation + geodesic rotation + joint-space distance (warm starts)."""
    dt = float(np.linalg.norm(a.base_pose.translation - b.base_pose.translation))
    da = so3.quat_geodesic(a.base_pose.rotation, b.base_pose.rotation)
    dj = float(np.linalg.norm(a.joint_positions - b.joint_positions))
    return dt + da + dj
