"""Convex primitives, poses, and pairwise signed-distance queries.

Distances are positive for separated pairs and equal to the negated
penetration depth for overlapping ones. Closest (or deepest) witness points
and the contact normal are always populated; the normal follows the
convention normal = (point_a - point_b) / ||point_a - point_b||.

Sphere-sphere, sphere-capsule and capsule-capsule pairs are resolved by
exact closed forms. Everything else runs margin-reduced GJK, with EPA
resolving core penetrations. Cylinder penetration depth is measured on a
capsule over-approximation and flagged `conservative` in the result.
"""

from dataclasses import dataclass, field

import numpy as np

from wbmpc import _epa, so3
from wbmpc.backend import core as _core
from wbmpc._core_py import (
    PAIR_DEGENERATE,
    PAIR_NEEDS_EPA,
    PAIR_NO_CONVERGENCE,
    SHAPE_BOX,
    SHAPE_CAPSULE,
    SHAPE_CYLINDER,
    SHAPE_SPHERE,
    _core_of,
)


class GeometryError(Exception):
    """Base class for distance-query failures."""


class DegenerateNormalError(GeometryError):
    """No contact normal can be defined (e.g. coincident identical shapes)."""


class GjkConvergenceError(GeometryError):
    """GJK hit its iteration cap; carries the best proven lower bound."""

    def __init__(self, message: str, lower_bound: float):
        super().__init__(message)
        self.lower_bound = lower_bound


@dataclass
class Pose:
    """World placement: translation (m) and unit quaternion (w, x, y, z)."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=so3.quat_identity)

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if self.rotation.shape != (4,):
            raise ValueError("rotation must be a quaternion (w, x, y, z)")
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise ValueError("quaternion must be unit norm")

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_xyz_rpy(xyz, rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(np.asarray(xyz, dtype=float), so3.quat_from_rpy(*rpy))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.translation + so3.quat_rotate(self.rotation, other.translation),
            so3.quat_normalize(so3.quat_mul(self.rotation, other.rotation)),
        )

    def inverse(self) -> "Pose":
        qi = so3.quat_conj(self.rotation)
        return Pose(-so3.quat_rotate(qi, self.translation), qi)

    def transform_point(self, p) -> np.ndarray:
        return self.translation + so3.quat_rotate(self.rotation, np.asarray(p, float))

    def rotation_matrix(self) -> np.ndarray:
        return so3.quat_to_mat(self.rotation)


def _check_positive(name, *vals):
    for v in vals:
        if not v > 0.0:
            raise ValueError(f"{name} dimensions must be positive")


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        _check_positive("sphere", self.radius)

    ptype = SHAPE_SPHERE

    @property
    def params(self):
        return np.array([self.radius, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class Box:
    half_extents: tuple

    def __post_init__(self):
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))
        if len(self.half_extents) != 3:
            raise ValueError("box needs 3 half extents")
        _check_positive("box", *self.half_extents)

    ptype = SHAPE_BOX

    @property
    def params(self):
        return np.array([*self.half_extents, 0.0])


@dataclass(frozen=True)
class Cylinder:
    radius: float
    half_length: float

    def __post_init__(self):
        _check_positive("cylinder", self.radius, self.half_length)

    ptype = SHAPE_CYLINDER

    @property
    def params(self):
        return np.array([self.radius, self.half_length, 0.0, 0.0])


@dataclass(frozen=True)
class Capsule:
    radius: float
    half_length: float

    def __post_init__(self):
        _check_positive("capsule", self.radius, self.half_length)

    ptype = SHAPE_CAPSULE

    @property
    def params(self):
        return np.array([self.radius, self.half_length, 0.0, 0.0])


Primitive = Sphere | Box | Cylinder | Capsule


@dataclass
class DistanceResult:
    signed_distance: float
    point_a: np.ndarray
    point_b: np.ndarray
    normal: np.ndarray
    conservative: bool = False


@dataclass
class Aabb:
    min: np.ndarray
    max: np.ndarray


def support_point(primitive: Primitive, pose: Pose, direction) -> np.ndarray:
    """Farthest point of the posed primitive along a world direction."""
    direction = np.asarray(direction, dtype=float)
    if np.linalg.norm(direction) <= 1e-12:
        raise ValueError("degenerate direction")
    d_local = so3.quat_rotate(so3.quat_conj(pose.rotation), direction)
    s = _core.support_point_local(primitive.ptype, primitive.params, d_local)
    return pose.transform_point(s)


def aabb_of(primitive: Primitive, pose: Pose) -> Aabb:
    """Axis-aligned bounding box of the posed primitive (tight)."""
    lo, hi = _core.aabb_of_posed(
        primitive.ptype, primitive.params, pose.rotation, pose.translation
    )
    return Aabb(np.asarray(lo), np.asarray(hi))


def _effective(primitive: Primitive) -> Primitive:
    if primitive.ptype == SHAPE_CYLINDER:
        return Capsule(primitive.radius, primitive.half_length)
    return primitive


def pair_distance(a: Primitive, pose_a: Pose, b: Primitive, pose_b: Pose) -> DistanceResult:
    """Signed distance, witness points, and normal between two primitives."""
    if (
        type(a) is type(b)
        and np.array_equal(a.params, b.params)
        and np.linalg.norm(pose_a.translation - pose_b.translation) < 1e-12
    ):
        raise DegenerateNormalError("degenerate normal")

    st, dist, pa, pb, cons, axis, sm, sa, sb, ns, lower = _core.pair_distance_raw(
        a.ptype, a.params, pose_a.rotation, pose_a.translation,
        b.ptype, b.params, pose_b.rotation, pose_b.translation,
    )
    if st == PAIR_DEGENERATE:
        raise DegenerateNormalError("degenerate normal")
    if st == PAIR_NO_CONVERGENCE:
        raise GjkConvergenceError(
            f"GJK did not converge; distance >= {max(lower, 0.0):.6g}",
            lower_bound=max(float(lower), 0.0),
        )
    if st == PAIR_NEEDS_EPA:
        return _resolve_epa(a, pose_a, b, pose_b, cons, sm, sa, sb, ns)
    return _finish(
        float(dist), np.asarray(pa), np.asarray(pb), np.asarray(axis), bool(cons)
    )


def _finish(dist, pa, pb, axis, conservative) -> DistanceResult:
    # normal = (pa - pb)/||..||, i.e. the separation axis flipped on overlap
    normal = axis if dist > 0.0 else -axis
    return DistanceResult(dist, pa, pb, normal, conservative)


def _resolve_epa(a, pose_a, b, pose_b, cons, sm, sa, sb, ns) -> DistanceResult:
    ea, eb = _effective(a), _effective(b)
    conservative = bool(cons) or (ea is not a) or (eb is not b)
    core_a, cp_a, ma = _core_of(ea.ptype, ea.params)
    core_b, cp_b, mb = _core_of(eb.ptype, eb.params)
    try:
        depth, nrm, pa_c, pb_c = _epa.penetration(
            core_a, cp_a, pose_a.rotation, pose_a.translation,
            core_b, cp_b, pose_b.rotation, pose_b.translation,
            sm, sa, sb, ns,
        )
    except _epa.EpaFailure as err:
        raise DegenerateNormalError(f"degenerate normal ({err})") from err
    sep = -nrm  # translating A along sep separates the pair
    signed = -(depth + ma + mb)
    pa = pa_c - ma * sep
    pb = pb_c + mb * sep
    return _finish(float(signed), pa, pb, sep, conservative)
