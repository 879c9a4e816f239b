"""Self-collision constraints h_i = d_i - eps with state-tangent gradients.

Two query strategies:
  * naive: narrow-phase distance for every listed collision pair
  * broadphase: one constraint per arm body, distance to the nearest base
    body found by best-first AABB-tree traversal with pruning against the
    current best (signed AABB distance is a valid lower bound, so pruning
    stays sound for penetrating configurations)

Ties between equidistant base bodies resolve to the lowest body index,
which keeps results deterministic but makes the gradient direction jump
between nearby configurations -- the documented drawback of the
broad-phase strategy.
"""

from dataclasses import dataclass, field

import numpy as np

from wbmpc import geometry
from wbmpc.backend import core as _core
from wbmpc.collision_model import CollisionModelSpec
from wbmpc.geometry import DegenerateNormalError, GeometryError, Pose
from wbmpc.kinematics import Configuration, RobotModel, forward_kinematics, point_jacobian


class SelfCollisionError(RuntimeError):
    pass


@dataclass
class ConstraintEval:
    h: float
    grad: np.ndarray
    pair: tuple
    point_a: np.ndarray
    point_b: np.ndarray


@dataclass
class SelfCollisionConfig:
    epsilon: float = 0.1  # minimum allowed distance per pair
    strategy: str = "naive"  # naive | broadphase
    model: str = "simplified"  # detailed | simplified

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")


@dataclass
class PackedSelf:
    """Cached kernel arrays for one (robot, collision spec) pair."""

    robot: RobotModel
    spec: CollisionModelSpec
    bodies: tuple = field(default=None)
    pairs: np.ndarray = field(default=None)
    arm: np.ndarray = field(default=None)
    base: np.ndarray = field(default=None)

    @staticmethod
    def build(robot: RobotModel, spec: CollisionModelSpec) -> "PackedSelf":
        bodies, pairs, arm, base = spec.packed(robot)
        return PackedSelf(robot, spec, bodies, pairs, arm, base)


def _repair_pair(packed: PackedSelf, q: Configuration, ia: int, ib: int):
    """Resolve one pair through the full EPA-capable python path."""
    spec = packed.spec
    a, b = spec.bodies[ia], spec.bodies[ib]
    frames = forward_kinematics(packed.robot, q)
    pose_a = frames.pose_of(a.link).compose(a.local_pose)
    pose_b = frames.pose_of(b.link).compose(b.local_pose)
    try:
        res = geometry.pair_distance(a.shape, pose_a, b.shape, pose_b)
    except GeometryError as err:
        raise SelfCollisionError(
            f"pair ({a.body_name}, {b.body_name}): {err}"
        ) from err
    axis = res.normal if res.signed_distance > 0.0 else -res.normal
    JA = point_jacobian(
        packed.robot, q, a.link,
        frames.pose_of(a.link).inverse().transform_point(res.point_a), frames=frames,
    )
    JB = point_jacobian(
        packed.robot, q, b.link,
        frames.pose_of(b.link).inverse().transform_point(res.point_b), frames=frames,
    )
    grad = axis @ (JA - JB)
    return res.signed_distance, grad, res.point_a, res.point_b


def evaluate_naive(
    robot: RobotModel,
    spec: CollisionModelSpec,
    q: Configuration,
    config: SelfCollisionConfig = SelfCollisionConfig(),
    packed: PackedSelf | None = None,
    want_grad: bool = True,
) -> list:
    """One ConstraintEval per listed collision pair."""
    q.check(robot)
    if packed is None:
        packed = PackedSelf.build(robot, spec)
    eps = np.full(len(packed.pairs), config.epsilon)
    h, grad, status, wa, wb = _core.self_pairs_eval(
        *robot.packed.tuple(), *packed.bodies, packed.pairs,
        q.base_pose.rotation, q.base_pose.translation, q.joint_positions,
        eps, 1 if want_grad else 0,
    )
    out = []
    for k, (ia, ib) in enumerate(packed.pairs):
        names = (spec.bodies[ia].body_name, spec.bodies[ib].body_name)
        if status[k] != 0:
            d, g, pa, pb = _repair_pair(packed, q, int(ia), int(ib))
            out.append(ConstraintEval(d - config.epsilon, g, names, pa, pb))
        else:
            out.append(ConstraintEval(float(h[k]), grad[k], names, wa[k], wb[k]))
    return out


def _broadphase_fallback(packed: PackedSelf, q: Configuration, ia: int, eps: float):
    """Exact per-arm-body minimum over all base bodies (EPA-capable)."""
    best = None
    for b in packed.base:
        d, g, pa, pb = _repair_pair(packed, q, ia, int(b))
        if best is None or d < best[0] or (d == best[0] and b < best[4]):
            best = (d, g, pa, pb, int(b))
    d, g, pa, pb, ib = best
    names = (packed.spec.bodies[ia].body_name, packed.spec.bodies[ib].body_name)
    return ConstraintEval(d - eps, g, names, pa, pb)


def evaluate_broadphase(
    robot: RobotModel,
    spec: CollisionModelSpec,
    q: Configuration,
    config: SelfCollisionConfig = SelfCollisionConfig(),
    packed: PackedSelf | None = None,
    want_grad: bool = True,
) -> list:
    """One ConstraintEval per arm body against the nearest base body."""
    q.check(robot)
    if packed is None:
        packed = PackedSelf.build(robot, spec)
    if packed.base.size == 0:
        raise SelfCollisionError("empty base group")
    if packed.arm.size == 0:
        raise SelfCollisionError("empty arm group")
    eps = np.full(len(packed.arm), config.epsilon)
    h, grad, winner, status, wa, wb = _core.self_broadphase_eval(
        *robot.packed.tuple(), *packed.bodies, packed.arm, packed.base,
        q.base_pose.rotation, q.base_pose.translation, q.joint_positions,
        eps, 1 if want_grad else 0,
    )
    out = []
    for k, ia in enumerate(packed.arm):
        arm_name = spec.bodies[ia].body_name
        if status[k] != 0:
            out.append(_broadphase_fallback(packed, q, int(ia), config.epsilon))
            continue
        names = (arm_name, spec.bodies[winner[k]].body_name)
        out.append(ConstraintEval(float(h[k]), grad[k], names, wa[k], wb[k]))
    return out


def evaluate(
    robot: RobotModel,
    spec: CollisionModelSpec,
    q: Configuration,
    config: SelfCollisionConfig = SelfCollisionConfig(),
    packed: PackedSelf | None = None,
    want_grad: bool = True,
) -> list:
    if config.strategy == "broadphase":
        return evaluate_broadphase(robot, spec, q, config, packed, want_grad)
    return evaluate_naive(robot, spec, q, config, packed, want_grad)
