import json
from importlib import resources

import numpy as np
import pytest

from wbmpc import kinematics
from wbmpc.collision_model import load_collision_model
from wbmpc.geometry import Pose
from wbmpc.kinematics import Configuration, load_model


def fixture_doc(name: str):
    return json.loads(
        resources.files("wbmpc").joinpath(f"fixtures/{name}").read_text()
    )


@pytest.fixture(scope="session")
def robot():
    return load_model(fixture_doc("robot.json"))


@pytest.fixture(scope="session")
def detailed_spec(robot):
    return load_collision_model(fixture_doc("collision_detailed.json"), robot)


@pytest.fixture(scope="session")
def simplified_spec(robot):
    return load_collision_model(fixture_doc("collision_simplified.json"), robot)


@pytest.fixture(scope="session")
def sphere_spec(robot):
    return load_collision_model(fixture_doc("sphere_model.json"), robot)


def random_configuration(rng, robot, span=0.5):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Configuration(
        Pose(rng.uniform(-span, span, 3), q),
        rng.uniform(-np.pi, np.pi, robot.n_joints),
    )


def retract(q: Configuration, delta: np.ndarray) -> Configuration:
    """Perturb a configuration along the local state tangent."""
    from wbmpc import so3

    dq = so3.so3_exp(delta[3:6])
    return Configuration(
        Pose(
            q.base_pose.translation + delta[:3],
            so3.quat_normalize(so3.quat_mul(q.base_pose.rotation, dq)),
        ),
        q.joint_positions + delta[6:],
    )
