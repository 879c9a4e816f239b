import numpy as np
import pytest

from conftest import random_configuration, retract
from wbmpc import geometry
from wbmpc.collision_model import load_collision_model
from wbmpc.geometry import Pose
from wbmpc.kinematics import Configuration, forward_kinematics
from wbmpc.self_collision import (
    PackedSelf,
    SelfCollisionConfig,
    SelfCollisionError,
    evaluate_broadphase,
    evaluate_naive,
)


def brute_pair_distance(robot, spec, q, a, b):
    """Independent per-pair distance via the python geometry API."""
    frames = forward_kinematics(robot, q)
    pa = frames.pose_of(a.link).compose(a.local_pose)
    pb = frames.pose_of(b.link).compose(b.local_pose)
    return geometry.pair_distance(a.shape, pa, b.shape, pb).signed_distance


def test_simplified_six_evaluations(robot, simplified_spec):
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    evals = evaluate_naive(robot, simplified_spec, q)
    assert len(evals) == 6


def test_detailed_thirtynine_evaluations(robot, detailed_spec):
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    evals = evaluate_naive(robot, detailed_spec, q)
    assert len(evals) == 39


def test_zero_config_is_collision_free(robot, detailed_spec, simplified_spec):
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    for spec in (detailed_spec, simplified_spec):
        for c in evaluate_naive(robot, spec, q):
            assert c.h + 0.1 > 0.0, f"{c.pair} penetrates at zero config"


def test_min_h_matches_bruteforce(robot, detailed_spec):
    rng = np.random.default_rng(3)
    cfg = SelfCollisionConfig()
    for _ in range(20):
        q = random_configuration(rng, robot)
        evals = evaluate_naive(robot, detailed_spec, q, cfg)
        got = min(c.h for c in evals)
        spec_bodies = {b.body_name: b for b in detailed_spec.bodies}
        ds = [
            brute_pair_distance(robot, detailed_spec, q, spec_bodies[a], spec_bodies[b])
            for a, b in detailed_spec.pairs
        ]
        assert got == pytest.approx(min(ds) - cfg.epsilon, abs=1e-9)


def fd_rows(robot, spec, q, cfg, packed, k, step):
    fd = np.empty(robot.dofs)
    for i in range(robot.dofs):
        e = np.zeros(robot.dofs)
        e[i] = step
        hp = evaluate_naive(robot, spec, retract(q, e), cfg, packed, want_grad=False)[k].h
        hm = evaluate_naive(robot, spec, retract(q, -e), cfg, packed, want_grad=False)[k].h
        fd[i] = (hp - hm) / (2 * step)
    return fd


def test_gradient_matches_finite_differences(robot, simplified_spec):
    # central differences of d over the state tangent, step 1e-6; witness
    # switch points (kinks of d) are detected by a two-step FD disagreement
    # and skipped, matching the smoothness qualifier of the contract
    rng = np.random.default_rng(5)
    cfg = SelfCollisionConfig()
    packed = PackedSelf.build(robot, simplified_spec)
    checked = 0
    while checked < 100:
        q = random_configuration(rng, robot)
        evals = evaluate_naive(robot, simplified_spec, q, cfg, packed)
        if any(abs(c.h + cfg.epsilon) < 5e-3 for c in evals):
            continue  # skip near-contact configurations
        for k, c in enumerate(evals):
            fd = fd_rows(robot, simplified_spec, q, cfg, packed, k, 1e-6)
            fd_coarse = fd_rows(robot, simplified_spec, q, cfg, packed, k, 3e-5)
            if np.abs(fd - fd_coarse).max() > 1e-5 * max(1.0, np.abs(fd).max()):
                continue  # kink: witness point switches within the stencil
            scale = max(1.0, np.abs(fd).max())
            assert np.abs(c.grad - fd).max() <= 1e-4 * scale, c.pair
        checked += 1


def test_broadphase_counts(robot, detailed_spec, simplified_spec):
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    assert len(evaluate_broadphase(robot, detailed_spec, q)) == 3
    assert len(evaluate_broadphase(robot, simplified_spec, q)) == 2


def test_broadphase_equals_naive_minimum(robot, detailed_spec, simplified_spec):
    rng = np.random.default_rng(7)
    cfg = SelfCollisionConfig()
    for spec in (detailed_spec, simplified_spec):
        packed = PackedSelf.build(robot, spec)
        arm_names = [b.body_name for b in spec.group("arm")]
        for _ in range(250):
            q = random_configuration(rng, robot)
            bp = evaluate_broadphase(robot, spec, q, cfg, packed)
            naive = evaluate_naive(robot, spec, q, cfg, packed)
            for c in bp:
                arm = c.pair[0]
                best = min(n.h for n in naive if n.pair[0] == arm)
                assert c.h == pytest.approx(best, abs=1e-9)
            assert [c.pair[0] for c in bp] == arm_names


def test_broadphase_tie_breaks_to_lowest_index(robot):
    # two base spheres exactly mirrored about the arm body
    doc = {
        "bodies": [
            {"name": "left", "link": "base", "group": "base",
             "shape": {"type": "sphere", "radius": 0.1},
             "origin": {"xyz": [0.0, 0.5, 0.0]}},
            {"name": "right", "link": "base", "group": "base",
             "shape": {"type": "sphere", "radius": 0.1},
             "origin": {"xyz": [0.0, -0.5, 0.0]}},
            {"name": "probe", "link": "base", "group": "arm",
             "shape": {"type": "sphere", "radius": 0.05},
             "origin": {"xyz": [0.3, 0.0, 0.0]}},
        ],
        "pairs": "arm_x_base",
    }
    spec = load_collision_model(doc, robot)
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    evals = evaluate_broadphase(robot, spec, q)
    assert len(evals) == 1
    assert evals[0].pair == ("probe", "left")  # lowest body index wins


def test_empty_base_group_error(robot):
    doc = {
        "bodies": [
            {"name": "probe", "link": "base", "group": "arm",
             "shape": {"type": "sphere", "radius": 0.05}}
        ],
        "pairs": [],
    }
    spec = load_collision_model(doc, robot)
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    with pytest.raises(SelfCollisionError, match="empty base group"):
        evaluate_broadphase(robot, spec, q)


def test_degenerate_pair_error_names_pair(robot):
    doc = {
        "bodies": [
            {"name": "one", "link": "base", "group": "base",
             "shape": {"type": "sphere", "radius": 0.2}},
            {"name": "two", "link": "base", "group": "arm",
             "shape": {"type": "sphere", "radius": 0.2}},
        ],
        "pairs": [["two", "one"]],
    }
    spec = load_collision_model(doc, robot)
    q = Configuration(Pose.identity(), np.zeros(robot.n_joints))
    with pytest.raises(SelfCollisionError, match=r"\(two, one\)"):
        evaluate_naive(robot, spec, q)


def test_penetrating_gradient_pushes_apart(robot, simplified_spec):
    # gradient ascent on h must reduce penetration for most samples
    rng = np.random.default_rng(11)
    cfg = SelfCollisionConfig()
    packed = PackedSelf.build(robot, simplified_spec)
    total, improved = 0, 0
    alpha = 1e-4
    while total < 60:
        q = random_configuration(rng, robot, span=0.25)
        evals = evaluate_naive(robot, simplified_spec, q, cfg, packed)
        pen = [(k, c) for k, c in enumerate(evals) if c.h + cfg.epsilon < 0.0]
        if not pen:
            continue
        for k, c in pen:
            total += 1
            q2 = retract(q, alpha * c.grad)
            h2 = evaluate_naive(robot, simplified_spec, q2, cfg, packed, want_grad=False)[k].h
            if h2 > c.h:
                improved += 1
    assert improved / total >= 0.95, f"{improved}/{total}"


def test_pruning_soundness_instrumented(robot, detailed_spec):
    """Pruned subtrees never contain a body closer than the best at prune time."""
    from wbmpc import _core_py as pure

    rng = np.random.default_rng(13)
    packed = PackedSelf.build(robot, detailed_spec)
    blink, btype, bparams, bq, bt = packed.bodies
    for _ in range(50):
        q = random_configuration(rng, robot)
        lq, lt = pure.fk_links(
            *robot.packed.tuple(),
            q.base_pose.rotation, q.base_pose.translation, q.joint_positions,
        )
        wq, wt = pure._posed_bodies(blink, bq, bt, lq, lt)
        nb = len(packed.base)
        los = np.empty((nb, 3))
        his = np.empty((nb, 3))
        for k, ib in enumerate(packed.base):
            los[k], his[k] = pure.aabb_of_posed(btype[ib], bparams[ib], wq[ib], wt[ib])
        tree = pure._build_aabb_tree(los, his)
        node_lo, node_hi, node_left, node_right, node_body = tree

        def leaves_under(nid):
            if node_body[nid] >= 0:
                return [int(node_body[nid])]
            return leaves_under(node_left[nid]) + leaves_under(node_right[nid])

        for ia in packed.arm:
            qlo, qhi = pure.aabb_of_posed(btype[ia], bparams[ia], wq[ia], wt[ia])

            def narrow(b):
                ib = packed.base[b]
                st, dist, wa, wb, cons, axis, *_ = pure.pair_distance_raw(
                    btype[ia], bparams[ia], wq[ia], wt[ia],
                    btype[ib], bparams[ib], wq[ib], wt[ib],
                )
                if st != 0:
                    # EPA rows: resolve through the python path
                    sb = detailed_spec.bodies
                    d = brute_pair_distance(robot, detailed_spec, q, sb[ia], sb[ib])
                    return 0, d, np.zeros(3), np.zeros(3), np.zeros(3)
                return st, dist, wa, wb, axis

            trace = []
            pure._nearest_in_tree(tree, qlo, qhi, narrow, trace=trace)
            for nid, lb, best_at_prune in trace:
                for b in leaves_under(nid):
                    d = narrow(b)[1]
                    assert d >= best_at_prune - 1e-12
