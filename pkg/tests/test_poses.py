import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from sigscene.exceptions import DegenerateGeometry, InvalidParam, TooFewSamples
from sigscene.poses import (
    CameraPose,
    SceneType,
    circular_trajectory_poses,
    effective_rank,
    generate_cluster_poses,
    infer_scene_type,
    linear_trajectory_poses,
    look_at,
    order_images,
    planar_grid_poses,
)

coord = st.floats(-50, 50, allow_nan=False)
vec3 = st.tuples(coord, coord, coord).map(np.array)


def assert_proper(R, tol=1e-9):
    assert np.allclose(R @ R.T, np.eye(3), atol=tol, rtol=0)
    assert abs(np.linalg.det(R) - 1.0) <= tol


def test_look_at_identity_configuration():
    p = look_at([0, 0, -1], [0, 0, 0], [0, -1, 0])
    assert np.allclose(p.rotation, np.eye(3), atol=1e-15)
    assert np.allclose(p.translation, [0, 0, 1], atol=1e-15)


def test_look_at_side_view():
    eye, target = np.array([1.0, 0, 0]), np.zeros(3)
    p = look_at(eye, target, [0, 0, 1])
    assert np.allclose(p.rotation @ (target - eye), [0, 0, 1], atol=1e-12)
    assert_proper(p.rotation)


def test_look_at_degenerate():
    with pytest.raises(DegenerateGeometry):
        look_at([1, 2, 3], [1, 2, 3])
    with pytest.raises(DegenerateGeometry):
        look_at([0, 0, 0], [0, 2, 0], [0, -1, 0])


@settings(max_examples=200, deadline=None)
@given(vec3, vec3)
def test_look_at_invariants(eye, target):
    view = target - eye
    if np.linalg.norm(view) < 1e-3 or np.linalg.norm(np.cross(view / np.linalg.norm(view), [0, -1, 0])) < 1e-3:
        return
    p = look_at(eye, target)
    assert_proper(p.rotation)
    assert np.allclose(p.rotation @ eye + p.translation, 0, atol=1e-9 * max(1.0, np.abs(eye).max()))
    z = p.rotation @ view / np.linalg.norm(view)
    assert np.allclose(z, [0, 0, 1], atol=1e-9)
    assert np.allclose(p.center, eye, atol=1e-9 * max(1.0, np.abs(eye).max()))


def test_camera_pose_rejects_improper_rotation():
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CameraPose(2 * np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        CameraPose(np.eye(3), [0, np.nan, 0])


def test_scene_type_examples(rng):
    line = np.outer(rng.standard_normal(30), rng.standard_normal(16))
    assert effective_rank(line) == pytest.approx(1.0)
    assert infer_scene_type(line) is SceneType.LINEAR

    plane = np.zeros((40, 16))
    plane[:, :2] = rng.standard_normal((40, 2))
    # exact diag(1,1,0,...) covariance: whiten the two coordinates
    plane[:, :2] -= plane[:, :2].mean(axis=0)
    plane[:, :2] = plane[:, :2] @ np.linalg.inv(np.linalg.cholesky(np.cov(plane[:, :2].T)).T)
    assert effective_rank(plane) == pytest.approx(2.0)
    assert infer_scene_type(plane) is SceneType.PLANAR

    # eight +-1 rows per axis give an exactly isotropic covariance
    iso = np.vstack([np.eye(16), -np.eye(16)])
    assert effective_rank(iso) == pytest.approx(16.0)
    assert infer_scene_type(iso) is SceneType.OBJECT_CENTRIC


def test_scene_type_thresholds_inclusive():
    # effective rank of diag(a, b) is (a+b)^2 / (a^2+b^2)
    assert infer_scene_type(np.array([[0.0, 0.0], [1.0, 0.0]])) is SceneType.LINEAR
    assert infer_scene_type(np.array([[0.0, 0.0], [1.0, 0.0]]), linear_max=0.5) is SceneType.PLANAR


def test_scene_type_errors():
    with pytest.raises(TooFewSamples):
        infer_scene_type(np.zeros((1, 4)))
    assert infer_scene_type(np.ones((5, 4))) is SceneType.OBJECT_CENTRIC


def test_order_images_examples():
    assert order_images(np.zeros((1, 3))) == [0]
    X = np.outer([3.0, 1.0, 2.0], [1.0, 2.0, -1.0])
    # ascending projection is [1, 2, 0]; the reversal starts with id 0
    assert order_images(X) == [0, 2, 1]
    assert order_images(X, ids=["c", "a", "b"]) == [1, 2, 0]
    assert order_images(np.ones((4, 3))) == [0, 1, 2, 3]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_order_images_is_projection_sort(seed, n):
    rng = np.random.default_rng(seed)
    t = rng.permutation(n).astype(float)
    X = np.outer(t, rng.standard_normal(5))
    order = order_images(X)
    assert sorted(order) == list(range(n))
    proj = t[order]
    assert np.all(np.diff(proj) > 0) or np.all(np.diff(proj) < 0)
    assert order[0] in (int(np.argmin(t)), int(np.argmax(t)))
    assert order[0] == min(int(np.argmin(t)), int(np.argmax(t)))


def test_circular_examples():
    (p,) = circular_trajectory_poses(1, 1.0)
    assert np.allclose(p.center, [1, 0, 0], atol=1e-12)
    poses = circular_trajectory_poses(4, 2.0)
    for a, b in zip(poses, poses[1:] + poses[:1]):
        rel = Rotation.from_matrix(a.rotation @ b.rotation.T)
        assert math.degrees(rel.magnitude()) == pytest.approx(90.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.floats(0.01, 100))
def test_circular_invariants(n, radius):
    poses = circular_trajectory_poses(n, radius)
    centers = np.array([p.center for p in poses])
    assert np.allclose(np.linalg.norm(centers, axis=1), radius, atol=1e-9 * max(1.0, radius))
    angles = np.unwrap(np.arctan2(centers[:, 2], centers[:, 0]))
    if n > 1:
        assert np.allclose(np.diff(angles), 2 * math.pi / n, atol=1e-9)
    for p in poses:
        assert_proper(p.rotation)
        # every camera faces the origin
        assert np.allclose(p.rotation @ (-p.center) / radius, [0, 0, 1], atol=1e-9)


def test_linear_examples():
    (p,) = linear_trajectory_poses(1)
    assert_proper(p.rotation)
    assert np.allclose(p.rotation, np.eye(3), atol=1e-15)
    poses = linear_trajectory_poses(3, 2.0)
    for p in poses:
        assert np.array_equal(p.rotation, poses[0].rotation)
    assert np.allclose([p.center for p in poses], [[0, 0, -10], [2, 0, -10], [4, 0, -10]])


def test_planar_examples():
    poses = planar_grid_poses(5, 1.0)
    assert len(poses) == 5
    assert np.allclose([p.center for p in poses], [[0, 0, -5], [1, 0, -5], [2, 0, -5], [0, 1, -5], [1, 1, -5]])
    for a in poses:
        for b in poses:
            assert np.allclose(a.rotation @ b.rotation.T, np.eye(3), atol=1e-15)
    assert len(planar_grid_poses(9)) == 9
    assert {tuple(p.center[:2]) for p in planar_grid_poses(9)} == {(c, r) for r in range(3) for c in range(3)}


@pytest.mark.parametrize("fn", [circular_trajectory_poses, linear_trajectory_poses, planar_grid_poses])
def test_trajectory_errors(fn):
    with pytest.raises(InvalidParam):
        fn(0, 1.0)
    with pytest.raises(InvalidParam):
        fn(3, 0.0)
    with pytest.raises(InvalidParam):
        fn(3, -1.0)


def test_generate_cluster_poses_examples(rng):
    one = generate_cluster_poses(rng.standard_normal((1, 16)), ["a"])
    assert list(one) == ["a"]
    assert_proper(one["a"].rotation)

    iso = generate_cluster_poses(rng.standard_normal((8, 16)), [f"i{k}" for k in range(8)])
    centers = np.array([p.center for p in iso.values()])
    assert np.allclose(np.linalg.norm(centers, axis=1), 1.0, atol=1e-9)

    X = np.outer(rng.permutation(5).astype(float), rng.standard_normal(16))
    ids = [f"i{k}" for k in range(5)]
    lin = generate_cluster_poses(X, ids)
    ordered = [lin[ids[i]] for i in order_images(X, ids)]
    for p in ordered:
        assert np.array_equal(p.rotation, ordered[0].rotation)
    steps = np.diff([p.translation for p in ordered], axis=0)
    assert np.allclose(np.abs(steps), [[1, 0, 0]] * 4)


def test_generate_cluster_poses_errors(rng):
    with pytest.raises(ValueError):
        generate_cluster_poses(rng.standard_normal((3, 4)), ["a", "b"])
    with pytest.raises(ValueError):
        generate_cluster_poses(np.zeros((0, 4)), [])


def test_generate_cluster_poses_deterministic(rng):
    X = rng.standard_normal((12, 16))
    ids = [f"x{k:02d}" for k in range(12)]
    a = generate_cluster_poses(X, ids)
    b = generate_cluster_poses(X.copy(), list(ids))
    for k in ids:
        assert a[k].rotation.tobytes() == b[k].rotation.tobytes()
        assert a[k].translation.tobytes() == b[k].translation.tobytes()
