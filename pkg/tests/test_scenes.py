import dataclasses

import numpy as np
import pytest

from fovlab.geometry import project_to_bev, quantize
from fovlab.scenes import (LidarModel, Scene, SceneFamily, generate_scene,
                           ground_truth_fov, point_in_convex, simulate_lidar,
                           visible_fraction)
from fovlab.types import GridSpec, Pose

from conftest import wall_quad


def room_family(**overrides) -> SceneFamily:
    """Obstacle-free regular room: deterministic geometry for oracle tests."""
    base = dict(name="indoor", n_obstacles=(0, 0), obstacle_size=(0.5, 1.0),
                bounds=12.0, placement=(2.0, 6.0), enclosure_radius=(10.0, 10.0),
                enclosure_vertices=(16, 16), enclosure_jitter=0.0,
                wall_thickness=0.4, n_clutter=(0, 0), random_yaw=False)
    base.update(overrides)
    return SceneFamily(**base)


def test_scene_validates_obstacles():
    with pytest.raises(ValueError):
        Scene(obstacles=[np.array([[0.0, 0.0], [1.0, 0.0]])])  # 2 vertices
    with pytest.raises(ValueError):
        # clockwise square
        Scene(obstacles=[np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]) + 5.0])


def test_scene_rejects_sensor_inside_obstacle():
    with pytest.raises(ValueError):
        Scene(obstacles=[np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])])


def test_lidar_model_invariants():
    with pytest.raises(ValueError):
        LidarModel(n_beams=4)
    with pytest.raises(ValueError):
        LidarModel(dropout_prob=1.0)
    with pytest.raises(ValueError):
        LidarModel(max_range=0.0)


def test_family_presets_and_validation():
    for name in ("outdoor-sparse", "outdoor-dense", "indoor"):
        fam = SceneFamily.preset(name)
        assert fam.name == name
    with pytest.raises(ValueError):
        SceneFamily.preset("lunar")
    with pytest.raises(ValueError):
        SceneFamily(name="indoor", n_obstacles=(5, 2))


def test_generate_zero_obstacle_family():
    fam = SceneFamily(name="indoor", n_obstacles=(0, 0), obstacle_size=(1.0, 2.0),
                      bounds=12.0, placement=(2.0, 6.0), enclosure_radius=None,
                      n_clutter=(0, 0))
    scene = generate_scene(fam, 0)
    assert scene.obstacles == []


def test_generate_deterministic(sparse_family):
    a = generate_scene(sparse_family, 7)
    b = generate_scene(sparse_family, 7)
    assert len(a.obstacles) == len(b.obstacles)
    for pa, pb in zip(a.obstacles, b.obstacles):
        np.testing.assert_array_equal(pa, pb)
    np.testing.assert_array_equal(a.sensor.quaternion, b.sensor.quaternion)


def test_generate_count_within_range():
    fam = SceneFamily(name="indoor", n_obstacles=(4, 10), obstacle_size=(0.5, 2.0),
                      bounds=12.0, placement=(2.0, 8.0), enclosure_radius=None,
                      n_clutter=(0, 0))
    for seed in range(100):
        scene = generate_scene(fam, seed)
        assert 4 <= len(scene.obstacles) <= 10


def test_generate_rejection_failure():
    # obstacles so large they always contain the sensor
    fam = SceneFamily(name="indoor", n_obstacles=(1, 1), obstacle_size=(80.0, 90.0),
                      bounds=12.0, placement=(0.0, 0.1), enclosure_radius=None,
                      n_clutter=(0, 0))
    with pytest.raises(ValueError, match="rejection"):
        generate_scene(fam, 0)


def test_simulate_empty_scene_gives_empty_cloud():
    scene = Scene(obstacles=[], sensor=Pose.identity(), bounds=20.0)
    cloud = simulate_lidar(scene, LidarModel(n_beams=64, max_range=10.0,
                                             range_noise_sigma=0.0, dropout_prob=0.0), 0)
    assert len(cloud) == 0


def test_simulate_wall_range_analytic():
    scene = Scene(obstacles=[wall_quad(10.0)], sensor=Pose.identity(), bounds=20.0)
    model = LidarModel(n_beams=360, max_range=50.0, range_noise_sigma=0.0, dropout_prob=0.0)
    cloud = simulate_lidar(scene, model, 0)
    # beam at azimuth 0 hits the front face at exactly 10 m
    ranges = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    az = np.mod(np.arctan2(cloud.points[:, 1], cloud.points[:, 0]), 2 * np.pi)
    beam0 = np.argmin(np.minimum(az, 2 * np.pi - az))
    assert abs(ranges[beam0] - 10.0) < 1e-9


def test_simulate_first_hit_occlusion():
    near = wall_quad(5.0, y_half=8.0)
    far = wall_quad(10.0, y_half=8.0)
    scene = Scene(obstacles=[near, far], sensor=Pose.identity(), bounds=20.0)
    model = LidarModel(n_beams=720, max_range=50.0, range_noise_sigma=0.0, dropout_prob=0.0)
    cloud = simulate_lidar(scene, model, 1)
    # no return may lie on the far wall: every +x-side hit is on the near wall
    forward = cloud.points[cloud.points[:, 0] > 0]
    assert forward.shape[0] > 0
    assert forward[:, 0].max() <= 5.0 + 1e-9


def test_simulate_deterministic_per_seed(sample_scene):
    model = LidarModel(n_beams=128, max_range=75.0, range_noise_sigma=0.1, dropout_prob=0.1)
    a = simulate_lidar(sample_scene, model, 5)
    b = simulate_lidar(sample_scene, model, 5)
    np.testing.assert_array_equal(a.points, b.points)
    c = simulate_lidar(sample_scene, model, 6)
    assert c.points.shape != a.points.shape or not np.array_equal(c.points, a.points)


def test_ground_truth_empty_scene_is_range_disk():
    scene = Scene(obstacles=[], sensor=Pose.identity(), bounds=20.0)
    model = LidarModel(n_beams=64, max_range=10.0, range_noise_sigma=0.0, dropout_prob=0.0)
    spec = GridSpec(extent=16.0, resolution=32)
    mask = ground_truth_fov(scene, model, spec)
    X, Y = spec.cell_centers()
    np.testing.assert_array_equal(mask.mask, np.hypot(X, Y) <= 10.0)


def test_ground_truth_cell_behind_wall_invisible():
    scene = Scene(obstacles=[wall_quad(10.0)], sensor=Pose.identity(), bounds=20.0)
    model = LidarModel(n_beams=64, max_range=50.0, range_noise_sigma=0.0, dropout_prob=0.0)
    spec = GridSpec(extent=16.0, resolution=32)
    mask = ground_truth_fov(scene, model, spec)
    X, Y = spec.cell_centers()
    behind = (X > 10.5) & (np.abs(Y) < 2.0)
    assert not mask.mask[behind].any()
    before = (X > 0.5) & (X < 9.5) & (np.abs(Y) < 2.0)
    assert mask.mask[before].all()


def test_ground_truth_noise_independent(sample_scene, small_grid):
    noisy = LidarModel(n_beams=720, max_range=75.0, range_noise_sigma=0.5, dropout_prob=0.3)
    clean = dataclasses.replace(noisy, range_noise_sigma=0.0, dropout_prob=0.0)
    a = ground_truth_fov(sample_scene, noisy, small_grid)
    b = ground_truth_fov(sample_scene, clean, small_grid)
    np.testing.assert_array_equal(a.mask, b.mask)


def test_hits_land_in_visible_cells_regular_room():
    """Noiseless hits, shrunk 1% toward the sensor, must fall in visible cells."""
    fam = room_family()
    model = LidarModel(n_beams=720, max_range=15.0, range_noise_sigma=0.0, dropout_prob=0.0)
    spec = GridSpec(extent=12.0, resolution=512)
    for seed in (0, 1, 2):
        scene = generate_scene(fam, seed)
        mask = ground_truth_fov(scene, model, spec)
        cloud = simulate_lidar(scene, model, seed)
        pts = project_to_bev(cloud)[:, :2] * 0.99
        idx = np.floor((pts + spec.extent) / spec.cell_size).astype(int)
        ok = mask.mask[idx[:, 0], idx[:, 1]]
        assert ok.all(), f"seed {seed}: {np.count_nonzero(~ok)} hits in invisible cells"


def test_shrunk_hits_unoccluded_sparse_scenes(sparse_family, noiseless_lidar):
    """Point-level consistency on full scenes: every noiseless hit, shrunk 1%
    toward the sensor, is unblocked under the oracle's segment predicates.

    The simulator finds hits with parametric ray-edge intersection; the oracle
    uses orientation tests, so agreement cross-checks the two routes without
    grid quantization in between.
    """
    from fovlab.scenes import _segments_blocked

    checked = 0
    for seed in (0, 1, 2, 3):
        scene = generate_scene(sparse_family, seed)
        cloud = simulate_lidar(scene, noiseless_lidar, seed)
        pts = project_to_bev(cloud)[:, :2] * 0.99
        edges = scene.edges()
        origin = scene.sensor.position[:2]
        for k in range(edges.shape[0]):
            blocked = _segments_blocked(origin, pts + origin, edges[k, 0], edges[k, 1])
            assert not blocked.any(), f"seed {seed}: shrunk hit blocked by edge {k}"
        checked += pts.shape[0]
    assert checked > 1000


def test_visibility_star_shaped(sample_scene, noiseless_lidar):
    """Beyond the first occlusion along a ray, every farther cell is invisible."""
    spec = GridSpec(extent=75.0, resolution=128)
    mask = ground_truth_fov(sample_scene, noiseless_lidar, spec)
    rng = np.random.default_rng(0)
    X, Y = spec.cell_centers()
    for _ in range(200):
        theta = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(theta), np.sin(theta)])
        ts = np.linspace(0.5, noiseless_lidar.max_range, 200)
        pts = ts[:, None] * d
        idx = np.floor((pts + spec.extent) / spec.cell_size).astype(int)
        keep = np.all((idx >= 0) & (idx < spec.resolution), axis=1)
        idx = idx[keep]
        vis = mask.mask[idx[:, 0], idx[:, 1]]
        # visibility along the exact ray samples: once the *cell-center ray*
        # check fails it may not recover; sample cell centers directly
        centers = np.column_stack([X[idx[:, 0], idx[:, 1]], Y[idx[:, 0], idx[:, 1]]])
        on_ray = np.abs(centers @ np.array([-d[1], d[0]])) < 1e-9
        vis_on_ray = vis[on_ray]
        if vis_on_ray.size > 1:
            flips = np.diff(vis_on_ray.astype(int))
            assert not np.any(flips > 0), "visibility recovered past an occlusion"


def test_visible_fraction_monotone_in_obstacles(noiseless_lidar):
    base = Scene(obstacles=[wall_quad(20.0)], sensor=Pose.identity(), bounds=60.0)
    spec = GridSpec(extent=75.0, resolution=64)
    fractions = []
    obstacles = [wall_quad(20.0)]
    for x0 in (30.0, -15.0, 5.0):
        mask = ground_truth_fov(Scene(obstacles=list(obstacles), sensor=Pose.identity(),
                                      bounds=60.0), noiseless_lidar, spec)
        fractions.append(visible_fraction(mask))
        obstacles.append(wall_quad(x0, y_half=10.0))
    assert all(fractions[i + 1] <= fractions[i] + 1e-12 for i in range(len(fractions) - 1))


def test_point_in_convex():
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    assert point_in_convex(tri, (0.5, 0.5))
    assert point_in_convex(tri, (0.0, 0.0))  # boundary counts
    assert not point_in_convex(tri, (2.0, 2.0))


def test_enclosure_returns_every_beam(sparse_family, noiseless_lidar):
    """The wall ring makes the azimuth-range map well-posed: all beams hit."""
    for seed in (0, 1, 2, 3, 4):
        scene = generate_scene(sparse_family, seed)
        cloud = simulate_lidar(scene, noiseless_lidar, seed)
        assert len(cloud) == noiseless_lidar.n_beams
