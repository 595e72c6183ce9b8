import json

import numpy as np
import pytest

from splat360.geometry import ImageDims, Pose, equirect_unproject
from splat360.scene import (SURFACES, SceneSpec, gen_scene,
                            load_scene, ray_box, save_scene)

SPEC = SceneSpec(room=(6.0, 3.0, 4.0), spacing=0.12, feature_height=16,
                 feature_dim=8)
DIMS = ImageDims(256, 128)


def ray_box_scalar(origin, direction, half):
    """Independent single-ray reference: smallest positive slab exit."""
    best_t, best_surface = np.inf, None
    for axis in range(3):
        if direction[axis] == 0:
            continue
        for sign in (-1.0, 1.0):
            t = (sign * half[axis] - origin[axis]) / direction[axis]
            if t <= 0:
                continue
            hit = origin + t * direction
            others = [a for a in range(3) if a != axis]
            if all(abs(hit[a]) <= half[a] + 1e-12 for a in others) and t < best_t:
                best_t = t
                best_surface = axis * 2 + (1 if sign > 0 else 0)
    return best_t, best_surface


class TestRayBox:
    def test_matches_scalar_reference(self, rng):
        half = np.array([3.0, 1.5, 2.0])
        origin = np.array([0.4, -0.2, 0.7])
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t, surf = ray_box(origin, dirs, half)
        for i in range(len(dirs)):
            t_ref, s_ref = ray_box_scalar(origin, dirs[i], half)
            assert t[i] == pytest.approx(t_ref, rel=1e-12)
            assert surf[i] == s_ref


@pytest.fixture(scope="module")
def scene():
    return gen_scene(SPEC)


class TestGroundTruth:
    def test_depth_is_exact_ray_box(self, scene, rng):
        pose = scene.poses[0]
        _, depth, _ = scene.gt_render(pose, DIMS)
        h, w = DIMS.shape
        for _ in range(50):
            j, i = rng.integers(0, h), rng.integers(0, w)
            d = equirect_unproject([i + 0.5, j + 0.5], 1.0, DIMS)
            t_ref, _ = ray_box_scalar(pose.translation, d, scene.half_extents)
            assert depth[j, i] == pytest.approx(t_ref, rel=1e-12)

    def test_center_pixel_hits_far_wall(self):
        # camera at the room center: the image-center ray hits the wall
        # facing azimuth pi (wall_zpos at z = +2) at the hand-computed slant
        scene = gen_scene(SceneSpec(room=(6.0, 4.0, 3.0), spacing=0.12,
                                    camera_positions=((0.0, 0.0, 0.0),),
                                    feature_height=16, feature_dim=8))
        _, depth, surface = scene.gt_render(scene.poses[0], DIMS)
        h, w = DIMS.shape
        az = ((w / 2 + 0.5) / w - 0.5) * 2 * np.pi
        lat = ((h / 2 + 0.5) / h - 0.5) * np.pi
        expected = 1.5 / (np.cos(lat) * np.cos(az))
        assert depth[h // 2, w // 2] == pytest.approx(expected, rel=1e-9)
        assert SURFACES[surface[h // 2, w // 2]] == "wall_zpos"

    def test_surfaces_cover_image(self, scene):
        _, _, surface = scene.gt_render(scene.poses[0], DIMS)
        assert set(np.unique(surface)) == set(range(6))

    def test_camera_outside_room_rejected(self):
        with pytest.raises(ValueError, match="camera outside room"):
            SceneSpec(room=(2.0, 2.0, 2.0), camera_positions=((5.0, 0.0, 0.0),))
        scene = gen_scene(SPEC)
        with pytest.raises(ValueError, match="camera outside room"):
            scene.gt_render(Pose(np.eye(3), [100.0, 0, 0]), DIMS)


class TestCloud:
    def test_gaussians_lie_on_surfaces(self):
        scene = gen_scene(SPEC)
        half = scene.half_extents
        for name, (lo, hi) in scene.surface_ranges.items():
            pos = scene.cloud.positions[lo:hi].astype(np.float64)
            axis = {"wall_xneg": 0, "wall_xpos": 0, "ceiling": 1, "floor": 1,
                    "wall_zneg": 2, "wall_zpos": 2}[name]
            assert np.allclose(np.abs(pos[:, axis]), half[axis], atol=1e-6)

    def test_mask_removes_one_surface(self):
        scene = gen_scene(SPEC)
        masked = scene.cloud_without("wall_zpos")
        lo, hi = scene.surface_ranges["wall_zpos"]
        assert len(masked) == len(scene.cloud) - (hi - lo)
        assert "wall_zpos" not in set(masked.labels)

    def test_labels_match_ranges(self):
        scene = gen_scene(SPEC)
        for name, (lo, hi) in scene.surface_ranges.items():
            assert all(l == name for l in scene.cloud.labels[lo:hi])


class TestFeatures:
    def test_feature_points_lie_on_walls(self):
        scene = gen_scene(SPEC)
        pts = scene.feature_points()
        assert len(pts) == len(scene.poses) * SPEC.feature_height ** 2 * 2
        half = scene.half_extents
        on_surface = np.zeros(len(pts), dtype=bool)
        for axis in range(3):
            on_surface |= np.abs(np.abs(pts.positions[:, axis]) - half[axis]) < 1e-9
        assert on_surface.all()
        assert set(np.unique(pts.cameras)) == {0, 1}

    def test_features_deterministic(self):
        a = gen_scene(SPEC).feature_pano(0)
        b = gen_scene(SPEC).feature_pano(0)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, gen_scene(SPEC).feature_pano(1))


class TestSceneIO:
    def test_save_load_round_trip(self, tmp_path):
        scene = gen_scene(SPEC)
        manifest = save_scene(scene, tmp_path / "s", DIMS)
        again, meta = load_scene(tmp_path / "s")
        assert np.array_equal(again.cloud.positions, scene.cloud.positions)
        assert meta["dims"] == [DIMS.width, DIMS.height]
        poses = json.loads((tmp_path / "s" / "poses.json").read_text())
        assert len(poses["cameras"]) == 2
        m0 = np.asarray(poses["cameras"][0]["cam_to_world"])
        m1 = np.asarray(poses["cameras"][1]["cam_to_world"])
        assert np.isclose(np.linalg.norm(m1[:3, 3] - m0[:3, 3]), 1.0)

    def test_seeded_rerun_bitwise_identical(self, tmp_path):
        save_scene(gen_scene(SPEC), tmp_path / "a", DIMS)
        save_scene(gen_scene(SPEC), tmp_path / "b", DIMS)
        for p in sorted((tmp_path / "a").iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    def test_masked_save(self, tmp_path):
        from splat360.ply import ply_read
        scene = gen_scene(SPEC)
        save_scene(scene, tmp_path / "m", DIMS, mask_surface="floor")
        cloud = ply_read(tmp_path / "m" / "cloud.ply")
        lo, hi = scene.surface_ranges["floor"]
        assert len(cloud) == len(scene.cloud) - (hi - lo)
