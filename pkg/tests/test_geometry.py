import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splat360.geometry import (ImageDims, Pose, cart_to_cyl, cart_to_sph,
                               cyl_jacobian, cyl_to_cart, equirect_jacobian,
                               equirect_project, equirect_unproject,
                               rotation_about_y, sph_jacobian, sph_to_cart,
                               transform_scale, u_distance)

from conftest import fd_jacobian

DIMS = ImageDims(1024, 512)


def random_points(rng, n, lat_limit_deg=85.0, r_range=(0.3, 10.0)):
    """Directions away from the poles (where the FD oracle itself degrades)."""
    lat = np.deg2rad(rng.uniform(-lat_limit_deg, lat_limit_deg, n))
    az = rng.uniform(0, 2 * np.pi, n)
    r = rng.uniform(*r_range, n)
    return np.stack([r * np.cos(lat) * np.sin(az), r * np.sin(lat),
                     r * np.cos(lat) * np.cos(az)], axis=-1)


class TestEquirectProject:
    def test_forward_axis_is_image_center(self):
        assert np.allclose(equirect_project([0.0, 0.0, 1.0], DIMS), [512.0, 256.0])

    def test_quarter_turn(self):
        assert np.allclose(equirect_project([1.0, 0.0, 0.0], DIMS), [768.0, 256.0])

    def test_closed_form_point(self):
        # frozen direct evaluation of the projection formulas at (0.3, -0.4, 1.2)
        uv = equirect_project([0.3, -0.4, 1.2], DIMS)
        assert np.allclose(uv, [551.9253147532131, 205.02694929239524], atol=1e-9)

    def test_origin_rejected(self):
        with pytest.raises(ValueError, match="degenerate direction"):
            equirect_project([0.0, 0.0, 0.0], DIMS)

    def test_seam_tie_resolves_to_u0(self):
        assert equirect_project([0.0, 0.0, -1.0], DIMS)[0] == 0.0

    def test_seam_periodicity(self, rng):
        # rotating the direction by full turns about y leaves the pixel unchanged
        p = random_points(rng, 200)
        uv = equirect_project(p, DIMS)
        uv2 = equirect_project(p @ rotation_about_y(2 * np.pi).T, DIMS)
        assert np.abs(u_distance(uv[:, 0], uv2[:, 0], DIMS.width)).max() < 1e-6
        assert np.abs(uv[:, 1] - uv2[:, 1]).max() < 1e-6


class TestEquirectUnproject:
    def test_center_inverse(self):
        assert np.allclose(equirect_unproject([512.0, 256.0], 1.0, DIMS), [0, 0, 1])

    def test_seam_meridian_45deg(self):
        p = equirect_unproject([0.0, 128.0], 2.0, DIMS)
        assert np.allclose(p, [0.0, -np.sqrt(2), -np.sqrt(2)], atol=1e-9)
        assert np.isclose(np.linalg.norm(p), 2.0, rtol=1e-12)

    def test_round_trip_1000(self, rng):
        p = random_points(rng, 1000)
        uv = equirect_project(p, DIMS)
        back = equirect_unproject(uv, np.linalg.norm(p, axis=-1), DIMS)
        assert np.abs(back - p).max() < 1e-6 * np.abs(p).max()

    def test_rejects_nonpositive_depth(self):
        with pytest.raises(ValueError):
            equirect_unproject([1.0, 1.0], 0.0, DIMS)


class TestEquirectJacobian:
    def test_forward_axis_entries(self):
        J = equirect_jacobian([0.0, 0.0, 1.0], DIMS)
        assert np.isclose(J[0, 0], DIMS.width / (2 * np.pi))
        assert J[0, 2] == 0.0
        assert np.isclose(J[1, 1], DIMS.height / np.pi)

    def test_u_independent_of_y(self, rng):
        J = equirect_jacobian(random_points(rng, 100), DIMS)
        assert np.all(J[:, 0, 1] == 0.0)

    def test_finite_difference_agreement_1000(self, rng):
        pts = random_points(rng, 1000)
        J = equirect_jacobian(pts, DIMS)
        for p, Ja in zip(pts[:: len(pts) // 200], J[:: len(pts) // 200]):
            Jf = fd_jacobian(lambda q: equirect_project(q, DIMS), p,
                             wrap=(DIMS.width, None))
            assert np.abs(Jf - Ja).max() <= 1e-4 * max(np.abs(Jf).max(), 1.0)

    def test_polar_guard(self):
        with pytest.raises(ValueError, match="polar singularity"):
            equirect_jacobian([0.0, 1.0, 0.0], DIMS)


class TestCylindrical:
    def test_theta_zero_axis(self):
        assert np.allclose(cyl_to_cart([1.0, 0.0, 0.0]), [0.0, 0.0, -1.0])

    def test_quarter_turn_with_height(self):
        assert np.allclose(cyl_to_cart([1.0, np.pi / 2, 2.0]), [-1.0, 2.0, 0.0],
                           atol=1e-12)

    def test_offsets_closed_form(self):
        out = cyl_to_cart([2.0, 0.0, 0.0], [0.1, 0.05, -0.2])
        expected = [-2.1 * np.sin(0.05), -0.2, -2.1 * np.cos(0.05)]
        assert np.allclose(out, expected, rtol=1e-15)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError, match="negative effective radius"):
            cyl_to_cart([1.0, 0.0, 0.0], [-2.0, 0.0, 0.0])

    def test_radial_norm_postcondition(self, rng):
        cyl = np.stack([rng.uniform(0.1, 5, 500), rng.uniform(0, 2 * np.pi, 500),
                        rng.uniform(-3, 3, 500)], axis=-1)
        p = cyl_to_cart(cyl)
        assert np.allclose(np.hypot(p[:, 0], p[:, 2]), cyl[:, 0], rtol=1e-9)

    def test_cart_to_cyl_basics(self):
        assert np.allclose(cart_to_cyl([0.0, 0.0, -1.0]), [1.0, 0.0, 0.0])
        assert np.allclose(cart_to_cyl([0.0, 5.0, 0.0]), [0.0, 0.0, 5.0])

    def test_round_trip_1000(self, rng):
        p = random_points(rng, 1000)
        back = cyl_to_cart(cart_to_cyl(p))
        assert np.abs(back - p).max() < 1e-9 * np.abs(p).max()


class TestCylJacobian:
    def test_theta_zero_matrix(self):
        r = 1.7
        J = cyl_jacobian([r, 0.0, 0.5])
        assert np.allclose(J, [[0, -r, 0], [0, 0, 1], [-1, 0, 0]], atol=1e-15)

    def test_determinant_is_effective_radius(self, rng):
        cyl = np.stack([rng.uniform(0.1, 5, 1000), rng.uniform(0, 2 * np.pi, 1000),
                        rng.uniform(-3, 3, 1000)], axis=-1)
        d = rng.uniform(-0.05, 0.05, (1000, 3))
        J = cyl_jacobian(cyl, d)
        assert np.allclose(np.abs(np.linalg.det(J)), cyl[:, 0] + d[:, 0], rtol=1e-9)

    def test_finite_difference_agreement(self, rng):
        for _ in range(50):
            c = np.array([rng.uniform(0.1, 5), rng.uniform(0, 2 * np.pi),
                          rng.uniform(-3, 3)])
            Ja = cyl_jacobian(c)
            Jf = fd_jacobian(lambda q: cyl_to_cart(q), c)
            assert np.abs(Jf - Ja).max() <= 1e-4 * np.abs(Jf).max()


class TestTransformScale:
    def test_theta_zero_mapping(self):
        r = 2.5
        J = cyl_jacobian([r, 0.0, 0.0])
        s = transform_scale([0.2, 0.3, 0.4], J)
        assert np.allclose(s, [r * 0.3, 0.4, 0.2], atol=1e-15)

    def test_unit_case(self):
        J = cyl_jacobian([1.0, 0.0, 0.0])
        assert np.allclose(transform_scale([1.0, 1.0, 1.0], J), [1.0, 1.0, 1.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            transform_scale([0.0, 1.0, 1.0], np.eye(3))


class TestSpherical:
    def test_equator_symmetry(self):
        # polar angle pi/2 lands on the equator plane y = 0
        p = sph_to_cart([2.0, np.pi / 2, 0.0])
        assert np.allclose(p, [0.0, 0.0, -2.0], atol=1e-12)

    def test_round_trips(self, rng):
        p = random_points(rng, 1000)
        back = sph_to_cart(cart_to_sph(p))
        assert np.abs(back - p).max() < 1e-9 * np.abs(p).max()

    def test_azimuth_matches_cylindrical(self, rng):
        p = random_points(rng, 200)
        assert np.allclose(cart_to_sph(p)[:, 2], cart_to_cyl(p)[:, 1])

    def test_determinant(self, rng):
        sph = np.stack([rng.uniform(0.1, 5, 1000), rng.uniform(0.05, np.pi - 0.05, 1000),
                        rng.uniform(0, 2 * np.pi, 1000)], axis=-1)
        J = sph_jacobian(sph)
        expected = sph[:, 0] ** 2 * np.sin(sph[:, 1])
        assert np.allclose(np.abs(np.linalg.det(J)), expected, rtol=1e-9)

    def test_finite_difference_agreement_near_pole(self, rng):
        for phi in (1e-3, 0.5, np.pi - 1e-3):
            s = np.array([2.0, phi, 1.3])
            Ja = sph_jacobian(s)
            Jf = fd_jacobian(lambda q: sph_to_cart(q), s)
            assert np.abs(Jf - Ja).max() <= 1e-4 * np.abs(Jf).max()


class TestComposition:
    def test_ring_maps_to_linear_u(self, rng):
        # cylindrical-to-Cartesian composed with the projection: z = 0 rings
        # land on the equator row with u linear in theta
        n = 10_000
        th = rng.uniform(0, 2 * np.pi, n)
        r = rng.uniform(0.2, 8.0, n)
        cyl = np.stack([r, th, np.zeros(n)], axis=-1)
        uv = equirect_project(cyl_to_cart(cyl), DIMS)
        expected_u = DIMS.width * th / (2 * np.pi) % DIMS.width
        assert np.abs(u_distance(uv[:, 0], expected_u, DIMS.width)).max() < 1e-6
        assert np.abs(uv[:, 1] - DIMS.height / 2).max() < 1e-6


class TestPose:
    def test_round_trip(self, rng):
        R = rotation_about_y(0.7) @ np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], float)
        pose = Pose(R, [1.0, -2.0, 0.5])
        p = rng.normal(size=(50, 3))
        assert np.allclose(pose.inverse_transform(pose.transform(p)), p, atol=1e-12)
        assert np.allclose(pose.inverse().matrix() @ pose.matrix(), np.eye(4), atol=1e-12)

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(ValueError):
            Pose(-np.eye(3), np.zeros(3))  # det -1


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 8.0), st.floats(0.0, 2 * np.pi - 1e-9), st.floats(-4.0, 4.0))
def test_cyl_round_trip_property(r, th, z):
    back = cart_to_cyl(cyl_to_cart([r, th, z]))
    assert np.isclose(back[0], r, rtol=1e-12, atol=1e-12)
    assert np.isclose(back[2], z, rtol=1e-12, atol=1e-12)
    dth = (back[1] - th + np.pi) % (2 * np.pi) - np.pi
    assert abs(dth) < 1e-9
