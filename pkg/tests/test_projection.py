import json

import numpy as np
import pytest

from facewarp.errors import DegenerateDepth
from facewarp.projection import CameraParams, grad_wrt_camera, grad_wrt_points, project

from conftest import central_diff, rel_err, safe_camera_points


def oracle_project(a, pts):
    """Independent oracle: build M explicitly, multiply, divide by the third row."""
    M = np.append(np.asarray(a, dtype=float), 1.0).reshape(3, 4)
    out = []
    for p in np.atleast_2d(pts):
        ph = np.array([p[0], p[1], p[2], 1.0])
        v = M @ ph
        out.append([v[0] / v[2], v[1] / v[2]])
    return np.array(out)


class TestCameraParams:
    def test_matrix_layout(self):
        cam = CameraParams(np.arange(1.0, 12.0))
        M = cam.to_matrix()
        np.testing.assert_array_equal(M[0], [1, 2, 3, 4])
        np.testing.assert_array_equal(M[1], [5, 6, 7, 8])
        np.testing.assert_array_equal(M[2], [9, 10, 11, 1])
        assert M[2, 3] == 1.0

    def test_from_matrix_normalizes(self, rng):
        a = rng.normal(size=11)
        M = CameraParams(a).to_matrix() * 3.7
        cam = CameraParams.from_matrix(M)
        np.testing.assert_allclose(cam.a, a, rtol=1e-14)

    def test_from_matrix_rejects_zero_scale(self):
        M = np.eye(3, 4)
        with pytest.raises(ValueError):
            CameraParams.from_matrix(M)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            CameraParams(np.zeros(12))

    def test_immutable(self):
        cam = CameraParams(np.zeros(11))
        with pytest.raises(ValueError):
            cam.a[0] = 1.0

    def test_text_line_round_trip(self, rng):
        cam = CameraParams(rng.normal(size=11))
        again = CameraParams.from_text_line(cam.to_text_line())
        np.testing.assert_array_equal(again.a, cam.a)

    def test_json_round_trip(self, rng):
        cam = CameraParams(rng.normal(size=11))
        again = CameraParams.from_json(cam.to_json())
        np.testing.assert_array_equal(again.a, cam.a)

    def test_matrix_text_block(self):
        cam = CameraParams(np.arange(1.0, 12.0))
        rows = cam.matrix_text_block().strip().split("\n")
        assert len(rows) == 3
        assert [float(v) for v in rows[2].split()] == [9.0, 10.0, 11.0, 1.0]


class TestProject:
    def test_orthographic_like(self):
        # M = [I | 0] stacked over (0,0,0,1): denominator is constant 1.
        cam = CameraParams([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
        out = project(cam, [[2.0, 4.0, 5.0]])
        np.testing.assert_allclose(out, [[2.0, 4.0]])

    def test_depth_plus_one_denominator(self):
        cam = CameraParams([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1])
        out = project(cam, [[2.0, 4.0, 1.0]])
        np.testing.assert_allclose(out, [[1.0, 2.0]])

    def test_matches_matrix_multiply_oracle(self, rng):
        for _ in range(20):
            cam, pts = safe_camera_points(rng, 7)
            np.testing.assert_allclose(
                project(cam, pts), oracle_project(cam.a, pts), rtol=1e-12, atol=1e-12
            )

    def test_order_preserved_and_length(self, rng):
        cam, pts = safe_camera_points(rng, 9)
        out = project(cam, pts)
        assert out.shape == (9, 2)
        perm = rng.permutation(9)
        np.testing.assert_allclose(project(cam, pts[perm]), out[perm])

    def test_degenerate_depth_reports_first_index(self):
        cam = CameraParams([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1])
        pts = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.0, 0.0, -1.0]]
        with pytest.raises(DegenerateDepth) as exc:
            project(cam, pts)
        assert exc.value.index == 1

    def test_scale_ambiguity_resolved(self, rng):
        # Scaling all rows by lambda and renormalizing M[2,3] to 1 changes nothing.
        cam, pts = safe_camera_points(rng, 5)
        scaled = CameraParams.from_matrix(cam.to_matrix() * -2.5)
        np.testing.assert_allclose(project(scaled, pts), project(cam, pts), rtol=1e-12)


class TestGradWrtCamera:
    def test_zero_upstream_gradient(self, rng):
        cam, pts = safe_camera_points(rng, 4)
        g = grad_wrt_camera(cam, pts, np.zeros((4, 2)))
        np.testing.assert_array_equal(g, np.zeros(11))

    def test_single_point_first_row_structure(self, rng):
        cam, pts = safe_camera_points(rng, 1)
        p = pts[0]
        den = cam.to_matrix()[2, :3] @ p + 1.0
        g = grad_wrt_camera(cam, pts, [[1.0, 0.0]])
        ph = np.array([p[0], p[1], p[2], 1.0])
        np.testing.assert_allclose(g[:4], ph / den, rtol=1e-12)
        np.testing.assert_array_equal(g[4:8], np.zeros(4))

    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            cam, pts = safe_camera_points(rng, 6)
            dL = rng.normal(size=(6, 2))

            def loss(a):
                return float((project(CameraParams(a), pts) * dL).sum())

            fd = central_diff(loss, cam.a, step=1e-5)
            assert rel_err(grad_wrt_camera(cam, pts, dL), fd) < 1e-6

    def test_linear_in_upstream_gradient(self, rng):
        cam, pts = safe_camera_points(rng, 5)
        g1 = rng.normal(size=(5, 2))
        g2 = rng.normal(size=(5, 2))
        lhs = grad_wrt_camera(cam, pts, 2.0 * g1 - 3.0 * g2)
        rhs = 2.0 * grad_wrt_camera(cam, pts, g1) - 3.0 * grad_wrt_camera(cam, pts, g2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)

    def test_accumulates_over_points(self, rng):
        cam, pts = safe_camera_points(rng, 5)
        dL = rng.normal(size=(5, 2))
        total = grad_wrt_camera(cam, pts, dL)
        per_point = sum(grad_wrt_camera(cam, pts[i : i + 1], dL[i : i + 1]) for i in range(5))
        np.testing.assert_allclose(total, per_point, rtol=1e-12)


class TestGradWrtPoints:
    def test_zero_upstream_gradient(self, rng):
        cam, pts = safe_camera_points(rng, 4)
        g = grad_wrt_points(cam, pts, np.zeros((4, 2)))
        np.testing.assert_array_equal(g, np.zeros((4, 3)))

    def test_constant_denominator_passthrough(self, rng):
        # Projection linear in x, y and independent of z: gradient is (g1, g2, 0).
        cam = CameraParams([1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
        pts = rng.normal(size=(6, 3))
        dL = rng.normal(size=(6, 2))
        g = grad_wrt_points(cam, pts, dL)
        np.testing.assert_allclose(g[:, :2], dL, rtol=1e-14)
        np.testing.assert_array_equal(g[:, 2], np.zeros(6))

    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            cam, pts = safe_camera_points(rng, 5)
            dL = rng.normal(size=(5, 2))

            def loss(flat_pts):
                return float((project(cam, flat_pts.reshape(5, 3)) * dL).sum())

            fd = central_diff(loss, pts.ravel(), step=1e-5).reshape(5, 3)
            assert rel_err(grad_wrt_points(cam, pts, dL), fd) < 1e-6

    def test_per_point_independence(self, rng):
        cam, pts = safe_camera_points(rng, 5)
        dL = rng.normal(size=(5, 2))
        full = grad_wrt_points(cam, pts, dL)
        for i in range(5):
            row = grad_wrt_points(cam, pts[i : i + 1], dL[i : i + 1])
            np.testing.assert_allclose(full[i], row[0], rtol=1e-13)

    def test_permutation_equivariance(self, rng):
        cam, pts = safe_camera_points(rng, 8)
        dL = rng.normal(size=(8, 2))
        perm = rng.permutation(8)
        np.testing.assert_allclose(
            grad_wrt_points(cam, pts[perm], dL[perm]),
            grad_wrt_points(cam, pts, dL)[perm],
            rtol=1e-13,
        )
