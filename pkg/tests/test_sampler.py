import numpy as np
import pytest

from facewarp.sampler import Grid2D, grad_wrt_coords, grad_wrt_grid, sample_bilinear

from conftest import central_diff, rel_err


def oracle_sample(data, x, y):
    """Scalar-loop four-weight oracle, clamp-to-edge, one coordinate."""
    h, w, c = data.shape
    cx = min(max(x, 0.0), w - 1.0)
    cy = min(max(y, 0.0), h - 1.0)
    x0 = int(np.floor(cx))
    y0 = int(np.floor(cy))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    out = np.zeros(c)
    for ch in range(c):
        out[ch] = (
            data[y0, x0, ch] * (1 - fx) * (1 - fy)
            + data[y0, x1, ch] * fx * (1 - fy)
            + data[y1, x0, ch] * (1 - fx) * fy
            + data[y1, x1, ch] * fx * fy
        )
    return out


def interior_coords(rng, n, w, h, margin=0.05):
    """Coordinates strictly inside, away from texel gridlines."""
    cx = rng.integers(0, w - 1, size=n) + rng.uniform(margin, 1 - margin, size=n)
    cy = rng.integers(0, h - 1, size=n) + rng.uniform(margin, 1 - margin, size=n)
    return np.column_stack([cx, cy])


class TestGrid2D:
    def test_2d_input_gets_channel_axis(self):
        g = Grid2D(np.zeros((4, 5)))
        assert (g.height, g.width, g.channels) == (4, 5, 1)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Grid2D(np.array([[np.nan]]))

    def test_png_round_trip(self, rng, tmp_path):
        data = rng.integers(0, 256, size=(6, 7, 3)).astype(np.float64) / 255.0
        Grid2D(data).to_png(tmp_path / "g.png")
        again = Grid2D.from_png(tmp_path / "g.png")
        np.testing.assert_allclose(again.data, data, atol=1e-9)

    def test_grayscale_png(self, rng, tmp_path):
        data = rng.integers(0, 256, size=(5, 5)).astype(np.float64) / 255.0
        Grid2D(data).to_png(tmp_path / "g.png")
        again = Grid2D.from_png(tmp_path / "g.png")
        assert again.channels == 1
        np.testing.assert_allclose(again.data[:, :, 0], data, atol=1e-9)

    def test_raw_round_trip(self, rng, tmp_path):
        g = Grid2D(rng.normal(size=(3, 9, 5)))
        g.save_raw(tmp_path / "g.fwg")
        again = Grid2D.load_raw(tmp_path / "g.fwg")
        np.testing.assert_array_equal(again.data, g.data)

    def test_raw_bad_magic(self, tmp_path):
        (tmp_path / "bad.fwg").write_bytes(b"NOTAGRID" + b"\x00" * 16)
        with pytest.raises(ValueError):
            Grid2D.load_raw(tmp_path / "bad.fwg")


class TestSampleBilinear:
    def test_integer_coordinates_reproduce_texels(self, rng):
        g = Grid2D(rng.normal(size=(5, 6, 3)))
        out = sample_bilinear(g, [[2.0, 3.0]])
        np.testing.assert_array_equal(out[0], g.data[3, 2])

    def test_all_integer_coordinates_exact(self, rng):
        g = Grid2D(rng.normal(size=(4, 5, 2)))
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
        coords = np.column_stack([xs.ravel(), ys.ravel()])
        out = sample_bilinear(g, coords)
        np.testing.assert_array_equal(out.reshape(4, 5, 2), g.data)

    def test_horizontal_midpoint_averages(self):
        data = np.zeros((1, 2, 1))
        data[0, 0, 0] = 2.0
        data[0, 1, 0] = 6.0
        out = sample_bilinear(Grid2D(data), [[0.5, 0.0]])
        np.testing.assert_allclose(out, [[4.0]])

    def test_matches_scalar_oracle(self, rng):
        g = Grid2D(rng.normal(size=(7, 8, 4)))
        coords = rng.uniform(-2.0, 10.0, size=(40, 2))  # includes out-of-range
        out = sample_bilinear(g, coords)
        for i, (x, y) in enumerate(coords):
            np.testing.assert_allclose(out[i], oracle_sample(g.data, x, y), rtol=1e-13)

    def test_clamps_to_border(self, rng):
        g = Grid2D(rng.normal(size=(4, 4, 1)))
        out = sample_bilinear(g, [[-5.0, -5.0], [100.0, 100.0]])
        np.testing.assert_array_equal(out[0], g.data[0, 0])
        np.testing.assert_array_equal(out[1], g.data[3, 3])

    def test_continuity(self, rng):
        # Samples delta apart differ by at most L*delta with L from adjacent texels.
        g = Grid2D(rng.normal(size=(6, 6, 1)))
        L = max(
            np.abs(np.diff(g.data[:, :, 0], axis=0)).max(),
            np.abs(np.diff(g.data[:, :, 0], axis=1)).max(),
        )
        delta = 1e-3
        base = rng.uniform(0.0, 4.9, size=(200, 2))
        step = rng.normal(size=(200, 2))
        step = step / np.linalg.norm(step, axis=1, keepdims=True) * delta
        diff = np.abs(sample_bilinear(g, base + step) - sample_bilinear(g, base))
        assert diff.max() <= 2 * L * delta + 1e-12


class TestGradWrtCoords:
    def test_constant_grid_zero_gradient(self, rng):
        g = Grid2D(np.full((5, 5, 2), 3.25))
        coords = rng.uniform(0, 4, size=(10, 2))
        out = grad_wrt_coords(g, coords, np.ones((10, 2)))
        np.testing.assert_array_equal(out, np.zeros((10, 2)))

    def test_linear_ramp_gradient(self):
        data = np.tile(np.arange(6.0)[None, :, None], (5, 1, 1))  # value = col index
        g = Grid2D(data)
        out = grad_wrt_coords(g, [[2.3, 2.7]], [[1.0]])
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-13)

    def test_matches_finite_differences_interior(self, rng):
        g = Grid2D(rng.normal(size=(9, 9, 3)))
        coords = interior_coords(rng, 15, 9, 9)
        dL = rng.normal(size=(15, 3))

        def loss(flat):
            return float((sample_bilinear(g, flat.reshape(-1, 2)) * dL).sum())

        fd = central_diff(loss, coords.ravel(), step=1e-4).reshape(-1, 2)
        assert rel_err(grad_wrt_coords(g, coords, dL), fd) < 1e-4

    def test_clamped_direction_zero(self, rng):
        g = Grid2D(rng.normal(size=(5, 5, 1)))
        out = grad_wrt_coords(g, [[-3.0, 2.5], [2.5, 99.0]], np.ones((2, 1)))
        assert out[0, 0] == 0.0 and out[0, 1] != 0.0
        assert out[1, 1] == 0.0 and out[1, 0] != 0.0


class TestGradWrtGrid:
    def test_scatter_matches_finite_differences(self, rng):
        data = rng.normal(size=(4, 5, 2))
        coords = interior_coords(rng, 6, 5, 4)
        dL = rng.normal(size=(6, 2))

        def loss(flat):
            return float((sample_bilinear(Grid2D(flat.reshape(4, 5, 2)), coords) * dL).sum())

        fd = central_diff(loss, data.ravel(), step=1e-6).reshape(4, 5, 2)
        analytic = grad_wrt_grid(Grid2D(data), coords, dL)
        assert rel_err(analytic, fd) < 1e-7

    def test_repeated_coordinates_accumulate(self, rng):
        g = Grid2D(rng.normal(size=(3, 3, 1)))
        coords = np.array([[1.25, 1.25], [1.25, 1.25]])
        out = grad_wrt_grid(g, coords, np.ones((2, 1)))
        single = grad_wrt_grid(g, coords[:1], np.ones((1, 1)))
        np.testing.assert_allclose(out, 2 * single, rtol=1e-14)
