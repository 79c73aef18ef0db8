import numpy as np
import pytest

from facewarp.projection import CameraParams


def random_camera(rng, depth_margin=0.5):
    """Random well-conditioned camera params (m3 bounded away from zero)."""
    a = rng.normal(scale=1.0, size=11)
    a[8:11] *= 0.1  # keep m3 dominated by the pinned 1 so denominators stay sane
    return CameraParams(a)


def random_points(rng, n, scale=1.0):
    return rng.normal(scale=scale, size=(n, 3))


def safe_camera_points(rng, n, margin=0.5):
    """Camera + points whose projection denominators all exceed ``margin``."""
    while True:
        cam = random_camera(rng)
        pts = random_points(rng, n)
        den = pts @ cam.to_matrix()[2, :3] + 1.0
        if np.all(np.abs(den) > margin):
            return cam, pts


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at x (test-side oracle)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * step)
    return g.reshape(x.shape)


def rel_err(analytic, numeric):
    """Max abs difference relative to the gradient's overall magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
