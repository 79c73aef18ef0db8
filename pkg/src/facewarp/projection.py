"""Camera projection of 3D points and its analytic gradients.

The camera is a full 3x4 projective matrix

    M = [[a1  a2  a3  a4 ],
         [a5  a6  a7  a8 ],
         [a9  a10 a11 1  ]]

with the bottom-right entry pinned to 1 (projective scale fixed), leaving the
11 free parameters ``a``.  Points are ordinary 3-vectors; the homogeneous
fourth coordinate is always 1 and never stored.

Projection of a point p is (m1.p / m3.p, m2.p / m3.p) where mi is the i-th
row of M acting on the homogeneous point.  Points with |m3.p| <= EPS_DEPTH
are rejected (DegenerateDepth) rather than clamped: a clamped gradient is
meaningless.

All functions are pure; CameraParams is immutable after construction and safe
to share across threads.  Nothing here parallelizes internally, so results
are independent of thread count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDepth

# Depth threshold in model units; see module docstring.
EPS_DEPTH = 1e-9


def as_points(pts) -> np.ndarray:
    """Coerce input to an (N, 3) float64 array (single points become N=1)."""
    out = np.asarray(pts, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2 or out.shape[1] != 3:
        raise ValueError(f"expected points of shape (N, 3), got {out.shape}")
    return out


@dataclass(frozen=True)
class CameraParams:
    """The 11 camera parameters a1..a11 (row-major fill of M, M[2,3] == 1)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64).reshape(-1)
        if a.shape != (11,):
            raise ValueError(f"camera parameter vector must have 11 entries, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("camera parameters must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    def to_matrix(self) -> np.ndarray:
        """Return the 3x4 projection matrix; M[2,3] is exactly 1."""
        m = np.empty((3, 4), dtype=np.float64)
        m.flat[:11] = self.a
        m[2, 3] = 1.0
        return m

    @classmethod
    def from_matrix(cls, m) -> "CameraParams":
        """Normalize an arbitrary 3x4 matrix so that M[2,3] == 1 and wrap it.

        Raises ValueError for matrices with M[2,3] == 0; those cameras are
        outside this parameterization (scale is fixed by the last entry).
        """
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 4):
            raise ValueError(f"expected a 3x4 matrix, got {m.shape}")
        if m[2, 3] == 0.0 or not np.isfinite(m[2, 3]):
            raise ValueError("matrix with M[2,3] == 0 cannot be normalized to M[2,3] = 1")
        m = m / m[2, 3]
        return cls(m.flat[:11].copy())

    # ---- interop -----------------------------------------------------------

    def to_text_line(self) -> str:
        """11 numbers, whitespace separated, full double precision."""
        return " ".join(f"{v:.17g}" for v in self.a)

    @classmethod
    def from_text_line(cls, line: str) -> "CameraParams":
        vals = [float(tok) for tok in line.split()]
        if len(vals) != 11:
            raise ValueError(f"expected 11 numbers on the line, got {len(vals)}")
        return cls(np.array(vals))

    def to_json(self) -> str:
        """JSON array of the 11 parameters."""
        return json.dumps([float(v) for v in self.a])

    @classmethod
    def from_json(cls, text: str | list) -> "CameraParams":
        vals = json.loads(text) if isinstance(text, str) else list(text)
        return cls(np.asarray(vals, dtype=np.float64))

    def matrix_text_block(self) -> str:
        """3x4 row-major text block (one row per line) for interop."""
        m = self.to_matrix()
        return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in m) + "\n"


def _split(cam: CameraParams, pts: np.ndarray):
    """Return (numerators (N,2), denominators (N,)), checking depth."""
    m = cam.to_matrix()
    num = pts @ m[:2, :3].T + m[:2, 3]
    den = pts @ m[2, :3] + 1.0
    bad = np.abs(den) <= EPS_DEPTH
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DegenerateDepth(idx, den[idx])
    return num, den


def project(cam: CameraParams, pts) -> np.ndarray:
    """Project 3D points through the camera.

    Parameters
    ----------
    cam : CameraParams
    pts : array-like, shape (N, 3)
        World points (homogeneous coordinate implicitly 1).

    Returns
    -------
    ndarray, shape (N, 2)
        Image-plane coordinates (m1.p / m3.p, m2.p / m3.p), input order
        preserved.

    Raises
    ------
    DegenerateDepth
        If any point has |m3.p| <= EPS_DEPTH (reports the first such index).
    """
    pts = as_points(pts)
    num, den = _split(cam, pts)
    return num / den[:, None]


def grad_wrt_camera(cam: CameraParams, pts, dL_dO) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the 11 camera parameters.

    Chain-rules the upstream per-point gradients ``dL_dO`` (shape (N, 2))
    through the projection and accumulates over all points.  Only the first
    11 entries of the full 12-entry matrix gradient are returned; the pinned
    M[2,3] is constant.

    Returns an 11-vector ordered like CameraParams.a.
    """
    pts = as_points(pts)
    g = np.asarray(dL_dO, dtype=np.float64)
    if g.shape != (pts.shape[0], 2):
        raise ValueError(f"dL_dO must have shape ({pts.shape[0]}, 2), got {g.shape}")
    num, den = _split(cam, pts)
    ph = np.hstack([pts, np.ones((pts.shape[0], 1))])  # homogeneous points (N,4)
    w = g / den[:, None]
    dm1 = w[:, 0] @ ph
    dm2 = w[:, 1] @ ph
    s = (g * num).sum(axis=1) / den**2
    dm3 = -(s @ ph)
    return np.concatenate([dm1, dm2, dm3[:3]])


def grad_wrt_points(cam: CameraParams, pts, dL_dO) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the 3D points, one row per point.

    Uses the reduced rows mi' (first three entries of each matrix row); the
    homogeneous coordinate is fixed so it contributes no gradient.  Each
    point's gradient is independent of the others.

    Returns an (N, 3) array in input order.
    """
    pts = as_points(pts)
    g = np.asarray(dL_dO, dtype=np.float64)
    if g.shape != (pts.shape[0], 2):
        raise ValueError(f"dL_dO must have shape ({pts.shape[0]}, 2), got {g.shape}")
    m = cam.to_matrix()
    num, den = _split(cam, pts)
    lin = g @ m[:2, :3]  # g1*m1' + g2*m2' per point
    t = (g * num).sum(axis=1) / den**2
    return lin / den[:, None] - t[:, None] * m[2, :3]
