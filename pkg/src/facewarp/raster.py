"""Z-buffer triangle rasterization kernels (numba-compiled).

Depth is handled perspective-correctly: 1/w is affine over a screen-space
triangle, so covered pixels interpolate inverse depth barycentrically and
buffers store w (smaller = closer).  Faces with any vertex at w <= 0
(behind the camera) are skipped; no clipping is performed.

``depth_buffer`` writes a *conservative far* depth per pixel: the
interpolated inverse depth is relaxed by half a pixel of its in-plane
gradient before inversion.  Occlusion tests against this buffer never flag
a vertex as hidden by its own (or an adjacent, similarly-sloped) surface,
which matters at silhouettes where depth changes steeply across a pixel.

``render_flat`` uses plain center-sample depths and writes a per-face
intensity (for the synthetic training images).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _raster(px, invw, faces, shade, zbuf, img, conservative, write_img):
    h, w = zbuf.shape
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        v0, v1, v2 = invw[i0], invw[i1], invw[i2]
        if v0 <= 0.0 or v1 <= 0.0 or v2 <= 0.0:
            continue
        x0, y0 = px[i0, 0], px[i0, 1]
        x1, y1 = px[i1, 0], px[i1, 1]
        x2, y2 = px[i2, 0], px[i2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        xmin = max(int(np.floor(min(x0, min(x1, x2)))), 0)
        xmax = min(int(np.ceil(max(x0, max(x1, x2)))), w - 1)
        ymin = max(int(np.floor(min(y0, min(y1, y2)))), 0)
        ymax = min(int(np.ceil(max(y0, max(y1, y2)))), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        # Inverse-depth gradient over the triangle's plane (constant).
        gx = (v0 * (y1 - y2) + v1 * (y2 - y0) + v2 * (y0 - y1)) / area
        gy = (v0 * (x2 - x1) + v1 * (x0 - x2) + v2 * (x1 - x0)) / area
        bias = 0.5 * (abs(gx) + abs(gy)) if conservative else 0.0
        for yy in range(ymin, ymax + 1):
            fy = float(yy)
            for xx in range(xmin, xmax + 1):
                fx = float(xx)
                l0 = ((x1 - fx) * (y2 - fy) - (x2 - fx) * (y1 - fy)) / area
                l1 = ((x2 - fx) * (y0 - fy) - (x0 - fx) * (y2 - fy)) / area
                l2 = 1.0 - l0 - l1
                if l0 < -1e-12 or l1 < -1e-12 or l2 < -1e-12:
                    continue
                inv = l0 * v0 + l1 * v1 + l2 * v2 - bias
                if inv <= 0.0:
                    continue
                d = 1.0 / inv
                if d < zbuf[yy, xx]:
                    zbuf[yy, xx] = d
                    if write_img:
                        img[yy, xx] = shade[f]


def depth_buffer(px, invw, faces, shape) -> np.ndarray:
    """Conservative-far depth buffer.

    Parameters
    ----------
    px : (V, 2) float array
        Projected vertex positions in buffer pixel coordinates (pixel
        centers at integers).
    invw : (V,) float array
        Inverse projective depths; entries <= 0 mark vertices behind the
        camera and suppress their faces.
    faces : (F, 3) int array
    shape : (height, width)

    Returns
    -------
    (height, width) float64 buffer of w values, +inf where uncovered.
    """
    zbuf = np.full(shape, np.inf)
    _raster(
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(invw, dtype=np.float64),
        np.ascontiguousarray(faces, dtype=np.int64),
        np.zeros(1),
        zbuf,
        np.zeros((1, 1)),
        True,
        False,
    )
    return zbuf


def render_flat(px, invw, faces, face_shade, shape, background: float = 0.0):
    """Flat-shaded render: nearest face's intensity per pixel.

    Returns (image, zbuf), both (height, width) float64.
    """
    zbuf = np.full(shape, np.inf)
    img = np.full(shape, float(background))
    _raster(
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(invw, dtype=np.float64),
        np.ascontiguousarray(faces, dtype=np.int64),
        np.ascontiguousarray(face_shade, dtype=np.float64),
        zbuf,
        img,
        False,
        True,
    )
    return img, zbuf
