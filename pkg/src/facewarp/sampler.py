"""Bilinear sampling of multi-channel 2D grids at continuous coordinates.

Pixel-center convention (the one place it is defined): integer coordinates
lie at texel centers, origin at the top-left texel, x along columns, y along
rows.  The same convention is used for texture sampling and feature-map
sampling; an off-by-half here silently degrades alignment downstream.

Coordinates outside [0, w-1] x [0, h-1] clamp to the border (keeps samples
and gradients defined when an estimated camera pushes projections slightly
off-image); the coordinate gradient is zero in a clamped direction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_RAW_MAGIC = b"FWGRID1\n"


@dataclass(frozen=True)
class Grid2D:
    """Dense (height, width, channels) float64 grid, immutable."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError(f"grid data must be (h, w) or (h, w, c), got shape {np.shape(self.data)}")
        if not np.all(np.isfinite(d)):
            raise ValueError("grid data must be finite")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_png(cls, path) -> "Grid2D":
        """Load an 8-bit PNG, scaled to [0, 1]; L -> 1 channel, RGB(A) kept."""
        from PIL import Image

        img = Image.open(path)
        if img.mode not in ("L", "RGB", "RGBA"):
            img = img.convert("RGB")
        return cls(np.asarray(img, dtype=np.float64) / 255.0)

    def to_png(self, path) -> None:
        """Write as 8-bit PNG (values clipped to [0, 1])."""
        from PIL import Image

        arr = np.clip(self.data, 0.0, 1.0)
        arr = np.round(arr * 255.0).astype(np.uint8)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        elif arr.shape[2] not in (3, 4):
            raise ValueError(f"cannot write {arr.shape[2]}-channel grid as PNG")
        Image.fromarray(arr).save(path)

    def save_raw(self, path) -> None:
        """Raw float container: magic, u32 width/height/channels, float64 data."""
        with open(path, "wb") as fh:
            fh.write(_RAW_MAGIC)
            fh.write(struct.pack("<III", self.width, self.height, self.channels))
            fh.write(self.data.astype("<f8").tobytes())

    @classmethod
    def load_raw(cls, path) -> "Grid2D":
        with open(path, "rb") as fh:
            magic = fh.read(len(_RAW_MAGIC))
            if magic != _RAW_MAGIC:
                raise ValueError(f"{path}: not a raw grid file (bad magic {magic!r})")
            w, h, c = struct.unpack("<III", fh.read(12))
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.shape[0] != w * h * c:
            raise ValueError(f"{path}: expected {w * h * c} values, found {data.shape[0]}")
        return cls(data.reshape(h, w, c).copy())


def _as_coords(coords) -> np.ndarray:
    out = np.asarray(coords, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValueError(f"expected coordinates of shape (N, 2), got {out.shape}")
    return out


def _corners(grid: Grid2D, coords: np.ndarray):
    """Clamped corner indices and fractional weights for each coordinate."""
    w, h = grid.width, grid.height
    cx = np.clip(coords[:, 0], 0.0, w - 1.0)
    cy = np.clip(coords[:, 1], 0.0, h - 1.0)
    x0 = np.floor(cx).astype(np.intp)
    y0 = np.floor(cy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    return x0, x1, y0, y1, fx, fy


def sample_bilinear(grid: Grid2D, coords) -> np.ndarray:
    """Sample the grid at continuous (x, y) coordinates.

    Returns an (N, channels) array: the standard four-texel bilinear blend
    per channel.  Out-of-range coordinates clamp to the border.
    """
    coords = _as_coords(coords)
    x0, x1, y0, y1, fx, fy = _corners(grid, coords)
    d = grid.data
    fx = fx[:, None]
    fy = fy[:, None]
    return (
        d[y0, x0] * (1 - fx) * (1 - fy)
        + d[y0, x1] * fx * (1 - fy)
        + d[y1, x0] * (1 - fx) * fy
        + d[y1, x1] * fx * fy
    )


def grad_wrt_coords(grid: Grid2D, coords, dL_dO) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the sample coordinates.

    Piecewise-bilinear derivative contracted with the upstream per-sample
    gradients ``dL_dO`` (shape (N, channels)).  A direction that was clamped
    at the border gets zero gradient.  Returns (N, 2).
    """
    coords = _as_coords(coords)
    g = np.asarray(dL_dO, dtype=np.float64)
    if g.shape != (coords.shape[0], grid.channels):
        raise ValueError(
            f"dL_dO must have shape ({coords.shape[0]}, {grid.channels}), got {g.shape}"
        )
    x0, x1, y0, y1, fx, fy = _corners(grid, coords)
    d = grid.data
    fx = fx[:, None]
    fy = fy[:, None]
    ddx = (d[y0, x1] - d[y0, x0]) * (1 - fy) + (d[y1, x1] - d[y1, x0]) * fy
    ddy = (d[y1, x0] - d[y0, x0]) * (1 - fx) + (d[y1, x1] - d[y0, x1]) * fx
    out = np.column_stack([(g * ddx).sum(axis=1), (g * ddy).sum(axis=1)])
    w, h = grid.width, grid.height
    out[(coords[:, 0] < 0) | (coords[:, 0] > w - 1), 0] = 0.0
    out[(coords[:, 1] < 0) | (coords[:, 1] > h - 1), 1] = 0.0
    return out


def grad_wrt_grid(grid: Grid2D, coords, dL_dO) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the grid values (scatter of weights).

    Needed when the sampled grid is itself produced by trainable layers.
    Returns an array shaped like ``grid.data``.
    """
    coords = _as_coords(coords)
    g = np.asarray(dL_dO, dtype=np.float64)
    if g.shape != (coords.shape[0], grid.channels):
        raise ValueError(
            f"dL_dO must have shape ({coords.shape[0]}, {grid.channels}), got {g.shape}"
        )
    x0, x1, y0, y1, fx, fy = _corners(grid, coords)
    h, w, c = grid.data.shape
    out = np.zeros(h * w * c)
    flat = lambda yy, xx: (yy * w + xx) * c
    weights = ((1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy)
    corners = (flat(y0, x0), flat(y0, x1), flat(y1, x0), flat(y1, x1))
    ch = np.arange(c)
    for wgt, base in zip(weights, corners):
        np.add.at(out, base[:, None] + ch[None, :], g * wgt[:, None])
    return out.reshape(h, w, c)
