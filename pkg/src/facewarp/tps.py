"""3D thin-plate-spline warping: fitting, evaluation, parameter gradients.

A warp displaces points by one scalar spline per output coordinate:

    f(p) = b1 + b2*x + b3*y + b4*z + sum_j w_j * U(|c_j - p|),   U(r) = r^2 ln r

with control points c_j and parameter vector theta = (b1, b2, b3, b4,
w_1 .. w_n) of length n + 4 per coordinate.  The warped point is
p + (f_dx(p), f_dy(p), f_dz(p)).

Fitted warps satisfy the side conditions sum_j w_j = 0 and
sum_j w_j * c_j = 0 (componentwise), which bound the warp at infinity.
Network-estimated parameter vectors are accepted unconstrained; only
``fit`` enforces the side conditions (they fall out of the linear system).

Pure functions over immutable values; safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import xlogy

from .errors import SingularSystem
from .projection import as_points

# Reciprocal-condition cutoff for the bordered (n+4)x(n+4) system.
EPS_COND = 1e-12


def kernel_u(r):
    """TPS radial kernel U(r) = r^2 * ln(r), with U(0) = 0 (removable limit).

    Accepts a scalar or array of nonnegative radii; negative input raises
    ValueError.  Natural log; any base change is absorbed into fitted w.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("kernel radius must be nonnegative")
    out = xlogy(r * r, r)
    return float(out) if out.ndim == 0 else out


def _basis(controls: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Rows (1, x, y, z, U(|c_1 - p|), ..., U(|c_n - p|)) for each point."""
    d = cdist(pts, controls)
    radial = xlogy(np.square(d), d)
    return np.hstack([np.ones((pts.shape[0], 1)), pts, radial])


@dataclass(frozen=True)
class TpsWarp3D:
    """Control points plus one (n+4)-parameter vector per output coordinate.

    Parameter order is (b1, b2, b3, b4, w_1 .. w_n).
    """

    controls: np.ndarray
    theta_dx: np.ndarray
    theta_dy: np.ndarray
    theta_dz: np.ndarray

    def __post_init__(self):
        c = as_points(self.controls).copy()
        if c.shape[0] < 4:
            raise ValueError("a 3D TPS warp needs at least 4 control points")
        c.flags.writeable = False
        object.__setattr__(self, "controls", c)
        m = c.shape[0] + 4
        for name in ("theta_dx", "theta_dy", "theta_dz"):
            th = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if th.shape != (m,):
                raise ValueError(f"{name} must have length n+4 = {m}, got {th.shape[0]}")
            th.flags.writeable = False
            object.__setattr__(self, name, th)

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    def theta_matrix(self) -> np.ndarray:
        """(n+4, 3) matrix with one parameter column per output coordinate."""
        return np.column_stack([self.theta_dx, self.theta_dy, self.theta_dz])

    def transform(self, pts) -> np.ndarray:
        """Warp points: p + (f_dx(p), f_dy(p), f_dz(p)).  Shape (N, 3)."""
        pts = as_points(pts)
        return pts + _basis(self.controls, pts) @ self.theta_matrix()

    # ---- interop -----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "controls": self.controls.tolist(),
                "theta_dx": self.theta_dx.tolist(),
                "theta_dy": self.theta_dy.tolist(),
                "theta_dz": self.theta_dz.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "TpsWarp3D":
        d = json.loads(text) if isinstance(text, str) else text
        return cls(
            np.asarray(d["controls"], dtype=np.float64),
            np.asarray(d["theta_dx"], dtype=np.float64),
            np.asarray(d["theta_dy"], dtype=np.float64),
            np.asarray(d["theta_dz"], dtype=np.float64),
        )

    def to_text(self) -> str:
        """Plain text: first line n, then one number per line.

        Order: controls row-major (3n numbers), then theta_dx, theta_dy,
        theta_dz (n+4 numbers each).  Meant for plotting-script interop.
        """
        nums = np.concatenate(
            [self.controls.ravel(), self.theta_dx, self.theta_dy, self.theta_dz]
        )
        lines = [str(self.n_controls)] + [f"{v:.17g}" for v in nums]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TpsWarp3D":
        toks = text.split()
        n = int(toks[0])
        vals = np.array([float(t) for t in toks[1:]])
        expect = 3 * n + 3 * (n + 4)
        if vals.shape[0] != expect:
            raise ValueError(f"expected {expect} numbers after header, got {vals.shape[0]}")
        c = vals[: 3 * n].reshape(n, 3)
        rest = vals[3 * n :].reshape(3, n + 4)
        return cls(c, rest[0], rest[1], rest[2])


def identity_warp(controls) -> TpsWarp3D:
    """All-zero parameters: transform(p) == p."""
    controls = as_points(controls)
    z = np.zeros(controls.shape[0] + 4)
    return TpsWarp3D(controls, z, z.copy(), z.copy())


def fit(sources, targets, lambda_reg: float = 0.0) -> TpsWarp3D:
    """Fit a warp sending each source control point to its target.

    Solves the standard bordered system

        [K + lambda*I  P] [w]   [targets - sources]
        [P^T           0] [b] = [0                ]

    once per output coordinate (shared factorization, three right-hand
    sides).  K_ij = U(|c_i - c_j|), P = [1 | sources].  With lambda_reg = 0
    the fitted warp interpolates the targets exactly.

    Parameters
    ----------
    sources : (n, 3) array
        Control points on the model, n >= 4, in general position.
    targets : (n, 3) array
        Desired warped locations, paired with sources by index.
    lambda_reg : float
        Nonnegative smoothing term added to the kernel-block diagonal.

    Raises
    ------
    SingularSystem
        If the system's reciprocal condition number falls below EPS_COND
        (coplanar or duplicate controls).
    """
    sources = as_points(sources)
    targets = as_points(targets)
    if sources.shape != targets.shape:
        raise ValueError("sources and targets must have matching shapes")
    n = sources.shape[0]
    if n < 4:
        raise ValueError("TPS fitting needs at least 4 correspondences")
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")

    d = cdist(sources, sources)
    K = xlogy(np.square(d), d)
    K[np.diag_indices(n)] += lambda_reg
    P = np.hstack([np.ones((n, 1)), sources])
    L = np.zeros((n + 4, n + 4))
    L[:n, :n] = K
    L[:n, n:] = P
    L[n:, :n] = P.T

    cond = np.linalg.cond(L)
    if not np.isfinite(cond) or 1.0 / cond < EPS_COND:
        raise SingularSystem(
            f"TPS system is numerically singular (rcond = {0.0 if not np.isfinite(cond) else 1.0 / cond:.2e}); "
            "controls are likely coplanar or duplicated"
        )
    rhs = np.vstack([targets - sources, np.zeros((4, 3))])
    try:
        sol = np.linalg.solve(L, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cond check catches first
        raise SingularSystem(str(exc)) from exc
    w, b = sol[:n], sol[n:]
    return TpsWarp3D(sources, *(np.concatenate([b[:, k], w[:, k]]) for k in range(3)))


def apply(warp: TpsWarp3D, pts) -> np.ndarray:
    """Functional alias for ``warp.transform(pts)``."""
    return warp.transform(pts)


def grad_wrt_params(warp: TpsWarp3D, pts, dL_dO):
    """Gradients of a scalar loss w.r.t. the three parameter vectors.

    The Jacobian row of output-x at point p w.r.t. theta_dx is the basis row
    (1, x, y, z, U(|c_1 - p|), ..., U(|c_n - p|)) and zero for the other two
    outputs, so each parameter vector's gradient is the basis matrix
    contracted with the matching column of ``dL_dO``, accumulated over all
    points.

    Parameters
    ----------
    dL_dO : (N, 3) array
        Upstream gradient at each warped output point.

    Returns
    -------
    (d_theta_dx, d_theta_dy, d_theta_dz) : three (n+4,) arrays
    """
    pts = as_points(pts)
    g = np.asarray(dL_dO, dtype=np.float64)
    if g.shape != (pts.shape[0], 3):
        raise ValueError(f"dL_dO must have shape ({pts.shape[0]}, 3), got {g.shape}")
    phi = _basis(warp.controls, pts)
    out = phi.T @ g
    return out[:, 0], out[:, 1], out[:, 2]


def side_condition_residual(warp: TpsWarp3D) -> float:
    """Max abs residual of the side conditions over the three splines.

    Fitted warps satisfy this to ~1e-8; estimator-driven warps need not.
    """
    n = warp.n_controls
    P = np.hstack([np.ones((n, 1)), warp.controls])
    W = warp.theta_matrix()[4:, :]
    return float(np.abs(P.T @ W).max())
