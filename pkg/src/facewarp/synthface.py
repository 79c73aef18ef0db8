"""Procedurally generated synthetic mean face and sphere meshes.

The head is a closed ellipsoid (subdivided icosahedron) with gaussian
radial bumps for nose, brows, eye sockets, lips, cheeks and chin, plus
deterministic 21-point ("aflw21") and 68-point ("mpie68") landmark
assignments and TPS control points.  Everything is a pure function of its
arguments, so the bundled model is reproducible instead of shipped as data.

Conventions: +x right, +y up, +z out of the face.  The unit head fits in
roughly [-1, 1.1] on each axis.
"""

from __future__ import annotations

import numpy as np

from .mesh import FaceMesh


def icosphere(subdivisions: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere (vertices, faces) with outward CCW winding.

    Vertex count is 10 * 4**s + 2.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(map(tuple, verts))
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.add(verts[i], verts[j]) / 2.0
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    V = np.array(verts)
    F = np.array(faces, dtype=np.int64)
    # Enforce outward winding (sphere centered at origin).
    n = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    centroid = V[F].mean(axis=1)
    flip = np.einsum("ij,ij->i", n, centroid) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    return V, F


def uv_sphere(n_lat: int, n_lon: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed lat/lon sphere with two poles; n_lat * n_lon + 2 vertices.

    Used mainly to build meshes with an arbitrary vertex budget (e.g. the
    50k-vertex benchmark mesh).
    """
    if n_lat < 2 or n_lon < 3:
        raise ValueError("need n_lat >= 2 and n_lon >= 3")
    lat = np.linspace(np.pi / 2, -np.pi / 2, n_lat + 2)[1:-1]
    lon = np.linspace(0.0, 2 * np.pi, n_lon, endpoint=False)
    LA, LO = np.meshgrid(lat, lon, indexing="ij")
    band = np.stack(
        [np.cos(LA) * np.sin(LO), np.sin(LA), np.cos(LA) * np.cos(LO)], axis=-1
    ).reshape(-1, 3)
    north = np.array([[0.0, 1.0, 0.0]])
    south = np.array([[0.0, -1.0, 0.0]])
    V = np.concatenate([north, band, south])
    idx = np.arange(n_lat * n_lon).reshape(n_lat, n_lon) + 1
    faces = []
    for j in range(n_lon):
        k = (j + 1) % n_lon
        faces.append((0, idx[0, j], idx[0, k]))
        faces.append((V.shape[0] - 1, idx[-1, k], idx[-1, j]))
    for i in range(n_lat - 1):
        for j in range(n_lon):
            k = (j + 1) % n_lon
            faces.append((idx[i, j], idx[i + 1, j], idx[i + 1, k]))
            faces.append((idx[i, j], idx[i + 1, k], idx[i, k]))
    F = np.array(faces, dtype=np.int64)
    n = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    flip = np.einsum("ij,ij->i", n, V[F].mean(axis=1)) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    return V, F


# Gaussian radial bumps: (direction, amplitude, angular sigma in radians).
_FEATURE_BUMPS = [
    ((0.0, -0.12, 1.0), 0.18, 0.24),    # nose
    ((0.34, 0.26, 1.0), -0.055, 0.16),  # eye sockets
    ((-0.34, 0.26, 1.0), -0.055, 0.16),
    ((0.34, 0.46, 1.0), 0.045, 0.16),   # brow ridges
    ((-0.34, 0.46, 1.0), 0.045, 0.16),
    ((0.0, -0.52, 1.0), 0.05, 0.16),    # lips
    ((0.0, -0.88, 0.55), 0.06, 0.2),    # chin
    ((0.55, -0.25, 0.9), 0.035, 0.3),   # cheeks
    ((-0.55, -0.25, 0.9), 0.035, 0.3),
]

_ELLIPSOID_SCALE = np.array([0.78, 1.0, 0.88])


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _head_vertices(directions: np.ndarray) -> np.ndarray:
    bump = np.zeros(directions.shape[0])
    for d, amp, sigma in _FEATURE_BUMPS:
        ang = np.arccos(np.clip(directions @ _unit(d), -1.0, 1.0))
        bump += amp * np.exp(-0.5 * (ang / sigma) ** 2)
    return (1.0 + bump)[:, None] * directions * _ELLIPSOID_SCALE


def _ellipse(center, rx, ry, count, phase=0.0):
    beta = phase + np.linspace(0.0, 2 * np.pi, count, endpoint=False)
    return [(center[0] + rx * np.cos(b), center[1] + ry * np.sin(b), 1.0) for b in beta]


def _anchors_mpie68():
    anchors = []
    for k in range(17):  # jawline, ear to ear through the chin
        phi = (k - 8) / 8.0 * 1.25
        elev = -0.95 + 0.55 * (abs(k - 8) / 8.0) ** 1.5
        anchors.append((np.sin(phi), elev, np.cos(phi) * 0.75))
    for side in (-1, 1):  # brows (left block first, like the MPIE ordering)
        for k in range(5):
            x = side * (0.16 + 0.085 * k)
            anchors.append((x, 0.44 + 0.05 * np.sin(np.pi * k / 4.0), 1.0))
    for k in range(4):  # nose bridge
        anchors.append((0.0, 0.26 - 0.13 * k, 1.1))
    for k in range(5):  # nose base
        anchors.append((-0.14 + 0.07 * k, -0.2, 1.0))
    anchors += _ellipse((-0.33, 0.24), 0.1, 0.05, 6, phase=np.pi)  # left eye
    anchors += _ellipse((0.33, 0.24), 0.1, 0.05, 6, phase=np.pi)   # right eye
    anchors += _ellipse((0.0, -0.5), 0.2, 0.1, 12, phase=np.pi)    # outer mouth
    anchors += _ellipse((0.0, -0.5), 0.11, 0.045, 8, phase=np.pi)  # inner mouth
    return anchors


def _anchors_aflw21():
    anchors = []
    for side in (-1, 1):  # brows: outer, center, inner
        for x in (0.48, 0.32, 0.16):
            anchors.append((side * x, 0.45, 1.0))
    for side in (-1, 1):  # eyes: outer, center, inner corners
        for x in (0.43, 0.33, 0.23):
            anchors.append((side * x, 0.24, 1.0))
    anchors.append((-1.0, -0.05, 0.05))  # ears
    anchors.append((1.0, -0.05, 0.05))
    for x in (-0.14, 0.0, 0.14):  # nose: left, tip, right
        anchors.append((x, -0.16, 1.1))
    for x in (-0.2, 0.0, 0.2):  # mouth: left, center, right
        anchors.append((x, -0.5, 1.0))
    anchors.append((0.0, -0.95, 0.45))  # chin
    return anchors


_SCHEMES = {"mpie68": _anchors_mpie68, "aflw21": _anchors_aflw21}


def _nearest_unique_vertices(directions: np.ndarray, anchors, taken=None) -> list[int]:
    """Nearest vertex (by direction cosine) per anchor, without reuse."""
    taken = set() if taken is None else set(taken)
    out = []
    for a in anchors:
        scores = directions @ _unit(a)
        for idx in np.argsort(-scores):
            if int(idx) not in taken:
                taken.add(int(idx))
                out.append(int(idx))
                break
    return out


def _farthest_point_sample(vertices: np.ndarray, seed_indices, count: int) -> list[int]:
    chosen = list(seed_indices)
    dist = np.min(
        np.linalg.norm(vertices[:, None, :] - vertices[chosen][None, :, :], axis=2), axis=1
    )
    out = []
    for _ in range(count):
        idx = int(np.argmax(dist))
        out.append(idx)
        dist = np.minimum(dist, np.linalg.norm(vertices - vertices[idx], axis=1))
    return out


def landmark_scheme_ids(scheme: str) -> tuple:
    if scheme not in _SCHEMES:
        raise ValueError(f"unknown landmark scheme {scheme!r} (have {sorted(_SCHEMES)})")
    n = len(_SCHEMES[scheme]())
    return tuple(f"{k:02d}" for k in range(n))


def synthetic_head(
    subdivisions: int = 4, scheme: str = "mpie68", n_controls: int = 40
) -> FaceMesh:
    """The bundled synthetic mean face.

    subdivisions=4 gives 2562 vertices / 5120 faces.  Control points are the
    21-point landmark vertices padded to ``n_controls`` by farthest-point
    sampling over the whole head (well spread, never coplanar).
    """
    if scheme not in _SCHEMES:
        raise ValueError(f"unknown landmark scheme {scheme!r} (have {sorted(_SCHEMES)})")
    sphere_dirs, faces = icosphere(subdivisions)
    vertices = _head_vertices(sphere_dirs)

    landmark_vertices = _nearest_unique_vertices(sphere_dirs, _SCHEMES[scheme]())
    landmark_map = {f"{k:02d}": v for k, v in enumerate(landmark_vertices)}

    control_seed = _nearest_unique_vertices(sphere_dirs, _anchors_aflw21())
    if n_controls < 4:
        raise ValueError("need at least 4 control points")
    if n_controls <= len(control_seed):
        controls = control_seed[:n_controls]
    else:
        controls = control_seed + _farthest_point_sample(
            vertices, control_seed, n_controls - len(control_seed)
        )
    return FaceMesh(
        vertices, faces, landmark_map, np.array(controls, dtype=np.int64), scheme
    )
