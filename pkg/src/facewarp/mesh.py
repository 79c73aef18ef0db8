"""Generic 3D face model: mesh storage, normals, camera center, visibility.

A FaceMesh is immutable after construction.  Landmark designations live in a
sidecar JSON next to the mesh file ({scheme, map, controls}); OBJ and PLY
carry only geometry.  Visibility runs a backface test plus an optional
z-buffer pass on the warped geometry, both driven by the estimated camera
center.  All operations allocate private buffers and are thread-safe.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshFormatError, SingularA
from .projection import EPS_DEPTH, CameraParams, as_points
from .raster import depth_buffer

VISIBILITY_RASTER_SIZE = 256
# A vertex is occluded when its depth exceeds the buffer by this fraction of
# the scene's depth range.
VISIBILITY_DEPTH_TOL = 1e-3


@dataclass(frozen=True)
class FaceMesh:
    """Triangle mesh with landmark and TPS-control designations.

    faces use counterclockwise winding for outward normals.  landmark_map
    sends semantic landmark IDs (strings) to vertex indices; scheme names
    the convention ("aflw21", "mpie68", ...).
    """

    vertices: np.ndarray
    faces: np.ndarray
    landmark_map: dict = field(default_factory=dict)
    control_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    scheme: str | None = None

    def __post_init__(self):
        v = as_points(self.vertices).copy()
        f = np.asarray(self.faces, dtype=np.int64)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3) vertex-index triples, got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            bad = int(np.argmax((f < 0) | (f >= v.shape[0])) // 3)
            raise ValueError(f"face {bad} references a vertex outside 0..{v.shape[0] - 1}")
        c = np.asarray(self.control_indices, dtype=np.int64).reshape(-1)
        if c.size and (c.min() < 0 or c.max() >= v.shape[0]):
            raise ValueError("control index out of range")
        for lid, idx in self.landmark_map.items():
            if not 0 <= int(idx) < v.shape[0]:
                raise ValueError(f"landmark {lid!r} maps to invalid vertex {idx}")
        v.flags.writeable = False
        f = f.copy()
        f.flags.writeable = False
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "control_indices", c)
        object.__setattr__(self, "landmark_map", dict(self.landmark_map))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def landmark_ids(self) -> tuple:
        """Landmark IDs in canonical (sorted) order."""
        return tuple(sorted(self.landmark_map))

    def landmark_vertex_indices(self) -> np.ndarray:
        """Vertex indices aligned with landmark_ids()."""
        return np.array([self.landmark_map[i] for i in self.landmark_ids()], dtype=np.int64)

    def control_points(self) -> np.ndarray:
        return self.vertices[self.control_indices]


def validate_edge_manifold(faces: np.ndarray) -> None:
    """Raise MeshFormatError listing edges shared by more than two faces."""
    faces = np.asarray(faces, dtype=np.int64)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        bad = np.unique(edges[np.isin(inverse, np.flatnonzero(counts > 2))], axis=0)
        listing = ", ".join(f"({a},{b})" for a, b in bad[:10])
        more = "" if bad.shape[0] <= 10 else f" (+{bad.shape[0] - 10} more)"
        raise MeshFormatError(f"mesh is not edge-manifold; offending edges: {listing}{more}")


def vertex_normals_of(vertices, faces) -> np.ndarray:
    """Area-weighted vertex normals for an arbitrary vertex set.

    The un-normalized face cross product has magnitude 2*area, so summing it
    into each incident vertex weights by area for free.  Vertices touched
    only by zero-area faces (or no face) get (0, 0, 1) and a warning.
    """
    v = as_points(vertices)
    f = np.asarray(faces, dtype=np.int64)
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for corner in range(3):
        idx = f[:, corner]
        for c in range(3):
            acc[:, c] += np.bincount(idx, weights=fn[:, c], minlength=v.shape[0])
    norms = np.linalg.norm(acc, axis=1)
    degenerate = norms < 1e-300
    if np.any(degenerate):
        warnings.warn(
            f"{int(degenerate.sum())} vertices have no well-defined normal; using (0, 0, 1)",
            stacklevel=2,
        )
        acc[degenerate] = (0.0, 0.0, 1.0)
        norms[degenerate] = 1.0
    return acc / norms[:, None]


def vertex_normals(mesh: FaceMesh) -> np.ndarray:
    return vertex_normals_of(mesh.vertices, mesh.faces)


def camera_center(cam) -> np.ndarray:
    """The 3D point annihilated by the projection matrix: -A^{-1} b.

    Accepts CameraParams or a raw 3x4 matrix.  A is the left 3x3 block, b
    the last column.  Raises SingularA when |det A| <= 1e-12.
    """
    M = cam.to_matrix() if isinstance(cam, CameraParams) else np.asarray(cam, dtype=np.float64)
    if M.shape != (3, 4):
        raise ValueError(f"expected CameraParams or 3x4 matrix, got shape {M.shape}")
    A = M[:, :3]
    det = np.linalg.det(A)
    if abs(det) <= 1e-12:
        raise SingularA(f"camera matrix A block is singular (|det| = {abs(det):.3e})")
    return -np.linalg.solve(A, M[:, 3])


def visibility(
    mesh: FaceMesh,
    warped_vertices,
    cam: CameraParams,
    use_zbuffer: bool = True,
    raster_size: int = VISIBILITY_RASTER_SIZE,
    depth_tol: float = VISIBILITY_DEPTH_TOL,
) -> np.ndarray:
    """Per-vertex visibility from the estimated camera, on warped geometry.

    A vertex is visible iff its (warped) normal faces the camera center AND
    it survives the z-buffer occlusion test.  ``use_zbuffer=False`` keeps
    only the backface stage (ablation; exact for convex shapes).

    Returns a boolean array of length n_vertices.
    """
    V = as_points(warped_vertices)
    if V.shape[0] != mesh.n_vertices:
        raise ValueError(f"expected {mesh.n_vertices} warped vertices, got {V.shape[0]}")
    center = camera_center(cam)
    normals = vertex_normals_of(V, mesh.faces)
    vis = np.einsum("ij,ij->i", normals, center - V) > 0.0

    M = cam.to_matrix()
    den = V @ M[2, :3] + 1.0
    in_front = den > EPS_DEPTH
    vis &= in_front
    if not use_zbuffer or not np.any(vis):
        return vis

    px = (V @ M[:2, :3].T + M[:2, 3]) / np.where(in_front, den, 1.0)[:, None]
    lo = px[in_front].min(axis=0)
    span = float((px[in_front].max(axis=0) - lo).max())
    scale = (raster_size - 1.0) / span if span > 0 else 1.0
    buf_px = (px - lo) * scale
    invw = np.where(in_front, 1.0 / np.where(in_front, den, 1.0), -1.0)
    zbuf = depth_buffer(buf_px, invw, mesh.faces, (raster_size, raster_size))

    ix = np.clip(np.rint(buf_px[:, 0]).astype(np.intp), 0, raster_size - 1)
    iy = np.clip(np.rint(buf_px[:, 1]).astype(np.intp), 0, raster_size - 1)
    depth_range = float(den[in_front].max() - den[in_front].min())
    tol = depth_tol * (depth_range if depth_range > 0 else 1.0)
    occluded = den > zbuf[iy, ix] + tol
    return vis & ~occluded


# ---- file I/O ---------------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".landmarks.json")


def _parse_obj(path):
    vertices, faces, face_lines = [], [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshFormatError("vertex line needs 3 coordinates", ln)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MeshFormatError(f"bad vertex coordinate in {raw.strip()!r}", ln)
            elif parts[0] == "f":
                try:
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                except ValueError:
                    raise MeshFormatError(f"bad face index in {raw.strip()!r}", ln)
                if len(idx) < 3:
                    raise MeshFormatError("face needs at least 3 vertices", ln)
                if any(i <= 0 for i in idx):
                    raise MeshFormatError("only positive (absolute) face indices are supported", ln)
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0] - 1, idx[k] - 1, idx[k + 1] - 1])
                    face_lines.append(ln)
            # other directives (vn, vt, usemtl, ...) are ignored
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces, face_lines


def _parse_ply(path):
    with open(path) as fh:
        lines = fh.readlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("missing 'ply' magic", 1)
    n_vert = n_face = None
    body_at = None
    order = []
    for ln, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshFormatError("only ascii PLY is supported", ln)
        elif parts[0] == "element":
            if parts[1] == "vertex":
                n_vert = int(parts[2])
                order.append("vertex")
            elif parts[1] == "face":
                n_face = int(parts[2])
                order.append("face")
            else:
                raise MeshFormatError(f"unsupported element {parts[1]!r}", ln)
        elif parts[0] == "end_header":
            body_at = ln  # 1-based line of end_header
            break
    if body_at is None or n_vert is None or n_face is None:
        raise MeshFormatError("incomplete PLY header")
    if order != ["vertex", "face"]:
        raise MeshFormatError("PLY must declare vertices before faces")
    vertices, faces, face_lines = [], [], []
    cursor = body_at  # index into lines (0-based) == first body line
    for k in range(n_vert):
        ln = cursor + k + 1
        if cursor + k >= len(lines):
            raise MeshFormatError("unexpected end of file in vertex block", ln)
        parts = lines[cursor + k].split()
        if len(parts) < 3:
            raise MeshFormatError("vertex line needs 3 coordinates", ln)
        try:
            vertices.append([float(x) for x in parts[:3]])
        except ValueError:
            raise MeshFormatError(f"bad vertex coordinate in {lines[cursor + k].strip()!r}", ln)
    cursor += n_vert
    for k in range(n_face):
        ln = cursor + k + 1
        if cursor + k >= len(lines):
            raise MeshFormatError("unexpected end of file in face block", ln)
        parts = lines[cursor + k].split()
        try:
            cnt = int(parts[0])
            idx = [int(x) for x in parts[1 : 1 + cnt]]
        except (ValueError, IndexError):
            raise MeshFormatError(f"bad face line {lines[cursor + k].strip()!r}", ln)
        if cnt < 3 or len(idx) != cnt:
            raise MeshFormatError("face needs at least 3 indices", ln)
        for j in range(1, cnt - 1):
            faces.append([idx[0], idx[j], idx[j + 1]])
            face_lines.append(ln)
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces, face_lines


def load_mesh(path) -> FaceMesh:
    """Load an OBJ or PLY mesh (+ sidecar landmarks JSON if present).

    Validates face indices (errors name the offending line) and edge
    manifoldness.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces, face_lines = _parse_obj(path)
    elif suffix == ".ply":
        vertices, faces, face_lines = _parse_ply(path)
    else:
        raise MeshFormatError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")
    for triple, ln in zip(faces, face_lines):
        for i in triple:
            if not 0 <= i < vertices.shape[0]:
                raise MeshFormatError(
                    f"face references vertex {i + (1 if suffix == '.obj' else 0)} "
                    f"but the file has {vertices.shape[0]} vertices",
                    ln,
                )
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    validate_edge_manifold(faces)

    landmark_map, controls, scheme = {}, [], None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        scheme = meta.get("scheme")
        landmark_map = {str(k): int(v) for k, v in meta.get("map", {}).items()}
        controls = [int(i) for i in meta.get("controls", [])]
    return FaceMesh(vertices, faces, landmark_map, np.array(controls, dtype=np.int64), scheme)


def save_mesh(mesh: FaceMesh, path, vertices=None) -> None:
    """Write OBJ or PLY (by extension) plus the sidecar landmarks JSON.

    ``vertices`` substitutes warped positions while keeping the mesh's
    connectivity and designations.
    """
    path = Path(path)
    V = mesh.vertices if vertices is None else as_points(vertices)
    if V.shape[0] != mesh.n_vertices:
        raise ValueError(f"expected {mesh.n_vertices} vertices, got {V.shape[0]}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        with open(path, "w") as fh:
            for v in V:
                fh.write(f"v {v[0]:.10g} {v[1]:.10g} {v[2]:.10g}\n")
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    elif suffix == ".ply":
        with open(path, "w") as fh:
            fh.write(
                "ply\nformat ascii 1.0\n"
                f"element vertex {mesh.n_vertices}\n"
                "property double x\nproperty double y\nproperty double z\n"
                f"element face {mesh.n_faces}\n"
                "property list uchar int vertex_indices\nend_header\n"
            )
            for v in V:
                fh.write(f"{v[0]:.10g} {v[1]:.10g} {v[2]:.10g}\n")
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
    else:
        raise MeshFormatError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")
    if mesh.landmark_map or mesh.control_indices.size:
        meta = {
            "scheme": mesh.scheme,
            "map": {k: int(v) for k, v in mesh.landmark_map.items()},
            "controls": [int(i) for i in mesh.control_indices],
        }
        _sidecar_path(path).write_text(json.dumps(meta, indent=1))
