"""Triangle mesh loading, validation, derived geometry, and the face dual graph.

Meshes are immutable after construction (arrays are marked read-only) and
safe to share across threads. OFF and OBJ text formats are supported;
faces must be triangles and are validated at load with line numbers in
every parse error.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data. Carries the offending source line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Mesh:
    """Indexed triangle mesh with per-face derived geometry.

    Attributes
    ----------
    vertices : (V, 3) float64
    faces : (F, 3) int64
    face_areas : (F,) float64, strictly positive
    face_centroids : (F, 3) float64
    face_normals : (F, 3) float64, unit length
    vertex_face_incidence : list of int64 arrays, faces incident to each vertex
    """

    def __init__(self, vertices, faces, _face_lines=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must be an array of 3D points")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError("faces must be vertex-index triples")
        if not np.isfinite(vertices).all():
            raise MeshError("non-finite vertex coordinate")
        nv = len(vertices)

        def face_line(f):
            return None if _face_lines is None else _face_lines[f]

        for f, (a, b, c) in enumerate(faces):
            if a == b or b == c or a == c:
                raise MeshError(f"face {f} repeats a vertex index", face_line(f))
            if min(a, b, c) < 0 or max(a, b, c) >= nv:
                raise MeshError(f"face {f} references vertex out of range [0, {nv})", face_line(f))

        e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
        e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
        cross = np.cross(e1, e2)
        cross_norm = np.linalg.norm(cross, axis=1)
        areas = 0.5 * cross_norm
        if nv:
            bbox = vertices.max(axis=0) - vertices.min(axis=0)
            scale2 = max(float(bbox @ bbox), 1.0)
        else:
            scale2 = 1.0
        degenerate = np.nonzero(areas <= 1e-14 * scale2)[0]
        if degenerate.size:
            f = int(degenerate[0])
            raise MeshError(f"face {f} is degenerate (zero area)", face_line(f))

        incidence = [[] for _ in range(nv)]
        for f, (a, b, c) in enumerate(faces):
            incidence[a].append(f)
            incidence[b].append(f)
            incidence[c].append(f)

        self.vertices = vertices
        self.faces = faces
        self.face_areas = areas
        self.face_centroids = vertices[faces].mean(axis=1)
        self.face_normals = cross / cross_norm[:, None]
        self.vertex_face_incidence = [np.array(fs, dtype=np.int64) for fs in incidence]
        for arr in (self.vertices, self.faces, self.face_areas,
                    self.face_centroids, self.face_normals):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bbox_diagonal(self) -> float:
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))

    def edge_face_map(self) -> dict[tuple[int, int], list[int]]:
        """Map each undirected mesh edge (i<j) to the faces containing it."""
        edges: dict[tuple[int, int], list[int]] = {}
        for f, (a, b, c) in enumerate(self.faces):
            for i, j in ((a, b), (b, c), (c, a)):
                key = (i, j) if i < j else (j, i)
                edges.setdefault(key, []).append(f)
        return edges

    def boundary_vertices(self) -> np.ndarray:
        """Boolean mask of vertices lying on a boundary edge (1 incident face)."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        for (i, j), fs in self.edge_face_map().items():
            if len(fs) == 1:
                mask[i] = True
                mask[j] = True
        return mask

    def enclosed_volume(self) -> float:
        """Signed volume via the divergence theorem (meaningful for closed meshes)."""
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return float(np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0)


@dataclass(frozen=True)
class DualGraph:
    """Face-adjacency graph: one node per face, one edge per interior mesh edge.

    edge_dihedral holds the exterior dihedral angle: pi on flat edges,
    below pi at concavities, above pi at convexities.
    edge_length is the length of the shared mesh edge.
    """

    n_faces: int
    edges: np.ndarray          # (E, 2) int64, u < v
    edge_dihedral: np.ndarray  # (E,) float64, in (0, 2*pi)
    edge_length: np.ndarray    # (E,) float64
    neighbors: tuple           # per-face tuple of neighbor-face arrays

    def adjacency_pairs(self):
        return self.edges


def build_dual_graph(mesh: Mesh) -> DualGraph:
    """Build the face dual graph, rejecting edges shared by more than 2 faces.

    Concavity convention: with alpha the angle between the two outward face
    normals, an edge is concave when the opposite face's centroid lies on
    this face's outward-normal side; then dihedral = pi - alpha, else
    pi + alpha. Boundary mesh edges produce no dual edge.
    """
    pairs = []
    dihedrals = []
    lengths = []
    verts = mesh.vertices
    for (i, j), fs in sorted(mesh.edge_face_map().items()):
        if len(fs) > 2:
            raise MeshError(f"non-manifold mesh edge ({i}, {j}) shared by {len(fs)} faces")
        if len(fs) != 2:
            continue
        u, v = min(fs), max(fs)
        nu, nv = mesh.face_normals[u], mesh.face_normals[v]
        cosang = float(np.clip(nu @ nv, -1.0, 1.0))
        sinang = float(np.linalg.norm(np.cross(nu, nv)))
        alpha = math.atan2(sinang, cosang)  # in [0, pi]
        concave = float((mesh.face_centroids[v] - mesh.face_centroids[u]) @ nu) > 0.0
        theta = math.pi - alpha if concave else math.pi + alpha
        pairs.append((u, v))
        dihedrals.append(theta)
        lengths.append(float(np.linalg.norm(verts[i] - verts[j])))

    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    neigh = [[] for _ in range(mesh.n_faces)]
    for u, v in pairs:
        neigh[u].append(v)
        neigh[v].append(u)
    neighbors = tuple(np.array(sorted(ns), dtype=np.int64) for ns in neigh)
    graph = DualGraph(
        n_faces=mesh.n_faces,
        edges=edges,
        edge_dihedral=np.array(dihedrals),
        edge_length=np.array(lengths),
        neighbors=neighbors,
    )
    for arr in (graph.edges, graph.edge_dihedral, graph.edge_length):
        arr.flags.writeable = False
    return graph


def face_neighborhood(graph: DualGraph, u: int, hops: int) -> set[int]:
    """BFS ball of the given radius around face u, inclusive of u."""
    if not 0 <= u < graph.n_faces:
        raise ValueError(f"face {u} not in graph with {graph.n_faces} faces")
    if hops < 0:
        raise ValueError("hops must be nonnegative")
    seen = {u}
    frontier = [u]
    for _ in range(hops):
        nxt = []
        for f in frontier:
            for g in graph.neighbors[f]:
                g = int(g)
                if g not in seen:
                    seen.add(g)
                    nxt.append(g)
        if not nxt:
            break
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# parsing


def _text_lines(source) -> list[str]:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    elif hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    else:
        raise TypeError(f"unsupported mesh source type {type(source)!r}")
    return data.decode("utf-8", errors="replace").splitlines()


def _parse_floats(parts, n, lineno, what):
    if len(parts) < n:
        raise MeshError(f"expected {n} numbers for {what}, found {len(parts)}", lineno)
    try:
        return [float(p) for p in parts[:n]]
    except ValueError as exc:
        raise MeshError(f"malformed {what}: {exc}", lineno) from None


def _parse_off(lines: list[str]):
    content = [(idx + 1, ln.split("#", 1)[0].strip()) for idx, ln in enumerate(lines)]
    content = [(no, ln) for no, ln in content if ln]
    if not content:
        raise MeshError("empty OFF stream", 1)
    pos = 0
    no, ln = content[pos]
    if ln.upper() != "OFF":
        raise MeshError(f"missing OFF header, found {ln!r}", no)
    pos += 1
    if pos >= len(content):
        raise MeshError("missing counts line", no)
    no, ln = content[pos]
    parts = ln.split()
    if len(parts) < 2:
        raise MeshError(f"counts line needs vertex and face counts, found {ln!r}", no)
    try:
        nv, nf = int(parts[0]), int(parts[1])
    except ValueError:
        raise MeshError(f"malformed counts line {ln!r}", no) from None
    pos += 1

    verts = np.zeros((nv, 3))
    for k in range(nv):
        if pos >= len(content):
            raise MeshError(f"expected {nv} vertices, found {k}", no)
        no, ln = content[pos]
        verts[k] = _parse_floats(ln.split(), 3, no, "vertex")
        pos += 1

    faces = np.zeros((nf, 3), dtype=np.int64)
    face_lines = []
    for k in range(nf):
        if pos >= len(content):
            raise MeshError(f"expected {nf} faces, found {k}", no)
        no, ln = content[pos]
        parts = ln.split()
        try:
            cnt = int(parts[0])
        except (ValueError, IndexError):
            raise MeshError(f"malformed face record {ln!r}", no) from None
        if cnt != 3:
            raise MeshError(f"only triangles are supported, face has {cnt} vertices", no)
        if len(parts) < 4:
            raise MeshError(f"face record lists {len(parts) - 1} of 3 indices", no)
        try:
            faces[k] = [int(p) for p in parts[1:4]]
        except ValueError as exc:
            raise MeshError(f"malformed face index: {exc}", no) from None
        face_lines.append(no)
        pos += 1
    return verts, faces, face_lines


def _parse_obj(lines: list[str]):
    verts = []
    faces = []
    face_lines = []
    for idx, raw in enumerate(lines):
        lineno = idx + 1
        ln = raw.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.split()
        tag = parts[0]
        if tag == "v":
            verts.append(_parse_floats(parts[1:], 3, lineno, "vertex"))
        elif tag == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise MeshError(f"only triangles are supported, face has {len(refs)} vertices", lineno)
            idxs = []
            for r in refs:
                tok = r.split("/", 1)[0]
                try:
                    i = int(tok)
                except ValueError:
                    raise MeshError(f"malformed face index {r!r}", lineno) from None
                if i < 0:
                    raise MeshError("negative (relative) OBJ indices are unsupported", lineno)
                if i == 0:
                    raise MeshError("OBJ indices are 1-based; 0 is invalid", lineno)
                idxs.append(i - 1)
            faces.append(idxs)
            face_lines.append(lineno)
        # vn/vt/o/g/s/usemtl/mtllib records carry no geometry we use
    if not verts:
        raise MeshError("no vertices in OBJ stream", 1)
    return (np.array(verts, dtype=np.float64),
            np.array(faces, dtype=np.int64).reshape(-1, 3),
            face_lines)


def load_mesh(source, format: str) -> Mesh:
    """Load a triangle mesh from an OFF or OBJ byte/text stream or path.

    Raises MeshError with a line number for malformed records, non-triangle
    faces, out-of-range indices, and degenerate (zero-area) faces.
    """
    fmt = format.lower()
    lines = _text_lines(source)
    if fmt == "off":
        verts, faces, face_lines = _parse_off(lines)
    elif fmt == "obj":
        verts, faces, face_lines = _parse_obj(lines)
    else:
        raise ValueError(f"unsupported mesh format {format!r} (expected 'off' or 'obj')")
    return Mesh(verts, faces, _face_lines=face_lines)


def load_mesh_path(path) -> Mesh:
    """Load a mesh choosing the format from the file extension."""
    p = Path(path)
    ext = p.suffix.lower().lstrip(".")
    if ext not in ("off", "obj"):
        raise ValueError(f"cannot infer mesh format from extension {p.suffix!r}")
    return load_mesh(p, ext)


def save_off(mesh_or_arrays, target) -> None:
    """Write an OFF file from a Mesh or a (vertices, faces) pair."""
    if isinstance(mesh_or_arrays, Mesh):
        verts, faces = mesh_or_arrays.vertices, mesh_or_arrays.faces
    else:
        verts, faces = mesh_or_arrays
    buf = io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{len(verts)} {len(faces)} 0\n")
    for v in verts:
        # shortest round-trip decimal per coordinate
        buf.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
    for f in faces:
        buf.write(f"3 {int(f[0])} {int(f[1])} {int(f[2])}\n")
    data = buf.getvalue()
    if hasattr(target, "write"):
        target.write(data)
    else:
        Path(target).write_text(data)
