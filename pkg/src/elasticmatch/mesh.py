"""Triangle meshes: container, OFF / ascii-PLY I/O, per-face geometry,
1-to-4 subdivision, edge-collapse decimation, and nearest-vertex texture
transfer.

Conventions
-----------
Faces are index triples in counter-clockwise order; the induced normal is
``cross(v1 - v0, v2 - v0)`` normalized. Vertex coordinates are in model
units, textures are one scalar per vertex in signal units. All arrays held
by a mesh are frozen (non-writeable); operations return new meshes.
"""

import heapq

import numpy as np

from .errors import (
    DecimationError,
    MeshFormatError,
    MeshValidationError,
    TextureError,
)

# Faces with area below this factor times bbox_diagonal**2 are treated as
# degenerate: zero normal, zero feature contribution, zero derivative.
DEGENERATE_AREA_FACTOR = 1e-12

_FLOAT_FMT = "%.17g"  # exact float64 round trip, >= 9 significant digits


class TriangleMesh:
    """Immutable triangular surface mesh.

    Parameters
    ----------
    vertices : (V, 3) array_like of float
        Vertex coordinates.
    faces : (F, 3) array_like of int
        Vertex index triples, counter-clockwise orientation.
    texture : (V,) array_like of float, optional
        One scalar signal value per vertex.
    """

    __slots__ = ("vertices", "faces", "texture", "_bbox_diag")

    def __init__(self, vertices, faces, texture=None):
        vertices = np.array(vertices, dtype=np.float64)
        faces = np.array(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshValidationError(
                f"vertices must have shape (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshValidationError(
                f"faces must have shape (F, 3), got {faces.shape}")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                bad = int(np.argmax((faces < 0) | (faces >= len(vertices))))
                raise MeshValidationError(
                    f"face {bad // 3} references a vertex index outside "
                    f"[0, {len(vertices)})")
            repeated = ((faces[:, 0] == faces[:, 1])
                        | (faces[:, 1] == faces[:, 2])
                        | (faces[:, 2] == faces[:, 0]))
            if repeated.any():
                raise MeshValidationError(
                    f"face {int(np.argmax(repeated))} repeats a vertex index")
        if texture is not None:
            texture = np.array(texture, dtype=np.float64)
            if texture.shape != (len(vertices),):
                raise MeshValidationError(
                    f"texture must have one scalar per vertex, got shape "
                    f"{texture.shape} for {len(vertices)} vertices")
            texture.flags.writeable = False
        vertices.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "texture", texture)
        object.__setattr__(self, "_bbox_diag", None)

    def __setattr__(self, name, value):
        raise AttributeError("TriangleMesh is immutable")

    def __reduce__(self):
        # frozen __setattr__ defeats default slot unpickling
        return (TriangleMesh,
                (np.asarray(self.vertices), np.asarray(self.faces),
                 None if self.texture is None else np.asarray(self.texture)))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def bbox_diagonal(self):
        """Diagonal length of the axis-aligned bounding box."""
        cached = self._bbox_diag
        if cached is None:
            if len(self.vertices) == 0:
                cached = 0.0
            else:
                extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
                cached = float(np.linalg.norm(extent))
            object.__setattr__(self, "_bbox_diag", cached)
        return cached

    def with_vertices(self, vertices):
        """New mesh with the same connectivity and texture but new vertex
        positions. Skips face re-validation (connectivity is shared)."""
        vertices = np.array(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise MeshValidationError(
                f"replacement vertices must have shape {self.vertices.shape}, "
                f"got {vertices.shape}")
        vertices.flags.writeable = False
        out = object.__new__(TriangleMesh)
        object.__setattr__(out, "vertices", vertices)
        object.__setattr__(out, "faces", self.faces)
        object.__setattr__(out, "texture", self.texture)
        object.__setattr__(out, "_bbox_diag", None)
        return out

    def with_texture(self, texture):
        """New mesh with the same geometry and a replaced texture
        (or texture removed when ``texture`` is None)."""
        return TriangleMesh(self.vertices, self.faces, texture)

    def __repr__(self):
        tex = ", textured" if self.texture is not None else ""
        return (f"TriangleMesh({self.n_vertices} vertices, "
                f"{self.n_faces} faces{tex})")


class FaceGeometry:
    """Per-face quantities: unit normals, areas, barycenters, face texture.

    ``degenerate_count`` reports how many faces fell below the degenerate
    area threshold (their normal is the zero vector).
    """

    __slots__ = ("normals", "areas", "barycenters", "face_texture",
                 "degenerate_count")

    def __init__(self, normals, areas, barycenters, face_texture,
                 degenerate_count):
        self.normals = normals
        self.areas = areas
        self.barycenters = barycenters
        self.face_texture = face_texture
        self.degenerate_count = degenerate_count


def face_corners(mesh):
    """The three (F, 3) corner position arrays of every face."""
    v, f = mesh.vertices, mesh.faces
    return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]


def face_cross_products(mesh):
    """Cross products cross(v1-v0, v2-v0), their norms, and the degenerate
    cross-norm threshold (2 x area threshold)."""
    v0, v1, v2 = face_corners(mesh)
    cross = np.cross(v1 - v0, v2 - v0)
    norms = np.linalg.norm(cross, axis=1)
    thresh = 2.0 * DEGENERATE_AREA_FACTOR * mesh.bbox_diagonal ** 2
    return cross, norms, thresh


def face_geometry(mesh):
    """Compute unit normals, areas, barycenters and face textures.

    Degenerate faces (area below ``DEGENERATE_AREA_FACTOR * diag**2``) get a
    zero normal and are counted in ``degenerate_count``.
    """
    v0, v1, v2 = face_corners(mesh)
    cross, norms, thresh = face_cross_products(mesh)
    ok = norms > thresh
    normals = np.zeros_like(cross)
    np.divide(cross, norms[:, None], out=normals, where=ok[:, None])
    areas = 0.5 * norms
    barycenters = (v0 + v1 + v2) / 3.0
    face_texture = None
    if mesh.texture is not None:
        t = mesh.texture
        face_texture = (t[mesh.faces[:, 0]] + t[mesh.faces[:, 1]]
                        + t[mesh.faces[:, 2]]) / 3.0
    return FaceGeometry(normals, areas, barycenters, face_texture,
                        int(np.count_nonzero(~ok)))


def count_inconsistent_edges(mesh):
    """Number of directed edges that occur more than once.

    In a consistently oriented mesh every undirected edge is traversed in
    opposite directions by its (at most two) incident faces, so each directed
    edge appears exactly once. A repeated directed edge means two adjacent
    faces induce the same direction on a shared edge.
    """
    if mesh.n_faces == 0:
        return 0
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    keys = directed[:, 0] * np.int64(mesh.n_vertices) + directed[:, 1]
    _, counts = np.unique(keys, return_counts=True)
    return int(np.count_nonzero(counts > 1))


def total_area(mesh):
    """Sum of all face areas."""
    return float(face_geometry(mesh).areas.sum())


# ---------------------------------------------------------------------------
# File I/O

def _detect_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("off", "ply"):
            raise MeshFormatError(f"unsupported mesh format '{fmt}'")
        return fmt
    name = str(path).lower()
    if name.endswith(".off"):
        return "off"
    if name.endswith(".ply"):
        return "ply"
    raise MeshFormatError(
        f"cannot infer mesh format from '{path}' (use .off or .ply)")


def load_mesh(path, fmt=None):
    """Load a mesh from an OFF or ascii-PLY file.

    PLY per-vertex float properties named ``texture`` or ``quality`` are
    loaded as the mesh texture.
    """
    fmt = _detect_format(path, fmt)
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if fmt == "off":
        return _parse_off(lines, path)
    return _parse_ply(lines, path)


def save_mesh(mesh, path, fmt=None):
    """Write a mesh to an OFF or ascii-PLY file.

    Floats are printed with 17 significant digits, so a reload reproduces
    the mesh bit for bit. OFF has no texture slot; saving a textured mesh
    as OFF raises TextureError (use PLY).
    """
    fmt = _detect_format(path, fmt)
    if fmt == "off":
        if mesh.texture is not None:
            raise TextureError(
                "OFF cannot store per-vertex texture; save as PLY instead")
        text = _format_off(mesh)
    else:
        text = _format_ply(mesh)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def _parse_floats(tokens, n, lineno, what):
    if len(tokens) != n:
        raise MeshFormatError(
            f"line {lineno}: expected {n} values for {what}, "
            f"got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise MeshFormatError(f"line {lineno}: bad float in {what}: {exc}")


def _parse_face_line(tokens, lineno):
    if not tokens:
        raise MeshFormatError(f"line {lineno}: empty face line")
    try:
        vals = [int(t) for t in tokens]
    except ValueError as exc:
        raise MeshFormatError(f"line {lineno}: bad face index: {exc}")
    if vals[0] != 3:
        raise MeshFormatError(
            f"line {lineno}: only triangles are supported, "
            f"face has {vals[0]} vertices")
    if len(vals) != 4:
        raise MeshFormatError(
            f"line {lineno}: triangle face line must have 4 integers")
    return vals[1:]


def _validated(vertices, faces, texture, path):
    try:
        return TriangleMesh(vertices, faces, texture)
    except MeshValidationError as exc:
        raise MeshValidationError(f"{path}: {exc}")


def _parse_off(lines, path):
    # iterator over (lineno, stripped) skipping blanks and '#' comments
    content = [(i + 1, ln.strip()) for i, ln in enumerate(lines)
               if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise MeshFormatError(f"{path}: empty file")
    pos = 0
    lineno, header = content[pos]
    if header != "OFF":
        raise MeshFormatError(f"line {lineno}: expected 'OFF' header, "
                              f"got '{header}'")
    pos += 1
    if pos >= len(content):
        raise MeshFormatError(f"line {lineno}: missing counts line")
    lineno, counts = content[pos]
    tokens = counts.split()
    if len(tokens) != 3:
        raise MeshFormatError(
            f"line {lineno}: counts line must be 'V F E'")
    try:
        n_v, n_f = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise MeshFormatError(f"line {lineno}: bad count: {exc}")
    pos += 1
    if len(content) - pos < n_v + n_f:
        raise MeshFormatError(
            f"line {lineno}: file declares {n_v} vertices and {n_f} faces "
            f"but only {len(content) - pos} data lines follow")
    vertices = np.empty((n_v, 3))
    for i in range(n_v):
        lineno, line = content[pos + i]
        vertices[i] = _parse_floats(line.split(), 3, lineno, "vertex")
    pos += n_v
    faces = np.empty((n_f, 3), dtype=np.int64)
    for i in range(n_f):
        lineno, line = content[pos + i]
        faces[i] = _parse_face_line(line.split(), lineno)
    return _validated(vertices, faces, None, path)


def _format_off(mesh):
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    for v in mesh.vertices:
        out.append(" ".join(_FLOAT_FMT % x for x in v))
    for f in mesh.faces:
        out.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(out) + "\n"


_TEXTURE_PROPERTY_NAMES = ("texture", "quality")
_PLY_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_PLY_INT_TYPES = {"char", "uchar", "int8", "uint8", "short", "ushort",
                  "int16", "uint16", "int", "uint", "int32", "uint32"}


def _parse_ply(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("line 1: expected 'ply' magic")
    elements = []  # (name, count, [property names]) in declaration order
    lineno = 1
    i = 1
    in_header = True
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        tokens = line.split()
        kw = tokens[0]
        if kw == "format":
            if tokens[1:] != ["ascii", "1.0"]:
                raise MeshFormatError(
                    f"line {lineno}: only 'format ascii 1.0' is supported")
        elif kw == "element":
            if len(tokens) != 3:
                raise MeshFormatError(f"line {lineno}: bad element line")
            try:
                count = int(tokens[2])
            except ValueError as exc:
                raise MeshFormatError(f"line {lineno}: bad element count: {exc}")
            elements.append([tokens[1], count, []])
        elif kw == "property":
            if not elements:
                raise MeshFormatError(
                    f"line {lineno}: property before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise MeshFormatError(f"line {lineno}: bad list property")
                elements[-1][2].append(("list", tokens[4]))
            else:
                if len(tokens) != 3:
                    raise MeshFormatError(f"line {lineno}: bad property line")
                if tokens[1] not in _PLY_FLOAT_TYPES | _PLY_INT_TYPES:
                    raise MeshFormatError(
                        f"line {lineno}: unsupported property type "
                        f"'{tokens[1]}'")
                elements[-1][2].append(("scalar", tokens[2]))
        elif kw == "end_header":
            in_header = False
            break
        else:
            raise MeshFormatError(
                f"line {lineno}: unknown header keyword '{kw}'")
    if in_header:
        raise MeshFormatError(f"line {lineno}: missing 'end_header'")

    vertices = faces = texture = None
    for name, count, props in elements:
        rows = []
        for r in range(count):
            if i >= len(lines):
                raise MeshFormatError(
                    f"line {len(lines)}: unexpected end of file in element "
                    f"'{name}' ({r} of {count} rows read)")
            lineno = i + 1
            tokens = lines[i].split()
            i += 1
            rows.append((lineno, tokens))
        if name == "vertex":
            names = [p[1] for p in props if p[0] == "scalar"]
            if props and any(p[0] == "list" for p in props):
                raise MeshFormatError(
                    f"{path}: list properties on vertices are not supported")
            for axis in ("x", "y", "z"):
                if axis not in names:
                    raise MeshFormatError(
                        f"{path}: vertex element lacks property '{axis}'")
            tex_name = next(
                (n for n in names if n in _TEXTURE_PROPERTY_NAMES), None)
            vertices = np.empty((count, 3))
            texture = np.empty(count) if tex_name else None
            for r, (lno, tokens) in enumerate(rows):
                vals = _parse_floats(tokens, len(names), lno, "vertex")
                rec = dict(zip(names, vals))
                vertices[r] = (rec["x"], rec["y"], rec["z"])
                if tex_name:
                    texture[r] = rec[tex_name]
        elif name == "face":
            if len(props) != 1 or props[0][0] != "list":
                raise MeshFormatError(
                    f"{path}: face element must have exactly one list "
                    f"property")
            if props[0][1] not in ("vertex_indices", "vertex_index"):
                raise MeshFormatError(
                    f"{path}: face list property must be vertex_indices")
            faces = np.empty((count, 3), dtype=np.int64)
            for r, (lno, tokens) in enumerate(rows):
                faces[r] = _parse_face_line(tokens, lno)
        # other elements are read (to keep the cursor right) and ignored
    if vertices is None:
        raise MeshFormatError(f"{path}: no vertex element")
    if faces is None:
        faces = np.empty((0, 3), dtype=np.int64)
    return _validated(vertices, faces, texture, path)


def _format_ply(mesh):
    textured = mesh.texture is not None
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if textured:
        out.append("property double texture")
    out += [
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for i, v in enumerate(mesh.vertices):
        row = " ".join(_FLOAT_FMT % x for x in v)
        if textured:
            row += " " + _FLOAT_FMT % mesh.texture[i]
        out.append(row)
    for f in mesh.faces:
        out.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Subdivision

def subdivide(mesh):
    """Split every face into 4 at its edge midpoints.

    New vertex count is V + E (one midpoint per unique undirected edge).
    Orientation is preserved, the surface is unchanged as a point set, and
    midpoint textures are the mean of the edge endpoint textures.
    """
    f = mesh.faces
    v = mesh.vertices
    if len(f) == 0:
        return mesh
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges_sorted = np.sort(edges, axis=1)
    uniq, inverse = np.unique(edges_sorted, axis=0, return_inverse=True)
    mid_index = mesh.n_vertices + inverse.reshape(3, len(f))
    m01, m12, m20 = mid_index[0], mid_index[1], mid_index[2]

    midpoints = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    new_vertices = np.vstack([v, midpoints])

    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new_faces = np.empty((4 * len(f), 3), dtype=np.int64)
    new_faces[0::4] = np.column_stack([a, m01, m20])
    new_faces[1::4] = np.column_stack([b, m12, m01])
    new_faces[2::4] = np.column_stack([c, m20, m12])
    new_faces[3::4] = np.column_stack([m01, m12, m20])

    new_texture = None
    if mesh.texture is not None:
        t = mesh.texture
        new_texture = np.concatenate(
            [t, 0.5 * (t[uniq[:, 0]] + t[uniq[:, 1]])])
    return TriangleMesh(new_vertices, new_faces, new_texture)


# ---------------------------------------------------------------------------
# Decimation (shortest-edge collapse with link condition)

def decimate(mesh, target_faces):
    """Reduce the mesh to at most ``target_faces`` faces by iterative
    shortest-edge collapse.

    Collapses merge an edge to its midpoint. A collapse is allowed only if
    the link condition holds (the common neighbors of the endpoints are
    exactly the vertices opposite the edge), the edge is manifold, and no
    incident face flips its normal; this preserves topology and orientation.

    Raises DecimationError if no further collapse is possible above the
    target.
    """
    if target_faces < 4:
        raise DecimationError("target_faces must be at least 4")
    if mesh.n_faces <= target_faces:
        return mesh

    verts = mesh.vertices.copy()
    tex = mesh.texture.copy() if mesh.texture is not None else None
    faces = [list(f) for f in mesh.faces]
    alive = [True] * len(faces)
    n_alive = len(faces)
    incident = [set() for _ in range(len(verts))]
    for fi, f in enumerate(faces):
        for vi in f:
            incident[vi].add(fi)

    def edge_len_sq(u, w):
        d = verts[u] - verts[w]
        return float(d @ d)

    def push_edges_of(fi, heap):
        f = faces[fi]
        for u, w in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            if u > w:
                u, w = w, u
            heapq.heappush(heap, (edge_len_sq(u, w), u, w))

    heap = []
    for fi in range(len(faces)):
        push_edges_of(fi, heap)

    def neighbors(u):
        out = set()
        for fi in incident[u]:
            out.update(faces[fi])
        out.discard(u)
        return out

    def edge_faces(u, w):
        return incident[u] & incident[w]

    def is_boundary_vertex(u):
        # a vertex is on the boundary iff one of its edges has a single face
        for w in neighbors(u):
            if len(edge_faces(u, w)) == 1:
                return True
        return False

    while n_alive > target_faces:
        while heap:
            key, u, w = heapq.heappop(heap)
            shared = edge_faces(u, w)
            if not shared:
                continue  # stale: edge no longer exists
            cur = edge_len_sq(u, w)
            if cur > key * (1 + 1e-12) + 1e-300:
                heapq.heappush(heap, (cur, u, w))
                continue
            if len(shared) > 2:
                continue  # non-manifold edge
            # link condition: common neighbors == opposite vertices
            opposite = set()
            for fi in shared:
                opposite.update(x for x in faces[fi] if x != u and x != w)
            if neighbors(u) & neighbors(w) != opposite:
                continue
            if len(shared) == 2 and is_boundary_vertex(u) \
                    and is_boundary_vertex(w):
                continue  # interior edge joining two boundary vertices
            mid = 0.5 * (verts[u] + verts[w])
            # reject collapses that flip a surviving incident face
            flip = False
            for fi in (incident[u] | incident[w]) - shared:
                f = faces[fi]
                p = [verts[x] for x in f]
                before = np.cross(p[1] - p[0], p[2] - p[0])
                q = [mid if x in (u, w) else verts[x] for x in f]
                after = np.cross(q[1] - q[0], q[2] - q[0])
                if before @ after <= 0:
                    flip = True
                    break
            if flip:
                continue
            # perform collapse: merge u into w at the midpoint
            verts[w] = mid
            if tex is not None:
                tex[w] = 0.5 * (tex[u] + tex[w])
            for fi in shared:
                alive[fi] = False
                n_alive -= 1
                for x in faces[fi]:
                    incident[x].discard(fi)
            for fi in list(incident[u]):
                f = faces[fi]
                faces[fi] = [w if x == u else x for x in f]
                incident[u].discard(fi)
                incident[w].add(fi)
            # refresh candidate edges around the merged vertex
            for fi in incident[w]:
                push_edges_of(fi, heap)
            break
        else:
            raise DecimationError(
                f"no further edge collapse possible at {n_alive} faces "
                f"(target {target_faces})")

    keep_faces = np.array([faces[i] for i in range(len(faces)) if alive[i]],
                          dtype=np.int64)
    used = np.zeros(len(verts), dtype=bool)
    used[keep_faces.ravel()] = True
    remap = np.cumsum(used) - 1
    new_faces = remap[keep_faces]
    new_vertices = verts[used]
    new_texture = tex[used] if tex is not None else None
    return TriangleMesh(new_vertices, new_faces, new_texture)


# ---------------------------------------------------------------------------
# Texture transfer

def transfer_texture(coarse, source, chunk=1024):
    """Give every vertex of ``coarse`` the texture of its nearest ``source``
    vertex (Euclidean distance, ties broken by the lowest source index)."""
    if source.texture is None:
        raise TextureError("source mesh has no texture to transfer")
    cv = coarse.vertices
    sv = source.vertices
    nearest = np.empty(len(cv), dtype=np.int64)
    for start in range(0, len(cv), chunk):
        block = cv[start:start + chunk]
        d2 = ((block[:, None, :] - sv[None, :, :]) ** 2).sum(axis=2)
        nearest[start:start + chunk] = np.argmin(d2, axis=1)
    return coarse.with_texture(source.texture[nearest])
