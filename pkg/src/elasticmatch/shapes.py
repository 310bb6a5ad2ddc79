"""Synthetic triangle meshes for demos and tests: icosphere, lat/long
sphere, ellipsoid, torus, planar grid. All closed shapes are oriented with
outward normals."""

import numpy as np

from .mesh import TriangleMesh, face_geometry, total_area


def icosphere(subdivisions=2, radius=1.0):
    """Geodesic sphere from a subdivided icosahedron: 20 * 4**s faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    mesh = TriangleMesh(verts, faces)
    from .mesh import subdivide
    for _ in range(subdivisions):
        mesh = subdivide(mesh)
        v = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
        mesh = mesh.with_vertices(v)
    return mesh.with_vertices(mesh.vertices * radius)


def uv_sphere(n_lon=16, n_lat=9, radius=1.0):
    """Latitude/longitude sphere: 2 * n_lon * (n_lat - 1) faces.

    n_lat is the number of latitude bands (>= 2), n_lon the number of
    longitude segments (>= 3).
    """
    if n_lat < 2 or n_lon < 3:
        raise ValueError("need n_lat >= 2 and n_lon >= 3")
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            lam = 2.0 * np.pi * j / n_lon
            verts.append(radius * np.array([
                np.sin(theta) * np.cos(lam),
                np.sin(theta) * np.sin(lam),
                np.cos(theta)]))
    verts.append(np.array([0.0, 0.0, -radius]))
    verts = np.array(verts)

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    south = len(verts) - 1
    faces = []
    for j in range(n_lon):
        faces.append([0, ring(1, j), ring(1, j + 1)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    for j in range(n_lon):
        faces.append([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def ellipsoid(semi_axes=(1.4, 1.0, 0.8), n_lon=16, n_lat=9):
    """Axis-aligned ellipsoid triangulated on a lat/long grid."""
    base = uv_sphere(n_lon=n_lon, n_lat=n_lat, radius=1.0)
    return base.with_vertices(base.vertices * np.asarray(semi_axes))


def torus(major_radius=1.0, minor_radius=0.35, n_major=24, n_minor=12):
    """Torus of revolution around the z axis: 2 * n_major * n_minor faces."""
    if n_major < 3 or n_minor < 3:
        raise ValueError("need n_major >= 3 and n_minor >= 3")
    verts = np.empty((n_major * n_minor, 3))
    for i in range(n_major):
        u = 2.0 * np.pi * i / n_major
        for j in range(n_minor):
            v = 2.0 * np.pi * j / n_minor
            r = major_radius + minor_radius * np.cos(v)
            verts[i * n_minor + j] = (r * np.cos(u), r * np.sin(u),
                                      minor_radius * np.sin(v))

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def grid_patch(n_x=11, n_y=11, width=1.0, height=1.0):
    """Planar rectangle in z = 0: 2 * (n_x - 1) * (n_y - 1) faces,
    normals +z."""
    xs = np.linspace(0.0, width, n_x)
    ys = np.linspace(0.0, height, n_y)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack(
        [gx.ravel(), gy.ravel(), np.zeros(n_x * n_y)])

    def vid(i, j):
        return i * n_y + j

    faces = []
    for i in range(n_x - 1):
        for j in range(n_y - 1):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def scaled_to_area(mesh, target_area):
    """Uniformly rescale a mesh so its total face area matches
    ``target_area``."""
    area = total_area(mesh)
    if area <= 0.0:
        raise ValueError("mesh has no positive area")
    return mesh.with_vertices(mesh.vertices * np.sqrt(target_area / area))


def gaussian_texture(mesh, center_direction, width=0.5, lo=0.0, hi=1.0):
    """Radially symmetric texture bump around the point of the mesh farthest
    in ``center_direction``; values in [lo, hi]."""
    d = np.asarray(center_direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    peak = mesh.vertices[np.argmax(mesh.vertices @ d)]
    dist_sq = ((mesh.vertices - peak) ** 2).sum(axis=1)
    scale = width * mesh.bbox_diagonal
    tex = lo + (hi - lo) * np.exp(-dist_sq / scale ** 2)
    return mesh.with_texture(tex)


def delete_faces(mesh, fraction, seed=0):
    """Remove a random fraction of faces (topological noise). Unreferenced
    vertices are kept out of the result."""
    rng = np.random.default_rng(seed)
    n_del = int(round(fraction * mesh.n_faces))
    if n_del == 0:
        return mesh
    doomed = rng.choice(mesh.n_faces, size=n_del, replace=False)
    keep = np.ones(mesh.n_faces, dtype=bool)
    keep[doomed] = False
    faces = mesh.faces[keep]
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[faces.ravel()] = True
    remap = np.cumsum(used) - 1
    tex = mesh.texture[used] if mesh.texture is not None else None
    return TriangleMesh(mesh.vertices[used], remap[faces], tex)


def smooth_displacement(mesh, amplitude, seed=0, n_waves=4):
    """Smooth random vertex displacement field with sup-norm ``amplitude``
    (a few long-wavelength sinusoids; deterministic given the seed)."""
    rng = np.random.default_rng(seed)
    v = mesh.vertices
    diag = max(mesh.bbox_diagonal, 1e-300)
    disp = np.zeros_like(v)
    for _ in range(n_waves):
        k = rng.normal(size=3)
        k *= (2.0 * np.pi / diag) * rng.uniform(0.5, 1.5) / np.linalg.norm(k)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        disp += np.sin(v @ k + phase)[:, None] * direction
    sup = np.abs(disp).max()
    if sup > 0.0:
        disp *= amplitude / sup
    return disp
