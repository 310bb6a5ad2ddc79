"""First- and second-order feature maps on triangle meshes.

The per-face normal field scaled by the square root of the face area turns
the first-order elastic deformation energy between same-connectivity meshes
into a plain squared L2 distance, computed as one sum over faces. The
per-vertex curvature field does the same at second order, as one sum over
vertices. Both are translation invariant.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CombinatoricsError, MeshValidationError
from .mesh import DEGENERATE_AREA_FACTOR, face_corners, face_cross_products

_SQRT2 = np.sqrt(2.0)


@dataclass
class SrnfField:
    """Per-face 3-vectors ``unit_normal * sqrt(area)`` (units: length)."""
    values: np.ndarray

    def norm_sq(self):
        return float((self.values ** 2).sum())


@dataclass
class SrcfField:
    """Per-vertex 3-vectors: half the sum of (opposite edge) x (face normal)
    over the vertex star, normalized by the square root of one third of the
    star area."""
    values: np.ndarray


def _require_same_combinatorics(a, b):
    if a.n_vertices != b.n_vertices:
        raise CombinatoricsError(
            f"vertex counts differ: {a.n_vertices} vs {b.n_vertices}")
    if a.faces is not b.faces and not np.array_equal(a.faces, b.faces):
        raise CombinatoricsError("face lists differ")


def srnf(mesh):
    """Square-root-normal feature: values[f] = n_f * sqrt(A_f).

    Degenerate faces contribute the zero vector.
    """
    cross, norms, thresh = face_cross_products(mesh)
    # n * sqrt(A) = cross / (sqrt(2) * sqrt(|cross|))
    ok = norms > thresh
    scale = np.zeros_like(norms)
    np.divide(1.0, _SQRT2 * np.sqrt(norms), out=scale, where=ok)
    return SrnfField(cross * scale[:, None])


@njit(cache=True)
def _srnf_dist_sq_kernel(va, vb, faces, thresh_a, thresh_b):
    acc = 0.0
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        ux = va[i1, 0] - va[i0, 0]
        uy = va[i1, 1] - va[i0, 1]
        uz = va[i1, 2] - va[i0, 2]
        wx = va[i2, 0] - va[i0, 0]
        wy = va[i2, 1] - va[i0, 1]
        wz = va[i2, 2] - va[i0, 2]
        ax = uy * wz - uz * wy
        ay = uz * wx - ux * wz
        az = ux * wy - uy * wx
        na = np.sqrt(ax * ax + ay * ay + az * az)
        sa = 1.0 / np.sqrt(2.0 * na) if na > thresh_a else 0.0
        ux = vb[i1, 0] - vb[i0, 0]
        uy = vb[i1, 1] - vb[i0, 1]
        uz = vb[i1, 2] - vb[i0, 2]
        wx = vb[i2, 0] - vb[i0, 0]
        wy = vb[i2, 1] - vb[i0, 1]
        wz = vb[i2, 2] - vb[i0, 2]
        bx = uy * wz - uz * wy
        by = uz * wx - ux * wz
        bz = ux * wy - uy * wx
        nb = np.sqrt(bx * bx + by * by + bz * bz)
        sb = 1.0 / np.sqrt(2.0 * nb) if nb > thresh_b else 0.0
        dx = ax * sa - bx * sb
        dy = ay * sa - by * sb
        dz = az * sa - bz * sb
        acc += dx * dx + dy * dy + dz * dz
    return acc


def _degenerate_cross_threshold(mesh):
    return 2.0 * DEGENERATE_AREA_FACTOR * mesh.bbox_diagonal ** 2


def srnf_distance_sq(a, b):
    """Squared L2 distance between the square-root-normal fields of two
    meshes with identical combinatorics."""
    _require_same_combinatorics(a, b)
    return float(_srnf_dist_sq_kernel(
        a.vertices, b.vertices, a.faces,
        _degenerate_cross_threshold(a), _degenerate_cross_threshold(b)))


def srnf_jvp(mesh, h):
    """Directional derivative of ``srnf(mesh)`` in vertex direction ``h``.

    Closed form: with m the face cross product and dm its variation,
    dN = (dm - m (m.dm) / (2|m|^2)) / (sqrt(2) |m|^(1/2)). Zero at
    degenerate faces.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape != mesh.vertices.shape:
        raise MeshValidationError(
            f"direction must have shape {mesh.vertices.shape}, "
            f"got {h.shape}")
    v0, v1, v2 = face_corners(mesh)
    f = mesh.faces
    h0, h1, h2 = h[f[:, 0]], h[f[:, 1]], h[f[:, 2]]
    u, w = v1 - v0, v2 - v0
    du, dw = h1 - h0, h2 - h0
    cross, norms, thresh = face_cross_products(mesh)
    dm = np.cross(du, w) + np.cross(u, dw)
    ok = norms > thresh
    inv = np.zeros_like(norms)
    np.divide(1.0, _SQRT2 * np.sqrt(norms), out=inv, where=ok)
    inv_n2 = np.zeros_like(norms)
    np.divide(1.0, norms ** 2, out=inv_n2, where=ok)
    coef = 0.5 * (cross * dm).sum(axis=1) * inv_n2
    return (dm - cross * coef[:, None]) * inv[:, None]


def srnf_vjp(mesh, cotangent):
    """Adjoint of ``srnf_jvp``: pulls a per-face cotangent back to a
    per-vertex gradient. ``cotangent`` has shape (F, 3)."""
    cotangent = np.asarray(cotangent, dtype=np.float64)
    f = mesh.faces
    if cotangent.shape != (len(f), 3):
        raise MeshValidationError(
            f"cotangent must have shape {(len(f), 3)}, got {cotangent.shape}")
    v0, v1, v2 = face_corners(mesh)
    u, w = v1 - v0, v2 - v0
    cross, norms, thresh = face_cross_products(mesh)
    ok = norms > thresh
    inv = np.zeros_like(norms)
    np.divide(1.0, _SQRT2 * np.sqrt(norms), out=inv, where=ok)
    inv_n2 = np.zeros_like(norms)
    np.divide(1.0, norms ** 2, out=inv_n2, where=ok)
    coef = 0.5 * (cross * cotangent).sum(axis=1) * inv_n2
    z = (cotangent - cross * coef[:, None]) * inv[:, None]
    g1 = np.cross(w, z)
    g2 = np.cross(z, u)
    grad = np.zeros_like(mesh.vertices)
    np.add.at(grad, f[:, 0], -(g1 + g2))
    np.add.at(grad, f[:, 1], g1)
    np.add.at(grad, f[:, 2], g2)
    return grad


def srnf_metric_form(mesh, h):
    """Quadratic form of the pulled-back flat metric: the squared norm of
    the feature-map directional derivative."""
    d = srnf_jvp(mesh, h)
    return float((d ** 2).sum())


def path_energy(path):
    """Riemann-sum deformation energy of a mesh path on a uniform time grid.

    For samples q_0 .. q_{n-1} with spacing dt = 1/(n-1), this is
    sum_i G_{q_i}((q_{i+1}-q_i)/dt) * dt.
    """
    path = list(path)
    if len(path) < 2:
        raise ValueError("path needs at least 2 samples")
    first = path[0]
    for q in path[1:]:
        _require_same_combinatorics(first, q)
    dt = 1.0 / (len(path) - 1)
    acc = 0.0
    for qa, qb in zip(path[:-1], path[1:]):
        step = qb.vertices - qa.vertices
        acc += srnf_metric_form(qa, step) / dt
    return acc


# ---------------------------------------------------------------------------
# Second-order feature (vector curvature per vertex)

def _vertex_star(mesh):
    """Numerator sums m_v = 0.5 * sum_f (opposite edge) x (face normal),
    star areas a_v = (1/3) sum_f A_f, plus the per-face pieces needed by
    the adjoint."""
    v0, v1, v2 = face_corners(mesh)
    f = mesh.faces
    cross, norms, thresh = face_cross_products(mesh)
    ok = norms > thresh
    normals = np.zeros_like(cross)
    np.divide(cross, norms[:, None], out=normals, where=ok[:, None])
    areas = 0.5 * norms
    # opposite edges in face order: e_k is opposite corner k
    e0 = v2 - v1
    e1 = v0 - v2
    e2 = v1 - v0
    m = np.zeros_like(mesh.vertices)
    np.add.at(m, f[:, 0], 0.5 * np.cross(e0, normals))
    np.add.at(m, f[:, 1], 0.5 * np.cross(e1, normals))
    np.add.at(m, f[:, 2], 0.5 * np.cross(e2, normals))
    a = np.zeros(mesh.n_vertices)
    np.add.at(a, f.ravel(), np.repeat(areas / 3.0, 3))
    return m, a, (e0, e1, e2), normals, cross, norms, ok


def srcf(mesh):
    """Per-vertex curvature feature.

    Every vertex must have at least one incident face with positive area.
    """
    m, a, *_ = _vertex_star(mesh)
    if np.any(a <= 0.0):
        bad = int(np.argmax(a <= 0.0))
        raise MeshValidationError(
            f"vertex {bad} has no incident face with positive area")
    return SrcfField(m / np.sqrt(a)[:, None])


def srcf_distance_sq(a, b):
    """Squared L2 distance between the curvature features of two meshes
    with identical combinatorics."""
    _require_same_combinatorics(a, b)
    diff = srcf(a).values - srcf(b).values
    return float((diff ** 2).sum())


def srcf_vjp(mesh, cotangent):
    """Adjoint of the curvature feature map: pulls a per-vertex cotangent
    back to a per-vertex position gradient."""
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != mesh.vertices.shape:
        raise MeshValidationError(
            f"cotangent must have shape {mesh.vertices.shape}, "
            f"got {cotangent.shape}")
    m, a, (e0, e1, e2), normals, cross, norms, ok = _vertex_star(mesh)
    if np.any(a <= 0.0):
        bad = int(np.argmax(a <= 0.0))
        raise MeshValidationError(
            f"vertex {bad} has no incident face with positive area")
    d = np.sqrt(a)
    alpha = cotangent / d[:, None]
    beta = (cotangent * m).sum(axis=1) / (2.0 * d ** 3)

    f = mesh.faces
    a0, a1, a2 = alpha[f[:, 0]], alpha[f[:, 1]], alpha[f[:, 2]]
    grad = np.zeros_like(mesh.vertices)

    # variation through the opposite edges: d(e_k) x n
    na0 = np.cross(normals, a0)
    na1 = np.cross(normals, a1)
    na2 = np.cross(normals, a2)
    np.add.at(grad, f[:, 0], 0.5 * (na1 - na2))
    np.add.at(grad, f[:, 1], 0.5 * (na2 - na0))
    np.add.at(grad, f[:, 2], 0.5 * (na0 - na1))

    # variation through the unit normal: dn = (I - n n^T) dm / |m|
    s = 0.5 * (np.cross(a0, e0) + np.cross(a1, e1) + np.cross(a2, e2))
    inv_norm = np.zeros_like(norms)
    np.divide(1.0, norms, out=inv_norm, where=ok)
    z = (s - normals * (normals * s).sum(axis=1)[:, None]) * inv_norm[:, None]
    v0, v1, v2 = face_corners(mesh)
    u, w = v1 - v0, v2 - v0
    g1 = np.cross(w, z)
    g2 = np.cross(z, u)
    np.add.at(grad, f[:, 0], -(g1 + g2))
    np.add.at(grad, f[:, 1], g1)
    np.add.at(grad, f[:, 2], g2)

    # variation through the star areas: dA_f = sum_k dv_k . (n x e_k)/2
    bsum = beta[f[:, 0]] + beta[f[:, 1]] + beta[f[:, 2]]
    coef = -(bsum / 6.0)[:, None]
    np.add.at(grad, f[:, 0], coef * np.cross(normals, e0))
    np.add.at(grad, f[:, 1], coef * np.cross(normals, e1))
    np.add.at(grad, f[:, 2], coef * np.cross(normals, e2))
    return grad


def srnf_distance_sq_grad(a, b):
    """Value and gradient (with respect to the vertices of ``a``) of
    ``srnf_distance_sq(a, b)``."""
    _require_same_combinatorics(a, b)
    diff = srnf(a).values - srnf(b).values
    value = float((diff ** 2).sum())
    return value, srnf_vjp(a, 2.0 * diff)


def srcf_distance_sq_grad(a, b):
    """Value and gradient (with respect to the vertices of ``a``) of
    ``srcf_distance_sq(a, b)``."""
    _require_same_combinatorics(a, b)
    diff = srcf(a).values - srcf(b).values
    value = float((diff ** 2).sum())
    return value, srcf_vjp(a, 2.0 * diff)
