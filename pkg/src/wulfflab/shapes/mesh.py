"""Array kernels for closed, outward-oriented boundary meshes.

A boundary mesh is a vertex array ``X`` of shape (V, n) together with an integer
face array of shape (F, n): segments in the plane, triangles in space.  Faces are
oriented so that the area vectors defined below point outward.
"""

import numpy as np

_GL3_NODES, _GL3_WEIGHTS = np.polynomial.legendre.leggauss(3)
_GL2_NODES, _GL2_WEIGHTS = np.polynomial.legendre.leggauss(2)

# radial nodes on [0, 1]
RADIAL_NODES = 0.5 * (_GL3_NODES + 1.0)
RADIAL_WEIGHTS = 0.5 * _GL3_WEIGHTS


def face_rule(dim):
    """Barycentric nodes and weights (summing to one) on a boundary face."""
    if dim == 2:
        t = 0.5 * (_GL2_NODES + 1.0)
        bary = np.stack([1.0 - t, t], axis=1)
        return bary, 0.5 * _GL2_WEIGHTS
    if dim == 3:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        return bary, np.full(3, 1.0 / 3.0)
    raise ValueError(f"unsupported dimension {dim}")


def _rotate_cw(v):
    # outward normal of a counter-clockwise edge
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def area_vectors(X, faces):
    """Outward area vectors: |a_f| is the face measure, a_f/|a_f| its normal."""
    P = X[faces]
    if X.shape[1] == 2:
        return _rotate_cw(P[:, 1] - P[:, 0])
    return 0.5 * np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])


def cone_determinants(X, faces, ref):
    """det(v_0 - ref, ..., v_{n-1} - ref) per face; n! times the signed cone volume."""
    E = X[faces] - ref
    if X.shape[1] == 2:
        return E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
    return np.einsum("ij,ij->i", E[:, 0], np.cross(E[:, 1], E[:, 2]))


def cone_determinant_gradients(X, faces, ref):
    """d det / d v_k for each face and local vertex k, shape (F, n, n)."""
    E = X[faces] - ref
    if X.shape[1] == 2:
        g0 = np.stack([E[:, 1, 1], -E[:, 1, 0]], axis=1)
        g1 = np.stack([-E[:, 0, 1], E[:, 0, 0]], axis=1)
        return np.stack([g0, g1], axis=1)
    return np.stack(
        [np.cross(E[:, 1], E[:, 2]), np.cross(E[:, 2], E[:, 0]), np.cross(E[:, 0], E[:, 1])],
        axis=1,
    )


def mesh_volume(X, faces, ref=None):
    dim = X.shape[1]
    if ref is None:
        ref = X.mean(axis=0)
    fact = 2.0 if dim == 2 else 6.0
    return float(cone_determinants(X, faces, ref).sum() / fact)


def cone_quadrature(X, faces, ref):
    """Quadrature points and weights covering the region bounded by the mesh.

    The region is split into cones from ``ref`` to each face.  Returns
    ``points`` (F, Q, n), ``weights`` (F, Q) and the local data needed to
    differentiate the rule with respect to the vertices: ``dets`` (F,),
    ``unit_weights`` (Q,) and ``coeff`` (Q, n), the factor multiplying
    ``v_k - ref`` in each quadrature point.
    """
    dim = X.shape[1]
    bary, bw = face_rule(dim)
    s = RADIAL_NODES
    sw = RADIAL_WEIGHTS * s ** (dim - 1)
    ref_measure = 0.5 if dim == 3 else 1.0
    coeff = (s[:, None, None] * bary[None, :, :]).reshape(-1, dim)
    unit_weights = (sw[:, None] * bw[None, :] * ref_measure).reshape(-1)
    E = X[faces] - ref
    points = ref + np.einsum("qk,fkd->fqd", coeff, E)
    dets = cone_determinants(X, faces, ref)
    weights = dets[:, None] * unit_weights[None, :]
    return points, weights, dets, unit_weights, coeff


def surface_quadrature(X, faces):
    """Points (F, Q, n) and barycentric weights (Q,) on each boundary face."""
    bary, bw = face_rule(X.shape[1])
    points = np.einsum("qk,fkd->fqd", bary, X[faces])
    return points, bw


def vertex_areas(X, faces):
    """Lumped boundary measure per vertex (equal share of each adjacent face)."""
    a = np.linalg.norm(area_vectors(X, faces), axis=1)
    n = faces.shape[1]
    out = np.zeros(X.shape[0])
    for k in range(n):
        np.add.at(out, faces[:, k], a / n)
    return out


def vertex_normals(X, faces):
    a = area_vectors(X, faces)
    out = np.zeros_like(X)
    for k in range(faces.shape[1]):
        np.add.at(out, faces[:, k], a)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return out / norm


def edge_adjacency(n_vertices, faces):
    """Sparse symmetric vertex adjacency matrix of the mesh."""
    from scipy import sparse

    k = faces.shape[1]
    rows, cols = [], []
    for a in range(k):
        for b in range(k):
            if a != b:
                rows.append(faces[:, a])
                cols.append(faces[:, b])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_vertices, n_vertices)).tocsr()
    A.data[:] = 1.0
    return A


def ring_neighbors(n_vertices, faces, rings=2):
    """List of neighbour index arrays within ``rings`` edge hops (self excluded)."""
    from scipy import sparse

    A = edge_adjacency(n_vertices, faces)
    reach = A.copy()
    power = A.copy()
    for _ in range(rings - 1):
        power = power @ A
        reach = reach + power
    reach = sparse.csr_matrix(reach)
    reach.setdiag(0)
    reach.eliminate_zeros()
    return [reach.indices[reach.indptr[i]:reach.indptr[i + 1]] for i in range(n_vertices)]


def is_watertight(faces):
    """Every undirected edge of a triangle mesh is shared by exactly two faces."""
    if faces.shape[1] == 2:
        counts = np.bincount(faces.ravel())
        return bool(np.all(counts == 2))
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))
