"""Radial-field geometry shared by star-shaped bodies and radial polygons.

The boundary is ``X(y) = c + r(y) y/|y|`` where ``y`` runs over the flat
simplices of a fixed mesh of unit directions.  On each simplex ``r`` is the
quadratic interpolant of its vertex radii and of edge-midpoint values taken
from cubic Lagrange stencils on the direction grid, evaluated at the exact
direction of each chord midpoint, so every nodal value is a fixed linear
function of the vertex radii.  Volume, area vectors and
volume integrals use fixed quadrature on every simplex; they are smooth in
the radii and exact for round balls.
"""

from functools import cached_property

import numpy as np

from . import mesh as M
from ..errors import GeometryError

# degree-6 symmetric rule on the triangle (12 points), weights sum to one
_TRI_ORBITS = [
    (0.116786275726379, 0.501426509658179, 0.249286745170910),
    (0.050844906370207, 0.873821971016996, 0.063089014491502),
]
_TRI6 = (0.082851075618374, 0.053145049844817, 0.310352451033784, 0.636502499121399)


def _triangle_rule():
    pts, wts = [], []
    for w, a, b in _TRI_ORBITS:
        for p in ([a, b, b], [b, a, b], [b, b, a]):
            pts.append(p)
            wts.append(w)
    w, a, b, c = _TRI6
    for p in ([a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]):
        pts.append(p)
        wts.append(w)
    return np.array(pts), np.array(wts)


TRI_BARY, TRI_W = _triangle_rule()

_gl_t, _gl_w = np.polynomial.legendre.leggauss(5)
SEG_BARY = np.stack([0.5 * (1 - _gl_t), 0.5 * (1 + _gl_t)], axis=1)
SEG_W = 0.5 * _gl_w

_rad_t, _rad_w = np.polynomial.legendre.leggauss(3)
RAD_T = 0.5 * (_rad_t + 1.0)
RAD_W = 0.5 * _rad_w

# cubic midpoint stencil on a uniform line
MID4 = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0

# node order: vertices, then edge midpoints (0,1), (1,2), (0,2) in 3-d; (0,1) in 2-d
EDGES3 = ((0, 1), (1, 2), (0, 2))


def quadratic_shape(b):
    """Quadratic Lagrange basis at barycentrics ``b`` (..., n) -> (..., K)."""
    cols = [b[..., k] * (2 * b[..., k] - 1) for k in range(b.shape[-1])]
    if b.shape[-1] == 3:
        cols += [4 * b[..., i] * b[..., j] for i, j in EDGES3]
    else:
        cols.append(4 * b[..., 0] * b[..., 1])
    return np.stack(cols, axis=-1)


def _quadratic_derivative(b, i):
    """d/db_i of the basis, moving b_i against b_0 (b_0 = 1 - sum of the rest)."""
    n = b.shape[-1]
    db = np.zeros(n)
    db[0], db[i] = -1.0, 1.0
    cols = [(4 * b[..., k] - 1) * db[k] for k in range(n)]
    pairs = EDGES3 if n == 3 else ((0, 1),)
    cols += [4 * (db[p] * b[..., q] + b[..., p] * db[q]) for p, q in pairs]
    return np.stack(cols, axis=-1)


def lagrange_weights(nodes, x):
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(len(nodes))
    for k in range(len(nodes)):
        for m in range(len(nodes)):
            if m != k:
                w[k] *= (x - nodes[m]) / (nodes[k] - nodes[m])
    return w


class RadialTopology:
    """Quadrature tables for a fixed direction mesh.

    Subclasses set ``dim``, ``directions`` (V, n), ``faces`` (F, n), the maps
    between free radii (``grid_shape``) and vertex radii, and
    ``edge_stencil(u, v)`` giving the midpoint value of edge (u, v) as
    ``(vertex indices, weights)``.
    """

    dim: int

    def _build_quadrature(self):
        U = self.directions[self.faces]  # F, n, n
        if self.dim == 3:
            bary, w = TRI_BARY, TRI_W * 0.5
        else:
            bary, w = SEG_BARY, SEG_W
        Y = np.einsum("qk,fkd->fqd", bary, U)
        norm = np.linalg.norm(Y, axis=-1, keepdims=True)
        omega = Y / norm
        dY = U[:, 1:] - U[:, :1]  # F, n-1, n
        # d omega / d b_i for the free barycentric coordinates
        dom = (dY[:, None] - omega[:, :, None] * np.einsum("fqd,fid->fqi", omega, dY)[..., None]) / norm[:, :, None]
        self.bary = bary
        self.qw = w
        self.omega = omega
        self.shape_values = quadratic_shape(bary)
        self.shape_derivs = [_quadratic_derivative(bary, i) for i in range(1, self.dim)]
        if self.dim == 3:
            o1, o2 = dom[:, :, 0], dom[:, :, 1]
            self.cA = np.cross(o1, o2)
            self.cB = np.cross(omega, o2)
            self.cC = np.cross(o1, omega)
            self.jac = np.einsum("fqd,fqd->fq", omega, self.cA)
        else:
            ot = dom[:, :, 0]
            self.cP = np.stack([omega[..., 1], -omega[..., 0]], axis=-1)
            self.cQ = np.stack([ot[..., 1], -ot[..., 0]], axis=-1)
            self.jac = omega[..., 0] * ot[..., 1] - omega[..., 1] * ot[..., 0]
        # volume weights per point
        self.vw = self.qw[None, :] * self.jac

    @cached_property
    def node_matrix(self):
        """Sparse map from vertex radii to per-face nodal values (F*K rows)."""
        from scipy import sparse

        F = self.faces
        nf, n = F.shape
        K = 6 if n == 3 else 3
        rows, cols, vals = [], [], []
        for k in range(n):
            rows.append(np.arange(nf) * K + k)
            cols.append(F[:, k])
            vals.append(np.ones(nf))
        pairs = EDGES3 if n == 3 else ((0, 1),)
        for e, (p, q) in enumerate(pairs):
            for f in range(nf):
                idx, w = self.edge_stencil(F[f, p], F[f, q])
                rows.append(np.full(len(idx), f * K + n + e))
                cols.append(np.asarray(idx))
                vals.append(np.asarray(w, dtype=float))
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(nf * K, self.n_vertices))

    # -- radii ---------------------------------------------------------------
    def nodal_values(self, rv):
        return (self.node_matrix @ rv).reshape(len(self.faces), -1)

    def _scatter(self, dN):
        return self.node_matrix.T @ dN.ravel()

    def radii_at_bary(self, rv, b):
        """Radius on every face at barycentrics ``b`` (P, n) -> (F, P)."""
        return self.nodal_values(rv) @ quadratic_shape(np.asarray(b, dtype=float)).T

    def point_radii(self, rv):
        return self.nodal_values(rv) @ self.shape_values.T  # F, Q

    def area_vectors(self, rv):
        """Quadrature-weighted outward area vectors (F, Q, n)."""
        N = self.nodal_values(rv)
        r = (N @ self.shape_values.T)[..., None]
        w = self.qw[None, :, None]
        if self.dim == 3:
            r1 = (N @ self.shape_derivs[0].T)[..., None]
            r2 = (N @ self.shape_derivs[1].T)[..., None]
            return w * (r * r1 * self.cB + r * r2 * self.cC + r * r * self.cA)
        rt = (N @ self.shape_derivs[0].T)[..., None]
        return w * (rt * self.cP + r * self.cQ)

    def area_vector_vjp(self, rv, G):
        """Gradient w.r.t. vertex radii of sum(G * area_vectors(rv))."""
        N = self.nodal_values(rv)
        r = N @ self.shape_values.T
        w = self.qw[None, :]
        if self.dim == 3:
            D1, D2 = self.shape_derivs
            r1 = N @ D1.T
            r2 = N @ D2.T
            gB = np.einsum("fqd,fqd->fq", G, self.cB) * w
            gC = np.einsum("fqd,fqd->fq", G, self.cC) * w
            gA = np.einsum("fqd,fqd->fq", G, self.cA) * w
            d_r = r1 * gB + r2 * gC + 2 * r * gA
            dN = d_r @ self.shape_values + (r * gB) @ D1 + (r * gC) @ D2
        else:
            gP = np.einsum("fqd,fqd->fq", G, self.cP) * w
            gQ = np.einsum("fqd,fqd->fq", G, self.cQ) * w
            dN = gQ @ self.shape_values + gP @ self.shape_derivs[0]
        return self._scatter(dN)

    def volume(self, rv):
        r = self.point_radii(rv)
        return float((self.vw * r ** self.dim).sum() / self.dim)

    def volume_grad(self, rv):
        r = self.point_radii(rv)
        return self._scatter((self.vw * r ** (self.dim - 1)) @ self.shape_values)

    def boundary_points(self, rv, center):
        return center + self.point_radii(rv)[..., None] * self.omega

    def volume_quadrature(self, rv, center):
        """Points (F, Q, T, n) and weights (F, Q, T) filling the body."""
        r = self.point_radii(rv)
        pts = center + (RAD_T[None, None, :, None] * r[..., None, None]) * self.omega[:, :, None, :]
        w = self.vw[..., None] * r[..., None] ** self.dim * (RAD_W * RAD_T ** (self.dim - 1))
        return pts, w

    def potential_and_grad(self, rv, center, g, grad=True):
        """Integral of g over the body and its gradient w.r.t. vertex radii."""
        r = self.point_radii(rv)
        pts, w = self.volume_quadrature(rv, center)
        flat = pts.reshape(-1, self.dim)
        gv = g.value(flat).reshape(w.shape)
        total = float((w * gv).sum())
        if not grad:
            return total, None
        n = self.dim
        tw = RAD_W * RAD_T ** (n - 1)
        gg = g.gradient(flat).reshape(pts.shape)
        radial = np.einsum("fqtd,fqd->fqt", gg, self.omega)
        # d/dr [vw r^n sum_t tw g(c + t r omega)]
        d_r = self.vw * (n * r ** (n - 1) * (gv * tw).sum(-1) + r ** n * (radial * tw * RAD_T).sum(-1))
        return total, self._scatter(d_r @ self.shape_values)

    # -- linear algebra for descent ------------------------------------------------
    @cached_property
    def expand_matrix(self):
        """Sparse matrix R with vertex radii = R @ free radii (flattened)."""
        from scipy import sparse

        size = int(np.prod(self.grid_shape))
        rows, cols, vals = [self.grid_vertex_index()], [np.arange(size)], [np.ones(size)]
        for v, (c, w) in self.extra_rows().items():
            rows.append(np.full(len(c), v))
            cols.append(c)
            vals.append(w)
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(self.n_vertices, size))

    @cached_property
    def sobolev_matrices(self):
        """P1 stiffness and lumped mass of the direction mesh (vertex space)."""
        from scipy import sparse

        U, F = self.directions, self.faces
        n = self.n_vertices
        if self.dim == 3:
            T = U[F]
            rows, cols, vals = [], [], []
            for k in range(3):
                i, j, o = F[:, (k + 1) % 3], F[:, (k + 2) % 3], k
                a = T[:, (k + 1) % 3] - T[:, o]
                b = T[:, (k + 2) % 3] - T[:, o]
                cot = np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
                w = 0.5 * cot
                rows += [i, j, i, j]
                cols += [j, i, i, j]
                vals += [-w, -w, w, w]
            K = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        else:
            length = np.linalg.norm(U[F[:, 1]] - U[F[:, 0]], axis=1)
            w = 1.0 / length
            i, j = F[:, 0], F[:, 1]
            K = sparse.csr_matrix((np.concatenate([-w, -w, w, w]),
                                   (np.concatenate([i, j, i, j]), np.concatenate([j, i, i, j]))), shape=(n, n))
        mass = M.vertex_areas(U, F)
        return K, sparse.diags(mass)

    # -- point location ---------------------------------------------------------
    @cached_property
    def dual_vectors(self):
        E = self.directions[self.faces]
        if self.dim == 3:
            det = np.einsum("ij,ij->i", E[:, 0], np.cross(E[:, 1], E[:, 2]))
            D = np.stack([np.cross(E[:, 1], E[:, 2]), np.cross(E[:, 2], E[:, 0]), np.cross(E[:, 0], E[:, 1])], axis=1)
        else:
            det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
            D = np.stack([np.stack([E[:, 1, 1], -E[:, 1, 0]], -1), np.stack([-E[:, 0, 1], E[:, 0, 0]], -1)], axis=1)
        return D / det[:, None, None]

    def radius_at(self, rv, U):
        """Interpolated radius along unit directions ``U`` (..., n)."""
        cands = self.candidate_faces(U)
        D = self.dual_vectors
        best_b, best_f, best_min = None, None, None
        for c in cands:
            b = np.einsum("...k,...jk->...j", U, D[c])
            bmin = b.min(axis=-1)
            if best_b is None:
                best_b, best_f, best_min = b, c, bmin
            else:
                take = bmin > best_min
                best_b = np.where(take[..., None], b, best_b)
                best_f = np.where(take, c, best_f)
                best_min = np.where(take, bmin, best_min)
        b = best_b / best_b.sum(axis=-1, keepdims=True)
        N = self.nodal_values(rv)
        return np.einsum("...k,...k->...", quadratic_shape(b), N[best_f])


class StarTopology(RadialTopology):
    dim = 3

    def __init__(self, n_theta, n_phi):
        if n_phi % 2:
            # midpoint stencils continue meridians across the poles at phi + pi
            raise GeometryError(f"n_phi must be even, got {n_phi}")
        self.n_theta, self.n_phi = n_theta, n_phi
        self.grid_shape = (n_theta, n_phi)
        self.dtheta = np.pi / n_theta
        self.dphi = 2.0 * np.pi / n_phi
        self.theta = (np.arange(n_theta) + 0.5) * self.dtheta
        self.phi = np.arange(n_phi) * self.dphi
        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        self.grid_directions = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        self.directions = np.concatenate([[[0.0, 0.0, 1.0]], self.grid_directions.reshape(-1, 3), [[0.0, 0.0, -1.0]]])
        self.n_vertices = n_theta * n_phi + 2
        self.south = self.n_vertices - 1

        def g(i, j):
            return 1 + i * n_phi + (j % n_phi)

        j = np.arange(n_phi)
        faces = [np.stack([np.zeros(n_phi, int), g(0, j), g(0, j + 1)], axis=1)]
        for i in range(n_theta - 1):
            a, b, c, d = g(i, j), g(i + 1, j), g(i + 1, j + 1), g(i, j + 1)
            quad = np.empty((2 * n_phi, 3), dtype=int)
            quad[0::2] = np.stack([a, b, c], axis=1)
            quad[1::2] = np.stack([a, c, d], axis=1)
            faces.append(quad)
        faces.append(np.stack([np.full(n_phi, self.south), g(n_theta - 1, j + 1), g(n_theta - 1, j)], axis=1))
        F = np.concatenate(faces)
        flip = M.cone_determinants(self.directions, F, np.zeros(3)) < 0
        F[flip] = F[flip][:, [0, 2, 1]]
        self.faces = F
        self._build_quadrature()

    # ring means behave like r_pole + a theta^2 + b theta^4; Lagrange weights in
    # theta^2 at nodes (0.5, 1.5, 2.5)^2 dtheta^2 extrapolate them to theta = 0
    POLE_WEIGHTS = np.array([75.0 / 64.0, -25.0 / 128.0, 3.0 / 128.0])

    def expand(self, radii):
        w = self.POLE_WEIGHTS
        north = w @ radii[:3].mean(axis=1)
        south = w @ radii[::-1][:3].mean(axis=1)
        return np.concatenate([[north], radii.ravel(), [south]])

    def grid_vertex_index(self):
        return 1 + np.arange(self.n_theta * self.n_phi)

    def _vertex_at(self, i, j):
        """Vertex of grid cell (i, j), continuing rows past the poles by reflection."""
        nt, nph = self.n_theta, self.n_phi
        if i < 0:
            i, j = -1 - i, j + nph // 2
        elif i >= nt:
            i, j = 2 * nt - 1 - i, j + nph // 2
        return 1 + i * nph + j % nph

    def edge_stencil(self, u, v):
        if u > v:
            u, v = v, u
        nph = self.n_phi
        if u == 0 or v == self.south:
            grid = v if u == 0 else u
            j = (grid - 1) % nph
            if u == 0:
                rows, pole = np.arange(-2, 2), 0.0
            else:
                rows, pole = np.arange(self.n_theta - 2, self.n_theta + 2), float(self.n_theta)
            w = lagrange_weights(rows + 0.5, 0.5 * (pole + (grid - 1) // nph + 0.5))
            return [self._vertex_at(i, j) for i in rows], w
        # the P2 node sits at the normalized chord midpoint, which is O(h^2) off the
        # parameter midpoint; near the poles that offset is comparable to the cell
        # width, so interpolate at its exact (theta, phi) with a 4x4 tensor stencil
        y = self.directions[u] + self.directions[v]
        y = y / np.linalg.norm(y)
        x = (np.arccos(np.clip(y[2], -1.0, 1.0)) - self.theta[0]) / self.dtheta
        p = np.mod(np.arctan2(y[1], y[0]), 2.0 * np.pi) / self.dphi
        rows = np.floor(x) + np.arange(-1, 3)
        cols = np.floor(p) + np.arange(-1, 3)
        wt, wp = lagrange_weights(rows, x), lagrange_weights(cols, p)
        idx = [self._vertex_at(int(i), int(j)) for i in rows for j in cols]
        return idx, np.outer(wt, wp).ravel()

    def extra_rows(self):
        w = np.repeat(self.POLE_WEIGHTS / self.n_phi, self.n_phi)
        north = np.arange(3 * self.n_phi)
        south = np.concatenate([np.arange(self.n_phi) + (self.n_theta - 1 - k) * self.n_phi for k in range(3)])
        return {0: (north, w), self.south: (south, w)}

    def reduce(self, grad_v):
        G = grad_v[1:-1].reshape(self.grid_shape).copy()
        w = self.POLE_WEIGHTS / self.n_phi
        for k in range(3):
            G[k] += w[k] * grad_v[0]
            G[-1 - k] += w[k] * grad_v[-1]
        return G

    @cached_property
    def neighbors(self):
        return M.ring_neighbors(self.n_vertices, self.faces, rings=2)

    def candidate_faces(self, U):
        """Faces whose cones may contain each direction (latitude rows i-1..i+1)."""
        theta = np.arccos(np.clip(U[..., 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(U[..., 1], U[..., 0]), 2.0 * np.pi)
        j = np.minimum((phi / self.dphi).astype(int), self.n_phi - 1)
        jm = (j - 1) % self.n_phi
        i = np.floor((theta - self.theta[0]) / self.dtheta).astype(int)
        nf = self.faces.shape[0]
        out = []
        for k in (i - 1, i, i + 1):
            north = k < 0
            south = k > self.n_theta - 2
            kk = np.clip(k, 0, self.n_theta - 2)
            quad0 = self.n_phi + 2 * (kk * self.n_phi + j)
            out.append(np.where(north, j, np.where(south, nf - self.n_phi + j, quad0)))
            out.append(np.where(north, jm, np.where(south, nf - self.n_phi + jm, quad0 + 1)))
        return out


class CircleTopology(RadialTopology):
    dim = 2

    def __init__(self, n):
        self.n = n
        self.grid_shape = (n,)
        phi = 2.0 * np.pi * np.arange(n) / n
        self.directions = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        self.n_vertices = n
        idx = np.arange(n)
        self.faces = np.stack([idx, (idx + 1) % n], axis=1)
        self._build_quadrature()

    def expand(self, radii):
        return np.asarray(radii, dtype=float)

    def reduce(self, grad_v):
        return grad_v

    def grid_vertex_index(self):
        return np.arange(self.n)

    def edge_stencil(self, u, v):
        step = 1 if (v - u) % self.n == 1 else -1
        return [(u + t * step) % self.n for t in (-1, 0, 1, 2)], MID4

    def extra_rows(self):
        return {}

    @cached_property
    def neighbors(self):
        return [np.array([(i + k) % self.n for k in (-2, -1, 1, 2)]) for i in range(self.n)]

    def candidate_faces(self, U):
        phi = np.mod(np.arctan2(U[..., 1], U[..., 0]), 2.0 * np.pi)
        j = np.minimum((phi / (2.0 * np.pi / self.n)).astype(int), self.n - 1)
        return (j,)
