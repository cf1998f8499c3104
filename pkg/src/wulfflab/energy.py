"""Free energy, Lagrange multiplier and anisotropic mean curvature of shapes."""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .shapes import mesh as M
from .shapes.core import RadialPolygon, StarShape

FIT_COND_LIMIT = 1e10


@dataclass
class EnergyReport:
    surface: float
    potential: float
    total: float
    mu: float
    residual_sup: Optional[float] = None
    residual_l2: Optional[float] = None
    min_mu_minus_g: Optional[float] = None
    mean_hf: Optional[float] = None
    mu_fit: Optional[float] = None
    excluded_fraction: Optional[float] = None

    @property
    def relative_residual(self):
        if self.residual_sup is None or not self.mean_hf:
            return None
        return self.residual_sup / abs(self.mean_hf)

    def to_dict(self):
        return asdict(self)


def surface_energy(E, f):
    """Sum of f(nu) dA over the boundary quadrature (f is 1-homogeneous)."""
    _, a = E.boundary_quadrature()
    return float(f.value(a).sum())


def potential_energy(E, g):
    if g is None or g.is_zero:
        return 0.0
    pts, w = E.volume_quadrature()
    return float(w @ g.value(pts))


def lagrange_multiplier_mu(E, f, g):
    """((n-1) F + int g <x, nu>) / (n |E|), the multiplier of a critical set."""
    n = E.dim
    vol = E.volume()
    if not vol > 1e-14:
        raise DomainError(f"volume too small for the multiplier: {vol}")
    X, a = E.boundary_quadrature()
    F = float(f.value(a).sum())
    flux = 0.0 if g is None or g.is_zero else float(np.sum(g.value(X) * np.einsum("qi,qi->q", X, a)))
    return ((n - 1) * F + flux) / (n * vol)


def free_energy(E, f, g):
    F = surface_energy(E, f)
    G = potential_energy(E, g)
    return EnergyReport(F, G, F + G, lagrange_multiplier_mu(E, f, g))


# -- curvature ------------------------------------------------------------------


@dataclass
class CurvatureField:
    """Per-vertex anisotropic mean curvature with fit diagnostics."""

    values: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    flagged: np.ndarray

    def mean(self):
        ok = ~self.flagged
        return float(np.sum(self.values[ok] * self.weights[ok]) / np.sum(self.weights[ok]))


def vertex_weights(E):
    """Boundary measure lumped to vertices."""
    if isinstance(E, (StarShape, RadialPolygon)):
        t = E.topology
        dA = np.linalg.norm(t.area_vectors(E.vertex_radii), axis=-1)
        per = dA @ t.bary
        out = np.zeros(t.n_vertices)
        for k in range(E.dim):
            np.add.at(out, t.faces[:, k], per[:, k])
        return out
    return M.vertex_areas(E.vertices, E.faces)


def _neighbors(E, reach=2.2):
    """Fit neighbourhoods: +-3 vertices along a curve, a metric ball on surfaces.

    The ball radius is ``reach`` times the longest edge at the vertex (at
    least the median over the mesh), so stencils stay round even where the
    grid is strongly anisotropic.
    """
    X = E.vertices
    if E.dim == 2:
        n = len(X)
        k = np.array([-3, -2, -1, 1, 2, 3])
        return [(i + k) % n for i in range(n)]
    from scipy.spatial import cKDTree

    A = M.edge_adjacency(len(X), E.faces).tocoo()
    length = np.linalg.norm(X[A.row] - X[A.col], axis=1)
    longest = np.zeros(len(X))
    np.maximum.at(longest, A.row, length)
    # never below the typical spacing, so fan vertices (poles) see several rings
    radius = reach * np.maximum(longest, np.median(longest))
    tree = cKDTree(X)
    out = []
    for i, found in enumerate(tree.query_ball_point(X, radius)):
        found = np.asarray(found)
        out.append(found[found != i])
    return out


def _fit_basis(x, y=None, degree=3):
    if y is None:
        return np.stack([x ** k for k in range(1, degree + 2)], axis=-1)
    cols = [x, y, x * x, x * y, y * y]
    for d in range(3, degree + 1):
        cols += [x ** (d - k) * y ** k for k in range(d + 1)]
    return np.stack(cols, axis=-1)


def _fit_group(X, N0, nb, real, f, degree, sigma):
    """Weighted polynomial height fits for a batch of vertices; returns (H_f, nu, bad)."""
    n = X.shape[1]
    idx_pts = X[nb[:, :1]][:, 0]
    D = X[nb] - idx_pts[:, None]
    nu0 = N0
    if n == 3:
        helper = np.where(np.abs(nu0[:, :1]) < 0.9, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
        e1 = np.cross(nu0, helper)
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(nu0, e1)
        T = np.stack([e1, e2], axis=-1)  # k, 3, 2
        uv = np.einsum("kmi,kia->kma", D, T)
        A = _fit_basis(uv[..., 0], uv[..., 1], degree)
    else:
        T = np.stack([-nu0[:, 1], nu0[:, 0]], axis=-1)[..., None]
        uv = np.einsum("kmi,kia->kma", D, T)
        A = _fit_basis(uv[..., 0], None, degree)
    h = np.einsum("kmi,ki->km", D, nu0)
    d2 = np.sum(uv ** 2, axis=-1)
    scale = np.sqrt(np.sum(d2 * real, axis=1) / np.maximum(real.sum(axis=1), 1))
    w = np.exp(-d2 / (2 * (sigma * scale[:, None]) ** 2)) * real
    Aw = A * np.sqrt(w)[..., None]
    hw = h * np.sqrt(w)
    P = A.shape[-1]
    # column scaling keeps the fit well conditioned
    cs = np.sqrt(np.sum(Aw ** 2, axis=1))
    cs = np.where(cs > 0, cs, 1.0)
    U, S, Vt = np.linalg.svd(Aw / cs[:, None, :], full_matrices=False)
    cond = S[:, 0] / np.maximum(S[:, -1], 1e-300)
    bad = (cond > FIT_COND_LIMIT) | (real.sum(axis=1) < P)
    Sinv = 1.0 / np.where(S > 0, S, 1.0)
    coef = np.einsum("kpq,kq,kmq,km->kp", np.swapaxes(Vt, 1, 2), Sinv, U, hw) / cs
    if n == 3:
        grad = coef[:, :2]
        Hs = np.stack([np.stack([2 * coef[:, 2], coef[:, 3]], -1), np.stack([coef[:, 3], 2 * coef[:, 4]], -1)], -1)
    else:
        grad = coef[:, :1]
        Hs = (2 * coef[:, 1])[:, None, None]
    W = np.sqrt(1 + np.sum(grad ** 2, axis=1))
    B = T + nu0[:, :, None] * grad[:, None, :]  # tangent frame of the fitted surface
    nu = (nu0 - np.einsum("kia,ka->ki", T, grad)) / W[:, None]
    Iinv = np.linalg.inv(np.einsum("kia,kib->kab", B, B))
    II = Hs / W[:, None, None]
    dnu = -np.einsum("kia,kab,kbc,kcd,kjd->kij", B, Iinv, II, Iinv, B)
    Hf = np.einsum("kij,kji->k", f.hessian(nu), dnu)
    bad |= ~np.isfinite(Hf)
    return np.where(bad, 0.0, Hf), nu, bad


def anisotropic_mean_curvature(E, f, reach=2.2, degree=4, sigma=1.5):
    """H_f = trace(D^2 f(nu) dnu) at each boundary vertex from local polynomial fits.

    The boundary near each vertex is written as a height function over the
    tangent plane of an estimated normal and fitted by Gaussian-weighted least
    squares.  Vertices whose fit is rank deficient are refitted at lower
    degree and flagged only if the quadratic fit fails too.  A sphere of
    radius r gets 2/r.
    """
    X = E.vertices
    n = E.dim
    if n == 3:
        N0 = M.vertex_normals(X, E.faces)
    else:
        nxt = np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)
        N0 = np.stack([nxt[:, 1], -nxt[:, 0]], axis=1)
        N0 /= np.linalg.norm(N0, axis=1, keepdims=True)
    nbrs = _neighbors(E, reach)
    counts = np.array([len(b) for b in nbrs])
    values = np.zeros(len(X))
    normals = N0.copy()
    pending = np.arange(len(X))
    for deg in range(degree, 1, -1):
        failed = []
        # batch vertices with similar stencil sizes; padding entries get zero weight
        bucket = np.where(counts <= 32, counts, 32 * np.ceil(counts / 32).astype(int))[pending]
        for cnt in np.unique(bucket):
            idx = pending[bucket == cnt]
            nb = np.stack([np.concatenate([[i], nbrs[i], np.full(cnt - counts[i], i)]) for i in idx])
            real = np.stack([np.arange(cnt + 1) - 1 < counts[i] for i in idx])
            real[:, 0] = False
            hf, nu, bad = _fit_group(X, N0[idx], nb, real, f, deg, sigma)
            values[idx] = hf
            normals[idx] = nu
            failed.append(idx[bad])
        pending = np.concatenate(failed) if failed else np.zeros(0, int)
        if pending.size == 0:
            break
    flagged = np.zeros(len(X), dtype=bool)
    flagged[pending] = True
    return CurvatureField(values, X.copy(), normals, vertex_weights(E), flagged)


def first_variation_residual(E, f, g, mu=None, field=None):
    """Residual H_f - (mu - g) on boundary vertices; returns an EnergyReport.

    ``mu`` defaults to the explicit multiplier.  ``mu_fit`` is the weighted mean
    of H_f + g, the value that zeroes the mean residual.
    """
    rep = free_energy(E, f, g)
    mu = rep.mu if mu is None else float(mu)
    field = anisotropic_mean_curvature(E, f) if field is None else field
    ok = ~field.flagged
    gx = np.zeros(len(field.points)) if g is None or g.is_zero else g.value(field.points)
    res = field.values - (mu - gx)
    w = field.weights[ok]
    rep.mu = mu
    rep.residual_sup = float(np.abs(res[ok]).max())
    rep.residual_l2 = float(np.sqrt(np.sum(w * res[ok] ** 2) / np.sum(w)))
    rep.min_mu_minus_g = float((mu - gx).min())
    rep.mean_hf = field.mean()
    rep.mu_fit = float(np.sum(w * (field.values + gx)[ok]) / np.sum(w))
    rep.excluded_fraction = float(field.flagged.mean())
    return rep


def shape_gradient(E, f, g, mu, field=None):
    """Normal descent velocity -(H_f - mu + g) per boundary vertex."""
    field = anisotropic_mean_curvature(E, f) if field is None else field
    gx = np.zeros(len(field.points)) if g is None or g.is_zero else g.value(field.points)
    v = -(field.values - mu + gx)
    return np.where(field.flagged, 0.0, v)


# -- radial parametrization (optimizer) ------------------------------------------


def radial_energy(topology, rv, center, f, g, grad=True):
    """Discrete F, G, volume and their gradients with respect to vertex radii."""
    a = topology.area_vectors(rv)
    F = float(f.value(a).sum())
    vol = topology.volume(rv)
    zero = g is None or g.is_zero
    if zero:
        G, dG = 0.0, (np.zeros(topology.n_vertices) if grad else None)
    else:
        G, dG = topology.potential_and_grad(rv, center, g, grad=grad)
    if not grad:
        return F, G, vol
    dF = topology.area_vector_vjp(rv, f.gradient(a))
    return F, G, vol, dF, dG, topology.volume_grad(rv)
