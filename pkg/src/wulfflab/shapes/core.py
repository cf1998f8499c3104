"""Discrete shape representations.

* :class:`Polygon` - a simple, counter-clockwise polygon in the plane.
* :class:`RadialPolygon` - star-shaped planar region given by radii at
  uniformly spaced angles around ``center``; what the optimizer moves in 2D.
* :class:`StarShape` - star-shaped body in space given by a radial field on an
  ``(n_theta, n_phi)`` latitude/longitude grid (pole radii are extrapolated from the first three rings).
* :class:`TriMesh` - an arbitrary closed, outward-oriented triangle mesh.

Radial shapes interpolate the radius quadratically over the direction mesh
(see :mod:`.radial`); polygons and meshes are exact piecewise-linear boundaries.
"""

from functools import cached_property, lru_cache

import numpy as np
import shapely

from ..errors import GeometryError
from . import mesh as M
from .radial import CircleTopology, StarTopology


class Shape:
    """Common interface for all representations."""

    dim: int
    kind: str

    @property
    def center(self):
        return self._center

    def volume(self):
        return M.mesh_volume(self.vertices, self.faces, self.center)

    def boundary_quadrature(self):
        """Points (Q, n) and outward area vectors weighted by the rule (Q, n)."""
        pts, bw = M.surface_quadrature(self.vertices, self.faces)
        a = M.area_vectors(self.vertices, self.faces)
        wa = bw[None, :, None] * a[:, None, :]
        return pts.reshape(-1, self.dim), wa.reshape(-1, self.dim)

    def volume_quadrature(self):
        pts, w, *_ = M.cone_quadrature(self.vertices, self.faces, self.center)
        return pts.reshape(-1, self.dim), w.reshape(-1)

    def surface_area(self):
        return float(np.linalg.norm(self.boundary_quadrature()[1], axis=1).sum())

    def hull_points(self):
        return self.vertices

    def bbox(self):
        P = self.hull_points()
        return P.min(axis=0), P.max(axis=0)

    def contains(self, points):
        raise NotImplementedError

    def occupancy(self, points, width):
        """Smoothed indicator of the region, ramping over ``width``."""
        return self.contains(points).astype(float)

    def to_trimesh(self):
        if self.dim != 3:
            raise GeometryError("only spatial shapes convert to a triangle mesh")
        return TriMesh(self.vertices, self.faces, center=self.center, check=False)


class _RadialMixin:
    """Shared behaviour of radial shapes; needs ``radii`` and ``topology``."""

    @cached_property
    def vertex_radii(self):
        return self.topology.expand(self.radii)

    @cached_property
    def vertices(self):
        return self.center + self.vertex_radii[:, None] * self.topology.directions

    @property
    def faces(self):
        return self.topology.faces

    def volume(self):
        return self.topology.volume(self.vertex_radii)

    def boundary_quadrature(self):
        t = self.topology
        pts = t.boundary_points(self.vertex_radii, self.center)
        return pts.reshape(-1, self.dim), t.area_vectors(self.vertex_radii).reshape(-1, self.dim)

    def volume_quadrature(self):
        pts, w = self.topology.volume_quadrature(self.vertex_radii, self.center)
        return pts.reshape(-1, self.dim), w.reshape(-1)

    def hull_points(self):
        """Vertices plus the curved boundary point over each face centre."""
        t = self.topology
        Y = t.directions[t.faces].mean(axis=1)
        r = t.radii_at_bary(self.vertex_radii, np.full((1, self.dim), 1.0 / self.dim))[:, 0]
        mid = self.center + r[:, None] * Y / np.linalg.norm(Y, axis=1, keepdims=True)
        return np.concatenate([self.vertices, mid])

    def radius_at(self, directions):
        return self.topology.radius_at(self.vertex_radii, np.asarray(directions, dtype=float))

    def _polar(self, points):
        d = np.asarray(points, dtype=float) - self.center
        rho = np.linalg.norm(d, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        U = d / safe[..., None]
        fallback = np.zeros(self.dim)
        fallback[-1] = 1.0
        U = np.where((rho > 0)[..., None], U, fallback)
        return rho, U

    @cached_property
    def radius_bounds(self):
        """Bounds on the interpolated radius; P2 overshoot is capped by its Lebesgue constant 5/3."""
        N = self.topology.nodal_values(self.vertex_radii)
        lo, hi = float(N.min()), float(N.max())
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * 5.0 / 3.0
        return mid - half, mid + half

    def _radius_in_band(self, rho, U, below, above):
        """radius_at(U), evaluated only where rho lies in (lo - below, hi + above)."""
        lo, hi = self.radius_bounds
        r = np.where(rho <= lo - below, np.inf, -np.inf)
        band = (rho > lo - below) & (rho < hi + above)
        if band.any():
            r[band] = self.radius_at(U[band])
        return r

    def contains(self, points):
        rho, U = self._polar(points)
        return rho <= self._radius_in_band(rho, U, 0.0, 0.0)

    def occupancy(self, points, width):
        rho, U = self._polar(points)
        r = self._radius_in_band(rho, U, 0.5 * width, 0.5 * width)
        return np.clip(0.5 + (r - rho) / width, 0.0, 1.0)

    def with_radii(self, radii, center=None):
        return type(self)(radii, self.center if center is None else center)


def _check_radii(r):
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise GeometryError("radii must be finite and strictly positive")


# ----------------------------------------------------------------------------
# planar shapes


class Polygon(Shape):
    dim = 2
    kind = "polygon2d"

    def __init__(self, vertices, center=None):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
            raise GeometryError("polygon needs an (N>=3, 2) vertex array")
        signed = 0.5 * np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
        if abs(signed) < 1e-300:
            raise GeometryError("degenerate polygon (zero area)")
        if not shapely.LinearRing(V).is_simple:
            raise GeometryError("polygon boundary self-intersects")
        if signed < 0:
            V = V[::-1].copy()
        self._vertices = V
        self._center = V.mean(axis=0) if center is None else np.asarray(center, dtype=float)

    @property
    def vertices(self):
        return self._vertices

    @cached_property
    def faces(self):
        n = len(self._vertices)
        idx = np.arange(n)
        return np.stack([idx, (idx + 1) % n], axis=1)

    @cached_property
    def polygon(self):
        return shapely.Polygon(self.vertices)

    def is_simple(self):
        return bool(shapely.LinearRing(self.vertices).is_simple)

    def volume(self):
        x, y = self._vertices[:, 0], self._vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def contains(self, points):
        P = np.asarray(points, dtype=float)
        return shapely.contains_xy(self.polygon, P[..., 0], P[..., 1]) | shapely.intersects_xy(
            self.polygon.boundary, P[..., 0], P[..., 1])


@lru_cache(maxsize=16)
def circle_topology(n):
    return CircleTopology(n)


@lru_cache(maxsize=16)
def star_topology(n_theta, n_phi):
    return StarTopology(n_theta, n_phi)


class RadialPolygon(_RadialMixin, Shape):
    """Star-shaped planar region; boundary radius interpolated between rays.

    ``vertices`` are the boundary points on the rays; the exact region lies
    slightly outside the chord polygon through them.
    """

    dim = 2
    kind = "radial2d"
    SUBDIVISION = 32

    def __init__(self, radii, center=(0.0, 0.0)):
        r = np.asarray(radii, dtype=float)
        if r.ndim != 1 or r.size < 8:
            raise GeometryError("radial polygon needs at least 8 radii")
        _check_radii(r)
        self.radii = r
        self._center = np.asarray(center, dtype=float)
        self.topology = circle_topology(r.size)

    @cached_property
    def polygon(self):
        # fine boundary sampling for clipping against other polygons
        t = np.linspace(0.0, 1.0, self.SUBDIVISION, endpoint=False)
        U = self.topology.directions[self.faces]
        Y = (1 - t)[None, :, None] * U[:, None, 0] + t[None, :, None] * U[:, None, 1]
        r = self.topology.radii_at_bary(self.vertex_radii, np.stack([1 - t, t], axis=1))
        ring = self.center + r[..., None] * Y / np.linalg.norm(Y, axis=-1, keepdims=True)
        return shapely.Polygon(ring.reshape(-1, 2))

    def clip_vertices(self):
        return np.asarray(self.polygon.exterior.coords)[:-1]

    def is_simple(self):
        return True


class StarShape(_RadialMixin, Shape):
    """Star-shaped body defined by radii on an (n_theta, n_phi) grid."""

    dim = 3
    kind = "star3d"

    def __init__(self, radii, center=(0.0, 0.0, 0.0)):
        r = np.asarray(radii, dtype=float)
        if r.ndim != 2:
            raise GeometryError("star radii must be a 2-d (n_theta, n_phi) array")
        if r.shape[0] < 8 or r.shape[1] < 16:
            raise GeometryError(f"star grid must be at least 8x16, got {r.shape}")
        _check_radii(r)
        self.radii = r
        self._center = np.asarray(center, dtype=float)
        self.topology = star_topology(*r.shape)
        _check_radii(self.vertex_radii)

    @property
    def shape(self):
        return self.radii.shape


# ----------------------------------------------------------------------------
# general triangle meshes


class TriMesh(Shape):
    dim = 3
    kind = "trimesh"

    def __init__(self, vertices, faces, center=None, check=True):
        V = np.asarray(vertices, dtype=float)
        F = np.asarray(faces, dtype=int)
        if V.ndim != 2 or V.shape[1] != 3 or F.ndim != 2 or F.shape[1] != 3:
            raise GeometryError("trimesh needs (V,3) vertices and (F,3) faces")
        if check and not M.is_watertight(F):
            raise GeometryError("trimesh is not watertight")
        vol = M.mesh_volume(V, F, V.mean(axis=0))
        if abs(vol) < 1e-300:
            raise GeometryError("degenerate trimesh (zero volume)")
        if vol < 0:
            F = F[:, [0, 2, 1]]
        self._vertices = V
        self._faces = F
        self._center = V.mean(axis=0) if center is None else np.asarray(center, dtype=float)

    @property
    def vertices(self):
        return self._vertices

    @property
    def faces(self):
        return self._faces

    def winding_number(self, points, chunk=2048):
        """Generalized winding number (solid angle sum / 4 pi)."""
        P = np.asarray(points, dtype=float)
        flat = P.reshape(-1, 3)
        out = np.empty(flat.shape[0])
        T = self._vertices[self._faces]
        for start in range(0, flat.shape[0], chunk):
            q = flat[start:start + chunk]
            a = T[None, :, 0] - q[:, None]
            b = T[None, :, 1] - q[:, None]
            c = T[None, :, 2] - q[:, None]
            la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
            num = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
            den = (la * lb * lc + np.einsum("pfi,pfi->pf", a, b) * lc
                   + np.einsum("pfi,pfi->pf", b, c) * la + np.einsum("pfi,pfi->pf", c, a) * lb)
            out[start:start + chunk] = 2.0 * np.arctan2(num, den).sum(axis=1) / (4.0 * np.pi)
        return out.reshape(P.shape[:-1])

    def contains(self, points):
        return self.winding_number(points) > 0.5


def convex_trimesh(points):
    """Triangle mesh of the convex hull of ``points`` with outward faces."""
    from scipy.spatial import ConvexHull

    P = np.asarray(points, dtype=float)
    hull = ConvexHull(P)
    F = hull.simplices.copy()
    inner = P[hull.vertices].mean(axis=0)
    T = P[F]
    normal = np.cross(T[:, 1] - T[:, 0], T[:, 2] - T[:, 0])
    flip = np.einsum("ij,ij->i", normal, T.mean(axis=1) - inner) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    used = np.unique(F)
    remap = np.full(P.shape[0], -1)
    remap[used] = np.arange(used.size)
    return TriMesh(P[used], remap[F])


def unit_cube():
    return convex_trimesh([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)])
