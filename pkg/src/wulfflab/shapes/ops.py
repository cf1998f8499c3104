"""Measures and transformations of shapes."""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import ConvexHull, QhullError

from ..errors import DomainError, GeometryError
from .core import Polygon, RadialPolygon, StarShape, TriMesh, convex_trimesh

log = logging.getLogger(__name__)

BoundaryMeasure = namedtuple("BoundaryMeasure", "areas normals centroids skipped")


@dataclass(frozen=True, eq=False)
class InvarianceMap:
    """Rigid motion ``x -> rotation @ x + translation``; reflections have det -1."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if Q.shape != (t.size, t.size):
            raise DomainError("rotation and translation dimensions disagree")
        if not np.allclose(Q.T @ Q, np.eye(t.size), atol=1e-10, rtol=0):
            raise DomainError("rotation is not orthogonal to 1e-10")
        object.__setattr__(self, "rotation", Q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def translation_by(cls, z):
        z = np.asarray(z, dtype=float)
        return cls(np.eye(z.size), z)

    @property
    def dim(self):
        return self.translation.size

    @property
    def is_reflection(self):
        return bool(np.linalg.det(self.rotation) < 0)

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def inverse_apply(self, points):
        return (np.asarray(points) - self.translation) @ self.rotation

    def compose(self, other):
        """``self`` after ``other``."""
        return InvarianceMap(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self):
        return InvarianceMap(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}


class MappedShape:
    """Membership view of ``A F`` without resampling ``F``."""

    def __init__(self, shape, amap):
        self.shape = shape
        self.map = amap
        self.dim = shape.dim

    def contains(self, points):
        return self.shape.contains(self.map.inverse_apply(points))

    def occupancy(self, points, width):
        return self.shape.occupancy(self.map.inverse_apply(points), width)

    def bbox(self):
        V = self.map.apply(self.shape.hull_points())
        return V.min(axis=0), V.max(axis=0)

    def surface_area(self):
        return self.shape.surface_area()


def apply_map(shape, amap):
    """Image of ``shape`` under a rigid motion, in the most faithful representation."""
    Q, t = amap.rotation, amap.translation
    if shape.dim == 2:
        if isinstance(shape, RadialPolygon) and np.allclose(Q, np.eye(2)):
            return RadialPolygon(shape.radii, shape.center + t)
        V = shape.clip_vertices() if hasattr(shape, "clip_vertices") else shape.vertices
        return Polygon(amap.apply(V), center=amap.apply(shape.center))
    if isinstance(shape, StarShape) and np.allclose(Q, np.eye(3)):
        return StarShape(shape.radii, shape.center + t)
    return TriMesh(amap.apply(shape.vertices), shape.faces, center=amap.apply(shape.center), check=False)


def volume(shape):
    """Lebesgue measure of the region (divergence theorem on the boundary mesh)."""
    v = shape.volume()
    if not np.isfinite(v) or v <= 0:
        raise GeometryError(f"degenerate shape: volume {v}")
    return v


def boundary_measure(shape, tiny=1e-14):
    """Boundary elements: measure, outward unit normal and location of each element.

    Elements are the quadrature points of the boundary rule, so the measures
    sum to the perimeter / surface area of the discrete shape.
    """
    X, a = shape.boundary_quadrature()
    dA = np.linalg.norm(a, axis=1)
    keep = dA > tiny * max(dA.max(initial=0.0), 1.0)
    skipped = int((~keep).sum())
    if skipped:
        log.warning("boundary_measure: skipped %d degenerate elements", skipped)
    return BoundaryMeasure(dA[keep], a[keep] / dA[keep, None], X[keep], skipped)


def moments(shape):
    """Volume, centroid and second central moment matrix of the region."""
    pts, w = shape.volume_quadrature()
    vol = w.sum()
    c = w @ pts / vol
    d = pts - c
    S = np.einsum("p,pi,pj->ij", w, d, d) / vol
    return vol, c, S


def _polygon_of(shape, amap=None):
    V = shape.clip_vertices() if hasattr(shape, "clip_vertices") else shape.vertices
    if amap is not None:
        V = amap.apply(V)
    return shapely.Polygon(V)


def _grid(lo, hi, resolution):
    span = hi - lo
    h = span.max() / resolution
    counts = np.maximum(np.ceil(span / h).astype(int), 1)
    axes = [lo[k] + (np.arange(counts[k]) + 0.5) * (span[k] / counts[k]) for k in range(lo.size)]
    cell = np.prod(span / counts)
    return axes, cell, (span / counts).max()


def grid_points(lo, hi, resolution):
    axes, cell, h = _grid(np.asarray(lo, float), np.asarray(hi, float), resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), cell, h


def _chunked(fn, P, chunk=200_000):
    return np.concatenate([fn(P[i:i + chunk]) for i in range(0, P.shape[0], chunk)]) if P.shape[0] else np.zeros(0)


def symmetric_difference(E, F, resolution=None, map_F=None, return_error=False):
    """|E Delta A F| where ``A = map_F`` (identity by default).

    Planar polygons are clipped exactly; spatial shapes use a membership grid
    of ``resolution`` cells along the longest side of the common bounding box
    (128 by default).  With ``return_error`` the pair ``(value, error)`` is
    returned, ``error`` being an O(h) estimate of the quadrature error.
    """
    if E.dim != F.dim:
        raise DomainError("shapes live in different dimensions")
    if E.dim == 2:
        value = float(shapely.symmetric_difference(_polygon_of(E), _polygon_of(F, map_F)).area)
        return (value, 0.0) if return_error else value
    G = F if map_F is None else MappedShape(F, map_F)
    lo1, hi1 = E.bbox()
    lo2, hi2 = G.bbox()
    lo, hi = np.minimum(lo1, lo2), np.maximum(hi1, hi2)
    pad = 1e-3 * (hi - lo).max()
    resolution = resolution or 128
    P, cell, h = grid_points(lo - pad, hi + pad, resolution)
    mismatch = _chunked(lambda Q: E.contains(Q) != G.contains(Q), P)
    value = float(mismatch.sum() * cell)
    if return_error:
        err = 0.5 * np.sqrt(E.dim) * h * (E.surface_area() + G.surface_area())
        return value, float(err)
    return value


def convex_hull(shape):
    """Convex hull of the boundary vertices as a shape of the same dimension."""
    try:
        P = shape.hull_points()
        if shape.dim == 2:
            hull = ConvexHull(P)
            return Polygon(P[hull.vertices])
        return convex_trimesh(P)
    except QhullError as exc:
        raise GeometryError(f"convex hull failed: {exc}") from exc


def convexity_defect(shape):
    """|conv(E) \\ E| / |conv(E)| using the hull of the boundary vertices."""
    try:
        hull_volume = ConvexHull(shape.hull_points()).volume
    except QhullError as exc:
        raise GeometryError(f"convex hull failed: {exc}") from exc
    if hull_volume <= 0:
        raise GeometryError("degenerate hull")
    return float(np.clip((hull_volume - volume(shape)) / hull_volume, 0.0, 1.0))


def scale(shape, factor, about="origin"):
    """Dilate by ``factor`` about the origin or about the shape's center."""
    factor = float(factor)
    origin = np.zeros(shape.dim) if about == "origin" else shape.center
    c = origin + factor * (shape.center - origin)
    if isinstance(shape, StarShape):
        return StarShape(shape.radii * factor, c)
    if isinstance(shape, RadialPolygon):
        return RadialPolygon(shape.radii * factor, c)
    V = origin + factor * (shape.vertices - origin)
    if isinstance(shape, Polygon):
        return Polygon(V, center=c)
    return TriMesh(V, shape.faces, center=c, check=False)


def rescale_to_mass(shape, mass, about="origin"):
    """gamma E with gamma = (mass / |E|)^(1/n)."""
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass}")
    gamma = (mass / volume(shape)) ** (1.0 / shape.dim)
    return scale(shape, gamma, about=about)
