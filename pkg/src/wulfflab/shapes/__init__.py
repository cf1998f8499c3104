"""Discrete shapes, their measures, and alignment under rigid motions."""

from .align import GROUPS, align
from .core import (Polygon, RadialPolygon, Shape, StarShape, TriMesh, convex_trimesh,
                   star_topology, unit_cube)
from .io import (load_shape, read_off, save_shape, shape_from_dict, shape_to_dict, star_from_mesh,
                 write_off)
from .ops import (BoundaryMeasure, InvarianceMap, MappedShape, apply_map, boundary_measure,
                  convex_hull, convexity_defect, moments, rescale_to_mass, scale,
                  symmetric_difference, volume)


def ball(radius=1.0, center=None, resolution=(32, 64)):
    """Round ball as a star shape (3D) or radial polygon (2D).

    ``resolution`` is ``(n_theta, n_phi)`` in space or a vertex count in the plane.
    """
    import numpy as np

    if isinstance(resolution, int):
        c = (0.0, 0.0) if center is None else center
        return RadialPolygon(np.full(resolution, float(radius)), c)
    c = (0.0, 0.0, 0.0) if center is None else center
    return StarShape(np.full(tuple(resolution), float(radius)), c)


__all__ = [
    "GROUPS", "align", "Polygon", "RadialPolygon", "Shape", "StarShape", "TriMesh",
    "convex_trimesh", "star_topology", "unit_cube", "load_shape", "read_off", "save_shape",
    "shape_from_dict", "shape_to_dict", "star_from_mesh", "write_off", "BoundaryMeasure", "InvarianceMap",
    "MappedShape", "apply_map", "boundary_measure", "convex_hull", "convexity_defect",
    "moments", "rescale_to_mass", "scale", "symmetric_difference", "volume", "ball",
]
