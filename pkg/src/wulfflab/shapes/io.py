"""Shape serialization: versioned JSON records and OFF meshes."""

import json

import numpy as np

from ..errors import DomainError, GeometryError
from .core import Polygon, RadialPolygon, StarShape, TriMesh, star_topology

SCHEMA = "wulfflab.shape"
VERSION = 1


def shape_to_dict(shape):
    if isinstance(shape, StarShape):
        dims, payload = list(shape.radii.shape), shape.radii.ravel().tolist()
    elif isinstance(shape, RadialPolygon):
        dims, payload = [shape.radii.size], shape.radii.tolist()
    elif isinstance(shape, Polygon):
        dims, payload = list(shape.vertices.shape), shape.vertices.ravel().tolist()
    elif isinstance(shape, TriMesh):
        dims = [len(shape.vertices), len(shape.faces)]
        payload = {"vertices": shape.vertices.ravel().tolist(), "faces": shape.faces.ravel().tolist()}
    else:
        raise DomainError(f"cannot serialize {type(shape).__name__}")
    kind = "radial2d" if isinstance(shape, RadialPolygon) else shape.kind
    return {"schema": SCHEMA, "version": VERSION, "kind": kind, "dims": dims,
            "center": np.asarray(shape.center).tolist(), "payload": payload}


def shape_from_dict(record):
    if record.get("schema") != SCHEMA or record.get("version") != VERSION:
        raise DomainError("not a version-1 shape record")
    kind, dims, payload = record["kind"], record["dims"], record["payload"]
    center = record.get("center")
    if kind == "star3d":
        return StarShape(np.reshape(payload, dims), center)
    if kind == "radial2d":
        return RadialPolygon(np.asarray(payload, float), center)
    if kind == "polygon2d":
        return Polygon(np.reshape(payload, dims), center)
    if kind == "trimesh":
        V = np.reshape(payload["vertices"], (dims[0], 3))
        F = np.reshape(payload["faces"], (dims[1], 3))
        return TriMesh(V, F, center=center)
    raise DomainError(f"unknown shape kind {kind!r}")


def save_shape(shape, path):
    with open(path, "w") as fh:
        json.dump(shape_to_dict(shape), fh)


def load_shape(path):
    with open(path) as fh:
        return shape_from_dict(json.load(fh))


def write_off(shape, path):
    V, F = shape.vertices, shape.faces
    if V.shape[1] != 3:
        raise DomainError("OFF export needs a spatial shape")
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(V)} {len(F)} 0\n")
        for v in V:
            fh.write(f"{v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        for f in F:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def read_off(path):
    with open(path) as fh:
        tokens = [line.split("#")[0].split() for line in fh]
    tokens = [t for t in tokens if t]
    if not tokens or tokens[0][0] != "OFF":
        raise DomainError(f"{path}: missing OFF header")
    header = tokens[0][1:] or tokens[1]
    start = 1 if tokens[0][1:] else 2
    nv, nf = int(header[0]), int(header[1])
    V = np.array([[float(x) for x in t[:3]] for t in tokens[start:start + nv]])
    faces = []
    for t in tokens[start + nv:start + nv + nf]:
        k = int(t[0])
        idx = [int(x) for x in t[1:1 + k]]
        faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, k - 1))
    return TriMesh(V, np.array(faces, dtype=int))


def star_from_mesh(mesh, resolution=(32, 64), center=None):
    """Resample a triangle mesh as a StarShape by casting rays from ``center``.

    Raises GeometryError when some ray leaves the body more than once, i.e. the
    mesh is not star-shaped about the center (default: vertex centroid).
    """
    c = mesh.center if center is None else np.asarray(center, dtype=float)
    U = star_topology(*tuple(resolution)).grid_directions.reshape(-1, 3)
    T = mesh.vertices[mesh.faces] - c
    e1, e2 = T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]
    radii = np.empty(len(U))
    for k, u in enumerate(U):
        # Moller-Trumbore against every face at once
        p = np.cross(u, e2)
        det = np.einsum("fi,fi->f", e1, p)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = -T[:, 0]
        a = np.einsum("fi,fi->f", s, p) * inv
        q = np.cross(s, e1)
        b = (q @ u) * inv
        t = np.einsum("fi,fi->f", e2, q) * inv
        tol = 1e-10
        hit = ok & (a >= -tol) & (b >= -tol) & (a + b <= 1 + tol) & (t > 0)
        ts = np.sort(t[hit])
        if ts.size == 0:
            raise GeometryError("ray from the center misses the mesh; center lies outside")
        distinct = ts[np.concatenate([[True], np.diff(ts) > 1e-9 * ts[-1]])]
        if distinct.size != 1:
            raise GeometryError("mesh is not star-shaped about its center")
        radii[k] = distinct[0]
    return StarShape(radii.reshape(tuple(resolution)), c)
