"""Derivative-free rigid alignment by symmetric-difference minimization."""

import itertools

import numpy as np
import shapely
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from ..errors import DomainError
from .ops import InvarianceMap, grid_points, moments, symmetric_difference, volume

GROUPS = ("translations", "rigid", "rigid+reflections")


class _Stop(Exception):
    def __init__(self, x, value):
        self.x = x
        self.value = value


def _rotation(dim, omega):
    if dim == 2:
        c, s = np.cos(omega[0]), np.sin(omega[0])
        return np.array([[c, -s], [s, c]])
    return Rotation.from_rotvec(omega).as_matrix()


def _pca_seeds(S_E, S_F, dim, reflections):
    """Rotations taking the principal axes of F onto those of E."""
    _, VE = np.linalg.eigh(S_E)
    _, VF = np.linalg.eigh(S_F)
    seeds = []
    for signs in itertools.product((1.0, -1.0), repeat=dim):
        Q = VE @ np.diag(signs) @ VF.T
        if np.linalg.det(Q) > 0 or reflections:
            seeds.append(Q)
    return seeds


class _Objective:
    def __init__(self, E, F, c_F, resolution):
        self.E, self.F, self.c_F = E, F, c_F
        self.dim = E.dim
        if self.dim == 2:
            self.P_E = E.polygon
            self.V_F = F.clip_vertices() if hasattr(F, "clip_vertices") else F.vertices
            return
        lo, hi = E.bbox()
        c_E = 0.5 * (lo + hi)
        reach = max(np.linalg.norm(F.hull_points() - c_F, axis=1).max(), 0.5 * (hi - lo).max())
        half = 1.15 * reach
        self.points, self.cell, self.h = grid_points(c_E - half, c_E + half, resolution)
        self.occ_E = E.occupancy(self.points, self.h)
        self.evals = 0

    def make_map(self, Q, x):
        n = self.dim
        t = x[:n]
        R = Q @ _rotation(n, x[n:]) if x.size > n else Q
        return InvarianceMap(R, self.c_F - R @ self.c_F + t)

    def __call__(self, Q, x):
        amap = self.make_map(Q, x)
        if self.dim == 2:
            moved = shapely.Polygon(amap.apply(self.V_F))
            return shapely.symmetric_difference(self.P_E, moved).area
        occ = self.F.occupancy(amap.inverse_apply(self.points), self.h)
        return float(np.abs(self.occ_E - occ).sum() * self.cell)


def align(E, F, group="rigid+reflections", resolution=40, final_resolution=None,
          stop_below=None, max_evals=400, return_info=False, final_on_stop=True):
    """Find a rigid motion A minimizing |E Delta A F|.

    A coarse seed set (centroid matching, principal-axis rotations) is refined by
    Nelder-Mead on a smoothed symmetric difference sampled with ``resolution``
    cells per axis.  Returns ``(A, residual)`` where the residual is the
    symmetric difference at ``final_resolution`` (exact in the plane); it is an
    upper bound on the true infimum over the group.

    If ``stop_below`` is given the search ends as soon as a candidate with
    smoothed residual below it is found.  With ``return_info`` a third item
    ``{"stopped": bool, "objective": float}`` reports whether that happened;
    with ``final_on_stop=False`` a stopped search returns the smoothed
    objective instead of recomputing the residual.
    """
    if group not in GROUPS:
        raise DomainError(f"unknown group {group!r}; choose from {GROUPS}")
    if E.dim != F.dim:
        raise DomainError("shapes live in different dimensions")
    vE, vF = volume(E), volume(F)
    if abs(vE - vF) > 0.01 * max(vE, vF):
        raise DomainError(f"volumes differ by more than 1% ({vE:.6g} vs {vF:.6g})")
    dim = E.dim
    _, c_E, S_E = moments(E)
    _, c_F, S_F = moments(F)
    obj = _Objective(E, F, c_F, resolution)
    t0 = c_E - c_F

    if group == "translations":
        seeds = [np.eye(dim)]
        n_rot = 0
    else:
        seeds = [np.eye(dim)] + _pca_seeds(S_E, S_F, dim, group == "rigid+reflections")
        if group == "rigid+reflections":
            seeds.append(np.diag([-1.0] + [1.0] * (dim - 1)))
        n_rot = 1 if dim == 2 else 3

    x_zero = np.concatenate([t0, np.zeros(n_rot)])
    scored = sorted(((obj(Q, x_zero), k) for k, Q in enumerate(seeds)))
    stopped = stop_below is not None and scored[0][0] < stop_below
    if stopped:
        best_Q, best_x, best_val = seeds[scored[0][1]], x_zero, scored[0][0]
    else:
        best_Q, best_x, best_val = None, None, np.inf
        scale = np.sqrt(np.trace(S_F))
        step = np.concatenate([np.full(dim, 0.15 * scale), np.full(n_rot, 0.15)])
        for _, k in scored[:2]:
            Q = seeds[k]

            def f(x, Q=Q):
                val = obj(Q, x)
                if stop_below is not None and val < stop_below:
                    raise _Stop(x.copy(), val)
                return val

            simplex = np.vstack([x_zero] + [x_zero + np.eye(x_zero.size)[i] * step[i] for i in range(x_zero.size)])
            try:
                res = minimize(f, x_zero, method="Nelder-Mead",
                               options={"initial_simplex": simplex, "maxfev": max_evals,
                                        "xatol": 1e-4 * scale, "fatol": 1e-7 * vE})
                x, val = res.x, res.fun
            except _Stop as stop:
                x, val = stop.x, stop.value
                stopped = True
                if val < best_val:
                    best_Q, best_x, best_val = Q, x, val
                break
            if val < best_val:
                best_Q, best_x, best_val = Q, x, val

    amap = obj.make_map(best_Q, best_x)
    if stopped and not final_on_stop:
        residual = float(best_val)
    else:
        residual = symmetric_difference(E, F, resolution=final_resolution, map_F=amap)
    if return_info:
        return amap, residual, {"stopped": bool(stopped), "objective": float(best_val)}
    return amap, residual
