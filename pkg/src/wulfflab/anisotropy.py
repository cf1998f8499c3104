"""Surface tensions and Wulff shapes.

A tension is a positive, 1-homogeneous function ``f`` of the outward normal.
All evaluators are vectorized over leading axes: ``value(nu)`` accepts an
array of shape ``(..., n)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, DomainError
from .shapes import RadialPolygon, StarShape, star_topology
from .shapes.core import circle_topology
from .shapes.ops import rescale_to_mass

ELLIPTICITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TensionFunction:
    """Immutable surface tension with derivatives and declared ellipticity bounds."""

    name: str
    dimension: int
    evaluator: Callable
    gradient_evaluator: Callable
    hessian_evaluator: Optional[Callable]
    lambda_lower: float
    lambda_upper: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise DomainError("tension dimension must be 2 or 3")
        if not 0 < self.lambda_lower <= self.lambda_upper:
            raise DomainError("ellipticity bounds must satisfy 0 < lower <= upper")

    def _check(self, nu):
        nu = np.asarray(nu, dtype=float)
        if nu.shape[-1] != self.dimension:
            raise DomainError(f"expected {self.dimension}-vectors, got shape {nu.shape}")
        if np.any(np.linalg.norm(nu, axis=-1) == 0):
            raise DomainError("tension evaluated at the zero vector")
        return nu

    def value(self, nu):
        return self.evaluator(self._check(nu))

    def gradient(self, nu):
        return self.gradient_evaluator(self._check(nu))

    def hessian(self, nu):
        if self.hessian_evaluator is None:
            raise CapabilityError(f"tension {self.name!r} has no Hessian")
        return self.hessian_evaluator(self._check(nu))

    @property
    def has_hessian(self):
        return self.hessian_evaluator is not None

    def to_dict(self):
        return {"kind": self.name, "params": dict(self.params)}


def eval_tension(f, direction, order=0):
    """f(nu) and, for ``order`` 1 or 2, its gradient and Hessian as a tuple."""
    if order not in (0, 1, 2):
        raise DomainError("order must be 0, 1 or 2")
    out = [f.value(direction)]
    if order >= 1:
        out.append(f.gradient(direction))
    if order == 2:
        out.append(f.hessian(direction))
    return out[0] if order == 0 else tuple(out)


# -- catalog -------------------------------------------------------------------


def euclidean(dim=3):
    def val(nu):
        return np.linalg.norm(nu, axis=-1)

    def grad(nu):
        return nu / np.linalg.norm(nu, axis=-1, keepdims=True)

    def hess(nu):
        r = np.linalg.norm(nu, axis=-1)[..., None, None]
        u = nu[..., :, None] / r
        return (np.eye(nu.shape[-1]) - u * np.swapaxes(u, -1, -2)) / r

    return TensionFunction("euclidean", dim, val, grad, hess, 1.0, 1.0, {"dim": dim})


def ellipsoidal(matrix=None, axes=None):
    """f(nu) = sqrt(nu . M nu); the Wulff shape is {x . M^-1 x <= 1}.

    Pass either a symmetric positive definite ``matrix`` or the semi-axes
    ``axes`` of the Wulff ellipsoid (then M = diag(axes**2)).
    """
    if (matrix is None) == (axes is None):
        raise DomainError("give exactly one of matrix or axes")
    if axes is not None:
        a = np.asarray(axes, dtype=float)
        if np.any(a <= 0):
            raise DomainError("axes must be positive")
        M = np.diag(a ** 2)
        params = {"axes": a.tolist()}
    else:
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
            raise DomainError("matrix must be square and symmetric")
        params = {"matrix": M.tolist()}
    ev = np.linalg.eigvalsh(M)
    if ev[0] <= 0:
        raise DomainError("matrix must be positive definite")

    def val(nu):
        return np.sqrt(np.einsum("...i,ij,...j->...", nu, M, nu))

    def grad(nu):
        return (nu @ M) / val(nu)[..., None]

    def hess(nu):
        f = val(nu)[..., None, None]
        Mn = (nu @ M)[..., :, None]
        return (M - Mn * np.swapaxes(Mn, -1, -2) / f ** 2) / f

    # t.D2f.t = min_s (t - s nu).M(t - s nu) / f for unit t orthogonal to unit nu
    lower = ev[0] / np.sqrt(ev[-1])
    upper = ev[-1] / np.sqrt(ev[0])
    return TensionFunction("ellipsoidal", M.shape[0], val, grad, hess, float(lower), float(upper), params)


def smoothed_lp(p=4.0, delta=0.2, weight=0.3, dim=3, lambda_upper=None):
    """Smoothed l^p norm blended with the Euclidean norm.

    f(nu) = (1 - w) (sum_i (nu_i^2 + delta |nu|^2)^(p/2))^(1/p) + w |nu|.
    Each summand is a Euclidean norm of a linear image of nu, so the first
    term is convex and 1-homogeneous; the blend makes it strictly elliptic
    with tangential eigenvalues at least ``w``.
    """
    p, delta, w = float(p), float(delta), float(weight)
    if not 1.0 < p < np.inf:
        raise DomainError("p must lie in (1, inf)")
    if delta <= 0 or not 0 < w < 1:
        raise DomainError("need delta > 0 and weight in (0, 1)")

    def parts(nu):
        s = np.sum(nu * nu, axis=-1, keepdims=True)
        q = nu * nu + delta * s
        S = np.sum(q ** (p / 2), axis=-1)
        N = S ** (1 / p)
        a = q ** (p / 2 - 1)
        A = a.sum(axis=-1, keepdims=True)
        h = a * nu + delta * A * nu
        return q, N, a, A, h

    def val(nu):
        return (1 - w) * parts(nu)[1] + w * np.linalg.norm(nu, axis=-1)

    def grad(nu):
        _, N, _, _, h = parts(nu)
        gN = N[..., None] ** (1 - p) * h
        return (1 - w) * gN + w * nu / np.linalg.norm(nu, axis=-1, keepdims=True)

    iso = euclidean(dim).hessian_evaluator

    def hess(nu):
        q, N, a, A, h = parts(nu)
        b = (p - 2) * q ** (p / 2 - 2)
        B = b.sum(axis=-1)[..., None, None]
        c = b * nu
        outer = lambda x, y: x[..., :, None] * y[..., None, :]  # noqa: E731
        J = (np.einsum("...i,ij->...ij", a + delta * A + b * nu * nu, np.eye(nu.shape[-1]))
             + delta * (outer(c, nu) + outer(nu, c)) + delta ** 2 * B * outer(nu, nu))
        Nb = N[..., None, None]
        HN = (1 - p) * Nb ** (1 - 2 * p) * outer(h, h) + Nb ** (1 - p) * J
        return (1 - w) * HN + w * iso(nu)

    params = {"p": p, "delta": delta, "weight": w, "dim": dim}
    if lambda_upper is None:
        # no closed form; twice the largest eigenvalue seen on a dense sample
        U = sphere_directions(dim, 4000)
        lambda_upper = 2.0 * float(np.linalg.eigvalsh(hess(U))[:, -1].max())
    return TensionFunction("smoothed_lp", dim, val, grad, hess, w, float(lambda_upper), params)


CATALOG = {"euclidean": euclidean, "ellipsoidal": ellipsoidal, "smoothed_lp": smoothed_lp}


def tension_from_config(spec):
    """Build a tension from ``{"kind": ..., "params": {...}}``."""
    kind = spec.get("kind")
    if kind not in CATALOG:
        raise DomainError(f"unknown tension kind {kind!r}; choose from {sorted(CATALOG)}")
    return CATALOG[kind](**spec.get("params", {}))


# -- direction sampling ------------------------------------------------------------


def sphere_directions(dim, count):
    """Quasi-uniform unit vectors: Fibonacci lattice in 3D, equal angles in 2D."""
    count = int(count)
    if dim == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = np.pi * (1 + 5 ** 0.5) * k
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def icosphere(level=3):
    """Vertices and faces of a subdivided icosahedron on the unit sphere."""
    t = (1 + 5 ** 0.5) / 2
    V = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V = [np.array(v, float) / np.linalg.norm(v) for v in V]
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        nxt = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = nxt
    return np.array(V), np.array(F)


def _tangent_basis(nu):
    """Orthonormal basis (..., n, n-1) of the plane orthogonal to unit ``nu``."""
    if nu.shape[-1] == 2:
        return np.stack([-nu[..., 1], nu[..., 0]], axis=-1)[..., None]
    helper = np.where(np.abs(nu[..., :1]) < 0.9, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    e1 = np.cross(nu, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(nu, e1)
    return np.stack([e1, e2], axis=-1)


def check_lambda_ellipticity(f, samples=2000, tol=ELLIPTICITY_TOL):
    """Audit the declared ellipticity bounds on quasi-uniform unit directions."""
    if samples < 16:
        raise DomainError("need at least 16 samples")
    if not f.has_hessian:
        raise CapabilityError(f"tension {f.name!r} has no Hessian; ellipticity cannot be audited")
    U = sphere_directions(f.dimension, samples)
    E = _tangent_basis(U)
    H = f.hessian(U)
    T = np.einsum("sia,sij,sjb->sab", E, H, E)
    eig = np.linalg.eigvalsh(T)
    lo, hi = float(eig.min()), float(eig.max())
    ok = bool(np.isfinite(eig).all() and lo >= f.lambda_lower - tol and hi <= f.lambda_upper + tol)
    return {"min_tangential_eig": lo, "max_tangential_eig": hi,
            "lambda_lower": f.lambda_lower, "lambda_upper": f.lambda_upper, "pass": ok}


# -- Wulff shapes ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WulffShape:
    body: object
    tension: TensionFunction
    volume: float
    scale: float = 1.0  # body = scale * K where K = {x . nu <= f(nu)}


def wulff_radius(f, U, tol=1e-13, max_iter=60):
    """Radial function of the Wulff body along unit directions ``U``.

    r(u) = min over {nu : nu . u = 1} of f(nu), solved by damped Newton in the
    affine plane (the objective is convex there).
    """
    U = np.asarray(U, dtype=float)
    E = _tangent_basis(U)
    z = np.zeros(U.shape[:-1] + (U.shape[-1] - 1,))

    def nu_of(z):
        return U + np.einsum("...ia,...a->...i", E, z)

    if not f.has_hessian:
        from scipy.optimize import minimize

        flat_U, flat_E = U.reshape(-1, U.shape[-1]), E.reshape(-1, *E.shape[-2:])
        out = [minimize(lambda zz, u=u, e=e: float(f.value(u + e @ zz)), np.zeros(e.shape[1]),
                        jac=lambda zz, u=u, e=e: e.T @ f.gradient(u + e @ zz), method="BFGS",
                        options={"gtol": 1e-12}).fun for u, e in zip(flat_U, flat_E)]
        return np.asarray(out).reshape(U.shape[:-1])

    val = f.value(nu_of(z))
    for _ in range(max_iter):
        nu = nu_of(z)
        g = np.einsum("...ia,...i->...a", E, f.gradient(nu))
        if np.abs(g).max() < tol:
            break
        H = np.einsum("...ia,...ij,...jb->...ab", E, f.hessian(nu), E)
        step = -np.linalg.solve(H, g[..., None])[..., 0]
        t = np.ones(val.shape)
        for _ in range(30):
            trial = f.value(nu_of(z + t[..., None] * step))
            bad = trial > val + 1e-15 * np.abs(val)
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
        z = z + t[..., None] * step
        val = f.value(nu_of(z))
    return val


def default_resolution(dim):
    return (32, 64) if dim == 3 else 256


def wulff_shape(f, mass=None, resolution=None):
    """Wulff body of ``f``, rescaled to volume ``mass`` (natural size if None).

    ``resolution`` is the (n_theta, n_phi) grid of the star representation in
    3D or the number of rays in 2D.
    """
    if mass is not None and not mass > 0:
        raise DomainError(f"mass must be positive, got {mass}")
    n = f.dimension
    resolution = default_resolution(n) if resolution is None else resolution
    if n == 3:
        topo = star_topology(*tuple(resolution))
        radii = wulff_radius(f, topo.grid_directions)
        body = StarShape(radii)
    else:
        topo = circle_topology(int(resolution))
        body = RadialPolygon(wulff_radius(f, topo.directions))
    scale = 1.0
    if mass is not None:
        natural = body.volume()
        body = rescale_to_mass(body, mass)
        scale = (mass / natural) ** (1.0 / n)
    return WulffShape(body, f, float(body.volume()), scale)


def support_error(wulff, directions=None):
    """max |h_K(nu) - scale f(nu)| / scale over unit directions (default: icosphere level 3)."""
    n = wulff.tension.dimension
    if directions is None:
        directions = icosphere(3)[0] if n == 3 else sphere_directions(2, 720)
    P = wulff.body.hull_points()
    h = (directions @ P.T).max(axis=1)
    return float(np.abs(h - wulff.scale * wulff.tension.value(directions)).max() / wulff.scale)
