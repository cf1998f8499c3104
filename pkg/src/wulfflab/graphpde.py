"""Quasilinear graph equation a_ij(grad u) u_ij = mu - g(x, u) on planar grids.

The solver works on a Cartesian grid of spacing ``h``.  Unknowns are the grid
nodes inside the domain; every other node in the 3x3 stencil of an unknown
is a ghost node.  On a rectangle the ghosts are boundary nodes carrying the
data; on a disk each ghost value extrapolates quadratically along the inward
normal from the boundary point and two interior samples, which keeps the
scheme second order on the curved boundary.  The isotropic operator is
discretized in flux form, div(grad u / W) with W = sqrt(1 + |grad u|^2)
evaluated at edge midpoints; user coefficient models use plain central
differences.
"""

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import DomainError, NonConvergenceError
from .potential import PotentialFunction


def isotropic_coefficients(p):
    """a_ij(p) = (delta_ij - p_i p_j / (1 + |p|^2)) / sqrt(1 + |p|^2); p may be batched (..., 2)."""
    p = np.asarray(p, dtype=float)
    W2 = 1.0 + np.sum(p * p, axis=-1)[..., None, None]
    outer = p[..., :, None] * p[..., None, :]
    return (np.eye(2) - outer / W2) / np.sqrt(W2)


def ellipticity_audit(coefficients, radius=10.0, samples=2000, seed=0, extra=None):
    """Eigenvalue range of a(p) over sampled gradients with |p| <= radius."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, samples)
    rad = radius * np.sqrt(rng.random(samples))
    P = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    P = np.concatenate([P, np.zeros((1, 2))] + ([np.asarray(extra).reshape(-1, 2)] if extra is not None else []))
    A = np.asarray(coefficients(P), dtype=float)
    sym = float(np.abs(A - np.swapaxes(A, -1, -2)).max())
    eig = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
    lo, hi = float(eig.min()), float(eig.max())
    return {"min_eig": lo, "max_eig": hi, "asymmetry": sym,
            "pass": bool(lo > 0 and sym <= 1e-12 * max(1.0, hi) and np.all(np.isfinite(A)))}


# -- grids ------------------------------------------------------------------------


@dataclass
class GridField:
    """Values on a Cartesian grid; ``mask`` marks nodes where the field is meaningful."""

    values: np.ndarray
    h: float
    origin: np.ndarray
    mask: np.ndarray
    name: str = "u"
    units: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"field {self.name!r} has non-finite values")

    @property
    def coords(self):
        nx, ny = self.values.shape
        x = self.origin[0] + self.h * np.arange(nx)
        y = self.origin[1] + self.h * np.arange(ny)
        return np.meshgrid(x, y, indexing="ij")

    def masked(self):
        return self.values[self.mask]

    def sites(self, where):
        X, Y = self.coords
        return np.stack([X[where], Y[where]], axis=1)

    @classmethod
    def from_function(cls, fn, bounds, h, name="u"):
        """Sample ``fn(x, y)`` on the rectangle ``bounds = (x0, x1, y0, y1)``."""
        x0, x1, y0, y1 = bounds
        nx = int(round((x1 - x0) / h)) + 1
        ny = int(round((y1 - y0) / h)) + 1
        X, Y = np.meshgrid(x0 + h * np.arange(nx), y0 + h * np.arange(ny), indexing="ij")
        return cls(fn(X, Y), h, (x0, y0), np.ones((nx, ny), dtype=bool), name)

    def to_rows(self):
        """(x, y, value) rows of the masked nodes."""
        X, Y = self.coords
        return np.stack([X[self.mask], Y[self.mask], self.values[self.mask]], axis=1)


@dataclass
class GraphProblem:
    """Dirichlet problem for the graph equation.

    ``domain`` is ``{"kind": "disk", "radius": R, "center": (cx, cy)}`` or
    ``{"kind": "rectangle", "bounds": (x0, x1, y0, y1)}``.  ``potential`` is a
    callable ``g(x1, x2, u)`` or a 3-d PotentialFunction evaluated at
    ``(x1, x2, u)``.  ``boundary`` is a callable ``(x, y) -> u`` read on the
    boundary (the circle, or the boundary nodes of the rectangle).
    """

    domain: dict
    h: float
    mu: float
    boundary: Callable
    potential: Union[None, Callable, PotentialFunction] = None
    coefficients: Union[str, Callable] = "isotropic"
    tol: float = 1e-8
    max_newton: int = 60
    name: str = "graph"

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("grid spacing must be positive")
        kind = self.domain.get("kind")
        if kind not in ("disk", "rectangle"):
            raise DomainError(f"unknown domain kind {kind!r}")

    def g(self, x, y, u):
        if self.potential is None:
            return np.zeros_like(u)
        if isinstance(self.potential, PotentialFunction):
            return self.potential.value(np.stack([x, y, u], axis=-1))
        return np.asarray(self.potential(x, y, u), dtype=float) + np.zeros_like(u)

    def grid(self):
        """Coordinates, unknown mask and ghost mask on a padded grid."""
        h = self.h
        if self.domain["kind"] == "disk":
            R = float(self.domain.get("radius", 1.0))
            c = np.asarray(self.domain.get("center", (0.0, 0.0)), dtype=float)
            k = int(np.ceil(R / h)) + 1
            ax = h * np.arange(-k, k + 1)
            X, Y = np.meshgrid(c[0] + ax, c[1] + ax, indexing="ij")
            inside = (X - c[0]) ** 2 + (Y - c[1]) ** 2 < R * R * (1 - 1e-12)
        else:
            x0, x1, y0, y1 = map(float, self.domain["bounds"])
            nx, ny = (x1 - x0) / h, (y1 - y0) / h
            if abs(nx - round(nx)) > 1e-9 * max(1, nx) or abs(ny - round(ny)) > 1e-9 * max(1, ny):
                raise DomainError("rectangle sides must be multiples of h")
            X, Y = np.meshgrid(x0 + h * np.arange(round(nx) + 1), y0 + h * np.arange(round(ny) + 1), indexing="ij")
            inside = np.zeros(X.shape, dtype=bool)
            inside[1:-1, 1:-1] = True
        if inside.sum() == 0:
            raise DomainError("grid has no interior nodes")
        near = inside.copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                near |= np.roll(np.roll(inside, di, 0), dj, 1)
        ghost = near & ~inside
        return X, Y, inside, ghost


# -- discrete operator ------------------------------------------------------------


def _shift(U, di, dj):
    return np.roll(np.roll(U, -di, 0), -dj, 1)


def _isotropic_operator(U, h):
    """div(grad u / W) in flux form at every node (wrapped values are ignored by callers)."""
    # x-flux at (i+1/2, j)
    px = (_shift(U, 1, 0) - U) / h
    py = (_shift(U, 0, 1) + _shift(U, 1, 1) - _shift(U, 0, -1) - _shift(U, 1, -1)) / (4 * h)
    Fx = px / np.sqrt(1 + px * px + py * py)
    # y-flux at (i, j+1/2)
    qy = (_shift(U, 0, 1) - U) / h
    qx = (_shift(U, 1, 0) + _shift(U, 1, 1) - _shift(U, -1, 0) - _shift(U, -1, 1)) / (4 * h)
    Fy = qy / np.sqrt(1 + qx * qx + qy * qy)
    return (Fx - _shift(Fx, -1, 0)) / h + (Fy - _shift(Fy, 0, -1)) / h


def central_derivatives(U, h):
    """Central-difference gradient and Hessian entries (ux, uy, uxx, uxy, uyy) at every node."""
    E, W, N, S = _shift(U, 1, 0), _shift(U, -1, 0), _shift(U, 0, 1), _shift(U, 0, -1)
    ux = (E - W) / (2 * h)
    uy = (N - S) / (2 * h)
    uxx = (E - 2 * U + W) / h ** 2
    uyy = (N - 2 * U + S) / h ** 2
    uxy = (_shift(U, 1, 1) - _shift(U, 1, -1) - _shift(U, -1, 1) + _shift(U, -1, -1)) / (4 * h * h)
    return ux, uy, uxx, uxy, uyy


def _general_operator(U, h, coefficients):
    ux, uy, uxx, uxy, uyy = central_derivatives(U, h)
    A = np.asarray(coefficients(np.stack([ux, uy], axis=-1)), dtype=float)
    return A[..., 0, 0] * uxx + (A[..., 0, 1] + A[..., 1, 0]) * uxy + A[..., 1, 1] * uyy


def _lagrange(nodes, x):
    """Lagrange weights of ``nodes`` at points ``x`` -> (len(x), len(nodes))."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)[:, None]
    w = np.ones((x.shape[0], len(nodes)))
    for k in range(len(nodes)):
        for m in range(len(nodes)):
            if m != k:
                w[:, k] *= (x[:, 0] - nodes[m]) / (nodes[k] - nodes[m])
    return w


class _Discretization:
    """Unknowns, ghost closure and residual of one problem.

    On a disk each ghost value is extrapolated quadratically along the normal
    from the boundary value and two interior samples at depths 4h and 8h,
    each sample interpolated bicubically from unknowns.  Ghosts are thus
    ``g0 + G @ x`` and the boundary data is only read on the circle.
    """

    DEPTHS = (4.0, 8.0)

    def __init__(self, prob):
        self.prob = prob
        self.X, self.Y, self.inside, self.ghost = prob.grid()
        shape = self.X.shape
        self.idx = np.flatnonzero(self.inside.ravel())
        self.gidx = np.flatnonzero(self.ghost.ravel())
        self.pos = -np.ones(shape, dtype=int)
        self.pos.ravel()[self.idx] = np.arange(len(self.idx))
        if prob.domain["kind"] == "disk":
            self.g0, self.G = self._disk_closure()
        else:
            gx, gy = self.X.ravel()[self.gidx], self.Y.ravel()[self.gidx]
            self.g0 = np.asarray(prob.boundary(gx, gy), dtype=float) + np.zeros(len(self.gidx))
            self.G = sparse.csr_matrix((len(self.gidx), len(self.idx)))
        if prob.coefficients == "isotropic":
            self.op = lambda U: _isotropic_operator(U, prob.h)
        else:
            self.op = lambda U: _general_operator(U, prob.h, prob.coefficients)

    def _disk_closure(self):
        prob, h = self.prob, self.prob.h
        R = float(prob.domain.get("radius", 1.0))
        c = np.asarray(prob.domain.get("center", (0.0, 0.0)), dtype=float)
        depths = h * np.asarray(self.DEPTHS)
        if R < depths[-1] + 3 * h:
            raise DomainError(f"grid spacing {h} too coarse for a disk of radius {R}")
        P = np.stack([self.X.ravel()[self.gidx], self.Y.ravel()[self.gidx]], axis=1) - c
        r = np.linalg.norm(P, axis=1)
        n = P / r[:, None]
        B = c + R * n
        b = np.asarray(prob.boundary(B[:, 0], B[:, 1]), dtype=float) + np.zeros(len(r))
        ext = _lagrange(np.concatenate([[0.0], depths]), -(r - R))
        x0, y0 = self.X[0, 0], self.Y[0, 0]
        rows, cols, vals = [], [], []
        for k, t in enumerate(depths):
            S = B - t * n
            fx, fy = (S[:, 0] - x0) / h, (S[:, 1] - y0) / h
            ix, iy = np.floor(fx).astype(int) - 1, np.floor(fy).astype(int) - 1
            wx = _lagrange(np.arange(4), fx - ix)
            wy = _lagrange(np.arange(4), fy - iy)
            for a in range(4):
                for e in range(4):
                    p = self.pos[ix + a, iy + e]
                    if np.any(p < 0):
                        raise DomainError("interpolation stencil leaves the disk; refine the grid")
                    rows.append(np.arange(len(r)))
                    cols.append(p)
                    vals.append(ext[:, k + 1] * wx[:, a] * wy[:, e])
        G = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(len(r), len(self.idx)))
        return ext[:, 0] * b, G

    def field(self, x):
        U = np.zeros(self.X.size)
        U[self.idx] = x
        U[self.gidx] = self.g0 + self.G @ x
        return U.reshape(self.X.shape)

    def _residual_U(self, U):
        x = U.ravel()[self.idx]
        L = self.op(U).ravel()[self.idx]
        rhs = self.prob.mu - self.prob.g(self.X.ravel()[self.idx], self.Y.ravel()[self.idx], x)
        return L - rhs

    def residual(self, x):
        return self._residual_U(self.field(x))

    def jacobian(self, x):
        """Finite-difference Jacobian through the ghost closure.

        Derivatives with respect to every stencil node come from nine
        colours (3x3 stencils never share a colour); ghost columns are then
        folded back onto the unknowns with the closure matrix.
        """
        shape = self.X.shape
        U0 = self.field(x)
        r0 = self._residual_U(U0)
        active = np.concatenate([self.idx, self.gidx])
        col_of = -np.ones(self.X.size, dtype=int)
        col_of[active] = np.arange(len(active))
        AI, AJ = np.unravel_index(active, shape)
        colour = (AI % 3) * 3 + (AJ % 3)
        I, J = np.unravel_index(self.idx, shape)
        rows, cols, vals = [], [], []
        for c in range(9):
            sel = active[colour == c]
            if sel.size == 0:
                continue
            U = U0.copy().ravel()
            eps = 1e-7 * np.maximum(1.0, np.abs(U[sel]))
            U[sel] += eps
            dr = self._residual_U(U.reshape(shape)) - r0
            step = np.zeros(self.X.size)
            step[sel] = eps
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    nb = np.ravel_multi_index(((I + di) % shape[0], (J + dj) % shape[1]), shape)
                    hit = step[nb] != 0
                    k = np.flatnonzero(hit)
                    rows.append(k)
                    cols.append(col_of[nb[hit]])
                    vals.append(dr[k] / step[nb[hit]])
        n = len(self.idx)
        full = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(n, len(active)))
        return (full[:, :n] + full[:, n:] @ self.G).tocsr()

    def harmonic_guess(self):
        """Five-point Laplace solve with the ghost closure as Dirichlet data."""
        shape = self.X.shape
        n = len(self.idx)
        I, J = np.unravel_index(self.idx, shape)
        gpos = -np.ones(self.X.size, dtype=int)
        gpos[self.gidx] = np.arange(len(self.gidx))
        A = sparse.lil_matrix((n, n))
        A.setdiag(-4.0)
        A = A.tocsr()
        extra_rows, extra_cols, b = [], [], np.zeros(n)
        rows, cols = [], []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = np.ravel_multi_index((I + di, J + dj), shape)
            p = self.pos.ravel()[nb]
            unk = p >= 0
            rows.append(np.flatnonzero(unk))
            cols.append(p[unk])
            extra_rows.append(np.flatnonzero(~unk))
            extra_cols.append(gpos[nb[~unk]])
        A = A + sparse.csr_matrix((np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(n, n))
        er, ec = np.concatenate(extra_rows), np.concatenate(extra_cols)
        Sel = sparse.csr_matrix((np.ones(len(er)), (er, ec)), shape=(n, len(self.gidx)))
        A = A + Sel @ self.G
        b = -(Sel @ self.g0)
        return spsolve(A.tocsc(), b)


def solve_graph_equation(prob, initial=None, return_info=False):
    """Damped Newton solve; returns the solution as a GridField (unknowns plus ghost nodes).

    Converged when the max-norm of the discrete residual is below ``prob.tol``.
    Each Newton step is halved until the residual decreases; twenty failed
    halvings raise NonConvergenceError with the last iterate attached.
    """
    if prob.coefficients != "isotropic":
        audit = ellipticity_audit(prob.coefficients)
        if not audit["pass"]:
            raise DomainError(f"coefficient model is not uniformly elliptic on the sample: {audit}")
    disc = _Discretization(prob)
    x = disc.harmonic_guess() if initial is None else np.asarray(initial, dtype=float)[disc.inside]
    r = disc.residual(x)
    norm = float(np.abs(r).max())
    history = [norm]
    it = 0
    while norm >= prob.tol:
        if it >= prob.max_newton:
            raise NonConvergenceError(f"Newton did not converge in {it} steps (residual {norm:.3g})",
                                      last_iterate=_as_field(disc, x, prob), history=history)
        J = disc.jacobian(x)
        dx = spsolve(J.tocsc(), -r)
        if not np.all(np.isfinite(dx)):
            raise NonConvergenceError("singular Newton system", last_iterate=_as_field(disc, x, prob), history=history)
        t = 1.0
        for _ in range(21):
            xt = x + t * dx
            rt = disc.residual(xt)
            nt = float(np.abs(rt).max())
            if np.isfinite(nt) and nt < norm:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(f"no residual reduction after 20 halvings (residual {norm:.3g})",
                                      last_iterate=_as_field(disc, x, prob), history=history)
        x, r, norm = xt, rt, nt
        history.append(norm)
        it += 1
    u = _as_field(disc, x, prob)
    u.meta.update({"newton_steps": it, "residual": norm, "residual_history": history})
    return (u, history) if return_info else u


def _as_field(disc, x, prob):
    U = disc.field(x)
    return GridField(U, prob.h, (disc.X[0, 0], disc.Y[0, 0]), disc.inside, "u", "",
                     {"known": disc.inside | disc.ghost, "problem": prob.name})


# -- curvature diagnostics ------------------------------------------------------------


def _stencil_mask(u):
    """Nodes of ``u.mask`` whose full 3x3 neighbourhood holds known values."""
    known = u.meta.get("known", u.mask)
    ok = np.zeros_like(known)
    ok[1:-1, 1:-1] = True
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ok &= np.roll(np.roll(known, di, 0), dj, 1)
    return ok & u.mask


def _hessian(u):
    nx, ny = u.values.shape
    if nx < 3 or ny < 3:
        raise DomainError("need at least two cells per direction")
    mask = _stencil_mask(u)
    if not mask.any():
        raise DomainError("no node has a full stencil")
    _, _, uxx, uxy, uyy = central_derivatives(u.values, u.h)
    return uxx, uxy, uyy, mask


def gauss_curvature_field(u):
    """w = u_11 u_22 - u_12^2 from central differences on nodes with a full stencil."""
    uxx, uxy, uyy, mask = _hessian(u)
    w = np.where(mask, uxx * uyy - uxy ** 2, 0.0)
    return GridField(w, u.h, u.origin, mask, "w", "1/length^2")


@dataclass
class Verdict:
    kind: str  # all_positive | identically_zero | VIOLATION | INCONCLUSIVE
    sites: np.ndarray
    min_w: float
    max_w: float
    delta: float

    def to_dict(self):
        return {"kind": self.kind, "sites": self.sites.tolist(), "min_w": self.min_w,
                "max_w": self.max_w, "delta": self.delta}


def min_principle_diagnostic(w, delta):
    """Classify w as all_positive, identically_zero or VIOLATION(sites).

    VIOLATION lists nodes with w < delta while max w > 10 delta.  Fields that
    fit none of the three patterns are reported INCONCLUSIVE.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    vals = w.masked()
    lo, hi = float(vals.min()), float(vals.max())
    empty = np.zeros((0, 2))
    if lo > delta:
        return Verdict("all_positive", empty, lo, hi, delta)
    if float(np.abs(vals).max()) < delta:
        return Verdict("identically_zero", empty, lo, hi, delta)
    if hi > 10 * delta:
        return Verdict("VIOLATION", w.sites(w.mask & (w.values < delta)), lo, hi, delta)
    return Verdict("INCONCLUSIVE", empty, lo, hi, delta)


def uniform_convexity_audit(u, delta):
    """Minimum Hessian trace and determinant, plus near-degenerate sites.

    A site has one Hessian eigenvalue above 10 delta and the other below delta.
    """
    uxx, uxy, uyy, mask = _hessian(u)
    H = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -1)
    lam = np.linalg.eigvalsh(H)
    trace = uxx + uyy
    w = uxx * uyy - uxy ** 2
    sites = mask & (lam[..., 1] > 10 * delta) & (lam[..., 0] < delta)
    return {"min_trace": float(trace[mask].min()), "min_w": float(w[mask].min()),
            "eq_delta_sites": u.sites(sites), "eq_delta_count": int(sites.sum()),
            "checked_nodes": int(mask.sum())}


def ruled_line_check(u, tol=None, span=3):
    """Along the Hessian null direction at each node, is u affine?

    Samples u by bilinear interpolation at x + t d for |t| <= span h and
    returns the largest second difference; for a ruled graph it is at the
    level of the discretization error.
    """
    from scipy.interpolate import RegularGridInterpolator

    uxx, uxy, uyy, mask = _hessian(u)
    H = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -1)
    lam, vec = np.linalg.eigh(H)
    X, Y = u.coords
    known = u.meta.get("known", u.mask)
    vals = np.where(known, u.values, np.nan)
    interp = RegularGridInterpolator((X[:, 0], Y[0]), vals, bounds_error=False, fill_value=np.nan)
    h = u.h
    pts = np.stack([X[mask], Y[mask]], axis=1)
    d = vec[mask][:, :, 0]  # eigenvector of the smallest eigenvalue
    worst = np.zeros(len(pts))
    for k in range(1, span + 1):
        a = interp(pts + k * h * d)
        b = interp(pts - k * h * d)
        c = interp(pts)
        dev = np.abs(a + b - 2 * c)
        worst = np.fmax(worst, np.where(np.isfinite(dev), dev, 0.0))
    tol = 10 * h * h if tol is None else tol
    return {"max_deviation": float(worst.max()), "fraction_straight": float(np.mean(worst < tol)), "tol": tol}


# -- catalog of problems --------------------------------------------------------------


def paraboloid_rhs(x, y):
    r2 = x * x + y * y
    return (2 + r2) / (1 + r2) ** 1.5


def manufactured_paraboloid(h, radius=1.0):
    """u* = |x|^2 / 2 on a disk: mu = 2 and g = 2 - (2 + r^2)/(1 + r^2)^(3/2) >= 0."""
    prob = GraphProblem({"kind": "disk", "radius": radius}, h, 2.0,
                        boundary=lambda x, y: 0.5 * (x * x + y * y),
                        potential=lambda x, y, u: 2.0 - paraboloid_rhs(x, y),
                        name="manufactured-paraboloid")
    return prob, (lambda x, y: 0.5 * (x * x + y * y))


def manufactured_ruled(h):
    """u* = x_1^2 / 2 on the unit disk: a_11 = 1/(1+x_1^2)^(3/2) gives the right side."""
    prob = GraphProblem({"kind": "disk", "radius": 1.0}, h, 0.0,
                        boundary=lambda x, y: 0.5 * x * x,
                        potential=lambda x, y, u: -1.0 / (1 + x * x) ** 1.5,
                        name="manufactured-ruled")
    return prob, (lambda x, y: 0.5 * x * x)


def cap_problem(h, mu=1.5, potential=None, radius=1.0, boundary=None):
    """Isotropic cap: zero boundary data on a disk, right side mu - g."""
    from .potential import radial

    g = radial(2) if potential is None else potential
    return GraphProblem({"kind": "disk", "radius": radius}, h, mu,
                        boundary=boundary or (lambda x, y: np.zeros_like(x)), potential=g, name="cap")


def solution_error(u, exact):
    X, Y = u.coords
    return float(np.abs(u.values - exact(X, Y))[u.mask].max())


def convergence_study(make_problem, spacings):
    """Max-norm errors and observed orders for a manufactured problem across spacings."""
    import time

    rows = []
    for h in spacings:
        prob, exact = make_problem(h)
        t0 = time.perf_counter()
        u = solve_graph_equation(prob)
        rows.append({"h": float(h), "error": solution_error(u, exact), "seconds": time.perf_counter() - t0,
                     "newton_steps": u.meta["newton_steps"]})
    for a, b in zip(rows, rows[1:]):
        b["order"] = float(np.log(a["error"] / b["error"]) / np.log(a["h"] / b["h"]))
    h = np.log([r["h"] for r in rows])
    e = np.log([r["error"] for r in rows])
    fit = float(np.polyfit(h, e, 1)[0]) if len(rows) > 1 else None
    return {"rows": rows, "order": fit}
