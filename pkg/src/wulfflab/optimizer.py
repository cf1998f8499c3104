"""Mass-constrained minimization of the free energy over radial shapes.

The unknowns are the free radii of a :class:`StarShape` (3D) or
:class:`RadialPolygon` (2D) around a fixed center.  The mass constraint is
handled by projection: the objective is Phi(r) = E(s(r) r) with
s = (m / |r|)^(1/n), so every evaluated shape has volume m exactly.  Descent
uses a limited-memory quasi-Newton direction preconditioned by a Sobolev
metric on the direction mesh, with Armijo backtracking.
"""

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import splu

from .anisotropy import wulff_radius
from .energy import EnergyReport, first_variation_residual, radial_energy
from .errors import DomainError, PreconditionError
from .shapes import RadialPolygon, StarShape
from .shapes.core import circle_topology, star_topology
from .shapes.ops import convexity_defect, moments

log = logging.getLogger(__name__)

NAMED_STARTS = ("wulff", "ball")


@dataclass
class MinimizeOptions:
    mass: float
    dim: int = 3
    resolution: object = None
    max_iters: int = 400
    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    residual_tol: float = 0.03
    stationarity_tol: float = 1e-6
    smoothing_weight: float = 1.0
    starts: list = field(default_factory=lambda: ["wulff", "ball", "random_3"])
    confinement_radius: Optional[float] = None
    center: tuple = None
    center_spread: float = 0.0
    random_amplitude: float = 0.3
    seed: int = 0
    memory: int = 10
    defect_every: int = 10
    history_dir: Optional[str] = None
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if not self.residual_tol > 0:
            raise DomainError("residual_tol must be positive")
        if self.dim not in (2, 3):
            raise DomainError("dim must be 2 or 3")
        if self.resolution is None:
            self.resolution = (32, 64) if self.dim == 3 else 128
        if self.center is None:
            self.center = (0.0,) * self.dim
        if self.confinement_radius is None:
            self.confinement_radius = 4.0 * self.equivalent_radius + float(np.linalg.norm(self.center))
        if not self.confinement_radius > 0:
            raise DomainError("confinement radius must be positive")
        if not 0 < self.shrink < 1 or self.smoothing_weight < 0:
            raise DomainError("need shrink in (0,1) and smoothing_weight >= 0")

    @property
    def equivalent_radius(self):
        unit = 4.0 * np.pi / 3.0 if self.dim == 3 else np.pi
        return (self.mass / unit) ** (1.0 / self.dim)

    def expanded_starts(self):
        out = []
        for s in self.starts:
            if isinstance(s, str) and s.startswith("random_"):
                out += [f"random{k}" for k in range(int(s.split("_")[1]))]
            else:
                out.append(s)
        return out


@dataclass
class MinimizerResult:
    shape: object
    report: EnergyReport
    iterations: int
    converged: bool
    start_label: str
    history: list
    defect: float
    mass_error: float
    stop_reason: str
    confinement_active: bool = False
    restarts: int = 0
    diagnostics: list = field(default_factory=list)

    def to_dict(self):
        return {"start": self.start_label, "converged": self.converged, "iterations": self.iterations,
                "energy": self.report.total, "defect": self.defect, "mass_error": self.mass_error,
                "stop_reason": self.stop_reason, "confinement_active": self.confinement_active,
                "restarts": self.restarts, "report": self.report.to_dict(), "diagnostics": self.diagnostics}


def _topology(opts):
    if opts.dim == 3:
        return star_topology(*tuple(opts.resolution))
    return circle_topology(int(opts.resolution))


def _make_shape(opts, radii, center):
    return StarShape(radii, center) if opts.dim == 3 else RadialPolygon(radii, center)


def _grid_directions(topo):
    return topo.grid_directions if topo.dim == 3 else topo.directions


def initial_radii(label, f, opts):
    """Radii and center of a named start, before projection to mass m."""
    topo = _topology(opts)
    U = _grid_directions(topo)
    center = np.asarray(opts.center, dtype=float)
    if label == "wulff":
        return wulff_radius(f, U), center
    if label == "ball":
        return np.ones(topo.grid_shape), center
    if label.startswith("random"):
        k = int(label[len("random"):] or 0)
        rng = np.random.default_rng([opts.seed, k])
        r = np.ones(topo.grid_shape)
        # a few sharp bumps and dents make non-convex, non-symmetric starts
        for _ in range(4):
            a = rng.normal(size=opts.dim)
            a /= np.linalg.norm(a)
            width = rng.uniform(0.25, 0.6)
            amp = opts.random_amplitude * rng.uniform(-0.6, 1.0)
            r = r + amp * np.exp(-(1 - U @ a) / width ** 2)
        r = np.maximum(r, 0.3)
        if opts.center_spread > 0:
            center = center + opts.center_spread * opts.equivalent_radius * rng.uniform(-1, 1, opts.dim)
        return r, center
    raise DomainError(f"unknown start {label!r}")


class _Problem:
    """Projected objective Phi and its gradient over free radii."""

    def __init__(self, f, g, opts, center):
        self.f, self.g, self.opts = f, g, opts
        self.topo = _topology(opts)
        self.center = np.asarray(center, dtype=float)
        self.n = opts.dim
        R = self.topo.expand_matrix
        K, Mass = self.topo.sobolev_matrices
        P = (R.T @ (Mass + opts.smoothing_weight * K) @ R).tocsc()
        self.precond = splu(P)
        self.R = R

    def project(self, r):
        vol = self.topo.volume(self.topo.expand(r))
        return r * (self.opts.mass / vol) ** (1.0 / self.n)

    def evaluate(self, r):
        """Phi, grad Phi, discrete residual and the projected radii."""
        topo = self.topo
        rv = topo.expand(r)
        vol = topo.volume(rv)
        if not np.isfinite(vol) or vol <= 0:
            return np.inf, None, None, None
        s = (self.opts.mass / vol) ** (1.0 / self.n)
        rt = s * r
        rvt = s * rv
        F, G, V, dF, dG, dV = radial_energy(topo, rvt, self.center, self.f, self.g)
        gE = topo.reduce(dF + dG).reshape(r.shape)
        gV = topo.reduce(dV).reshape(r.shape)
        mu = float(np.sum(gE * rt) / np.sum(gV * rt))
        gPhi_t = gE - mu * gV  # gradient at the projected point, where s = 1
        # chain rule back to the unprojected radii
        gPhi = s * gE - float(np.sum(gE * rt)) / (self.n * vol) * topo.reduce(topo.volume_grad(rv)).reshape(r.shape)
        resid = float(np.abs(gPhi_t / gV).max() / abs(mu)) if mu != 0 else np.inf
        return F + G, gPhi, resid, rt

    def apply_inverse_metric(self, v):
        return self.precond.solve(v.ravel()).reshape(v.shape)


def _minimize_one(label, f, g, opts):
    r0, center = initial_radii(label, f, opts)
    step0 = opts.initial_step
    restarts = 0
    diagnostics = []
    while True:
        out = _descend(label, r0, center, f, g, opts, step0)
        if out["stop_reason"] != "degenerate" or restarts >= 3:
            break
        restarts += 1
        step0 *= 0.5
        moved = _recenter(out["shape"], opts)
        if moved is not None:
            r0, center = moved
        diagnostics.append(f"restart {restarts}: degeneration, recentered at {np.round(center, 6).tolist()}, "
                           f"initial step halved to {step0:g}")
        log.info("start %s: restart %d after degeneration", label, restarts)
    shape = out["shape"]
    report = first_variation_residual(shape, f, g)
    defect = convexity_defect(shape)
    mass_error = abs(shape.volume() - opts.mass) / opts.mass
    rel = report.relative_residual
    converged = bool(out["stop_reason"] in ("stationary", "stagnated") and rel is not None
                     and rel <= opts.residual_tol and mass_error <= 1e-3)
    history = out["history"]
    if history and history[-1][3] is None:
        history[-1] = history[-1][:3] + (defect,)
    result = MinimizerResult(shape, report, out["iterations"], converged, label, history, defect,
                             mass_error, out["stop_reason"], out["confined"], restarts,
                             diagnostics + out["diagnostics"])
    if opts.history_dir:
        write_history(os.path.join(opts.history_dir, f"history_{label}.csv"), history)
    return result


def _recenter(shape, opts):
    """Radii of ``shape`` about its centroid, by bisection along each ray.

    A droplet drifting away from its star center squeezes the radii on one
    side toward zero; restarting about the centroid removes that artefact.
    Returns None when the shape is not star-shaped about the centroid.
    """
    _, c, _ = moments(shape)
    if not shape.contains(c[None])[0]:
        return None
    U = _grid_directions(_topology(opts))
    flat = U.reshape(-1, opts.dim)
    lo = np.zeros(len(flat))
    hi = np.full(len(flat), 2.0 * float(np.max(shape.radii)) + float(np.linalg.norm(c - shape.center)))
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        inside = shape.contains(c + mid[:, None] * flat)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    r = 0.5 * (lo + hi)
    # a ray that leaves and re-enters means the centroid is not a star center
    probe = np.linspace(0.05, 0.95, 12)
    pts = c + (r[:, None, None] * probe[None, :, None]) * flat[:, None, :]
    if not shape.contains(pts.reshape(-1, opts.dim)).all():
        return None
    return r.reshape(U.shape[:-1]), c


def _descend(label, r0, center, f, g, opts, step0):
    prob = _Problem(f, g, opts, center)
    r = prob.project(np.asarray(r0, dtype=float))
    E, grad, resid, _ = prob.evaluate(r)
    history = []
    diagnostics = []
    S, Y = [], []
    stop = "max_iters"
    confined = False
    it = 0
    stall = 0

    def defect_of(rr, force=False):
        if force or it % opts.defect_every == 0:
            return float(convexity_defect(_make_shape(opts, rr, center)))
        return None

    history.append((0, E, resid, defect_of(r, True)))
    for it in range(1, opts.max_iters + 1):
        if resid <= opts.stationarity_tol:
            stop = "stationary"
            it -= 1
            break
        # two-loop recursion with the Sobolev metric as initial inverse Hessian
        q = grad.copy()
        alphas = []
        for s_k, y_k in reversed(list(zip(S, Y))):
            rho = 1.0 / np.sum(y_k * s_k)
            a = rho * np.sum(s_k * q)
            alphas.append((a, rho, s_k, y_k))
            q = q - a * y_k
        z = prob.apply_inverse_metric(q)
        if S:
            sy, yy = np.sum(S[-1] * Y[-1]), np.sum(Y[-1] * prob.apply_inverse_metric(Y[-1]))
            z = z * (sy / yy)
        else:
            # first step: move at most 10% of the mean radius
            z = z * min(1.0, 0.1 * r.mean() / max(np.abs(z).max(), 1e-300))
        for a, rho, s_k, y_k in reversed(alphas):
            b = rho * np.sum(y_k * z)
            z = z + (a - b) * s_k
        d = -z
        slope = float(np.sum(grad * d))
        if slope >= 0:
            S, Y = [], []
            d = -prob.apply_inverse_metric(grad)
            slope = float(np.sum(grad * d))
        t = step0
        accepted = False
        degenerate = False
        for _ in range(40):
            trial = r + t * d
            if np.all(trial > 1e-3 * r.mean()) and np.all(np.isfinite(trial)):
                Et, gt, rt_resid, rt = prob.evaluate(trial)
                if Et <= E + opts.sufficient_decrease * t * slope:
                    accepted = True
                    break
            else:
                degenerate = True
            t *= opts.shrink
        if not accepted:
            stop = "degenerate" if degenerate and t < 1e-8 else "stagnated"
            it -= 1
            break
        # continue from the projected point (exact mass); Phi is unchanged there
        s_vec = rt - r
        r_new = rt
        Et, gt, rt_resid, _ = prob.evaluate(r_new)
        y_vec = gt - grad
        if np.sum(s_vec * y_vec) > 1e-12 * np.sqrt(np.sum(s_vec ** 2) * np.sum(y_vec ** 2)):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        decrease = E - Et
        r, E, grad, resid = r_new, Et, gt, rt_resid
        reach = float(np.max(prob.topo.expand(r))) + float(np.linalg.norm(center))
        history.append((it, E, resid, defect_of(r)))
        if reach > opts.confinement_radius:
            confined = True
            stop = "confinement"
            diagnostics.append(f"iterate left B_R at iteration {it}: reach {reach:.4g} > R {opts.confinement_radius:.4g}")
            break
        stall = stall + 1 if decrease <= 1e-14 * max(abs(E), 1.0) else 0
        if stall >= 5:
            stop = "stagnated"
            break
    shape = _make_shape(opts, r, center)
    return {"shape": shape, "history": history, "iterations": it, "stop_reason": stop,
            "confined": confined, "diagnostics": diagnostics}


def _threads(opts):
    if opts.threads is not None:
        return max(1, int(opts.threads))
    try:
        return max(1, int(os.environ.get("WULFFLAB_THREADS", "1")))
    except ValueError:
        return 1


def minimize_at_mass(f, g, opts):
    """Multi-start minimization; results sorted best-first by (energy, start label)."""
    if f.dimension != opts.dim:
        raise DomainError(f"tension dimension {f.dimension} differs from options dim {opts.dim}")
    labels = opts.expanded_starts()
    if g is not None and not g.is_zero:
        probe = np.random.default_rng(0).normal(size=(512, opts.dim))
        probe *= opts.confinement_radius / np.linalg.norm(probe, axis=1, keepdims=True)
        if not np.all(np.isfinite(g.value(probe))):
            raise PreconditionError("potential is not finite on the confinement ball")
    if opts.history_dir:
        os.makedirs(opts.history_dir, exist_ok=True)
    workers = _threads(opts)
    if workers > 1 and len(labels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _minimize_one(s, f, g, opts), labels))
    else:
        results = [_minimize_one(s, f, g, opts) for s in labels]
    return sorted(results, key=lambda res: (res.report.total, res.start_label))


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "energy", "residual", "defect"])
        for it, e, res, dfc in history:
            w.writerow([it, repr(float(e)), repr(float(res)), "" if dfc is None else repr(float(dfc))])


# -- certification -------------------------------------------------------------------


def certify_minimizer(result, f, g, perturbations=20, magnitude=1e-2, tol=None, seed=0):
    """Criticality from the residual; local-minimality probe by random perturbations.

    Each perturbation multiplies the radii by 1 + magnitude * phi with phi a
    random low-degree field (including translation-like modes), followed by
    rescaling to the same mass.
    """
    if not result.converged:
        raise PreconditionError("certify_minimizer needs a converged result")
    tol = 0.03 if tol is None else tol
    shape = result.shape
    is_critical = bool(result.report.relative_residual <= tol)
    topo = shape.topology
    U = _grid_directions(topo)
    mass = shape.volume()
    rng = np.random.default_rng(seed)
    base = result.report.total
    worst = np.inf
    for _ in range(perturbations):
        A = rng.normal(size=(shape.dim, shape.dim))
        b = rng.normal(size=shape.dim)
        phi = U @ b + np.einsum("...i,ij,...j->...", U, A, U)
        phi /= np.abs(phi).max()
        r = shape.radii * (1 + magnitude * phi)
        cand = type(shape)(r, shape.center)
        cand = type(shape)(r * (mass / cand.volume()) ** (1 / shape.dim), shape.center)
        F, G, _ = radial_energy(topo, cand.vertex_radii, cand.center, f, g, grad=False)
        worst = min(worst, F + G - base)
    return {"is_critical": is_critical, "is_local_min_probe": bool(worst > 0),
            "min_energy_increase": float(worst), "perturbations": int(perturbations)}
