"""Potentials g >= 0 with g(0) = 0 and convexity audits."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

CONVEXITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PotentialFunction:
    """Vectorized potential ``g(x)`` for points of shape ``(..., n)``."""

    name: str
    evaluator: Callable
    gradient_evaluator: Callable
    hessian_evaluator: Optional[Callable]
    declared_convex: bool
    coercive: bool
    zero_set_hint: Optional[dict] = None  # ball {"center", "radius"} containing {g = 0}
    params: dict = field(default_factory=dict)
    # negative controls may violate g(0) = 0
    anchored: bool = True

    def value(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.gradient_evaluator(np.asarray(x, dtype=float))

    def hessian(self, x):
        return None if self.hessian_evaluator is None else self.hessian_evaluator(np.asarray(x, dtype=float))

    @property
    def is_zero(self):
        return self.name == "zero"

    def validate(self, dim=3, radius=2.0, samples=2000, seed=0):
        """Check g(0) = 0 and g >= 0 on random points of [-radius, radius]^dim."""
        rng = np.random.default_rng(seed)
        X = rng.uniform(-radius, radius, size=(samples, dim))
        v = self.value(X)
        problems = []
        if self.anchored and abs(float(self.value(np.zeros(dim)))) > 1e-12:
            problems.append("g(0) != 0")
        if np.any(v < -1e-12):
            problems.append("g takes negative values")
        return problems

    def to_dict(self):
        return {"kind": self.name, "params": dict(self.params)}


def eval_potential(g, x, order=0):
    """g(x) and, for ``order`` 1 or 2, its gradient and Hessian as a tuple."""
    if order not in (0, 1, 2):
        raise DomainError("order must be 0, 1 or 2")
    v = g.value(x)
    if not np.all(np.isfinite(v)):
        raise DomainError("potential is infinite at the requested point")
    out = [v]
    if order >= 1:
        out.append(g.gradient(x))
    if order == 2:
        out.append(g.hessian(x))
    return out[0] if order == 0 else tuple(out)


# -- catalog -------------------------------------------------------------------


def _eye_like(x):
    return np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],))


def zero():
    return PotentialFunction(
        "zero",
        lambda x: np.zeros(x.shape[:-1]),
        lambda x: np.zeros(x.shape),
        lambda x: np.zeros(x.shape + (x.shape[-1],)),
        True, False)


def radial(power=2, scale=1.0):
    """g(x) = scale |x|^power for power in {1, 2, 4}."""
    power = int(power)
    if power not in (1, 2, 4):
        raise DomainError("radial power must be 1, 2 or 4")
    c = float(scale)
    if c <= 0:
        raise DomainError("scale must be positive")

    def val(x):
        return c * np.linalg.norm(x, axis=-1) ** power

    def grad(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        if power == 1:
            return c * x / np.where(r > 0, r, 1.0)
        return c * power * r ** (power - 2) * x

    if power == 1:
        hess = None
    elif power == 2:
        def hess(x):
            return 2 * c * _eye_like(x).copy()
    elif power == 4:
        def hess(x):
            r2 = np.sum(x * x, axis=-1)[..., None, None]
            return c * (4 * r2 * _eye_like(x) + 8 * x[..., :, None] * x[..., None, :])

    names = {1: "radial_linear", 2: "radial_quadratic", 4: "radial_quartic"}
    return PotentialFunction(names[power], val, grad, hess, True, True,
                             {"center": "origin", "radius": 0.0}, {"power": power, "scale": c})


def gravitational(rho=1.0):
    """g(x) = rho max(x_n, 0): convex, not coercive."""
    rho = float(rho)
    if rho < 0:
        raise DomainError("density must be nonnegative")

    def val(x):
        return rho * np.maximum(x[..., -1], 0.0)

    def grad(x):
        out = np.zeros(x.shape)
        out[..., -1] = rho * (x[..., -1] > 0)
        return out

    def hess(x):
        return np.zeros(x.shape + (x.shape[-1],))

    return PotentialFunction("gravitational", val, grad, hess, True, False, None, {"rho": rho})


def flat_bottom(radius=0.5, stiffness=1.0):
    """g(x) = k max(|x| - R0, 0)^2: zero on the ball B_R0, convex, coercive."""
    R0, k = float(radius), float(stiffness)
    if R0 < 0 or k <= 0:
        raise DomainError("need radius >= 0 and stiffness > 0")

    def val(x):
        return k * np.maximum(np.linalg.norm(x, axis=-1) - R0, 0.0) ** 2

    def grad(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        s = np.maximum(r - R0, 0.0)
        return 2 * k * s * x / np.where(r > 0, r, 1.0)

    def hess(x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        safe = np.where(r > 0, r, 1.0)
        u = x[..., :, None] / safe
        P = u * np.swapaxes(u, -1, -2)
        s = np.maximum(r - R0, 0.0)
        outside = (r > R0).astype(float)
        return 2 * k * outside * (P + s / safe * (_eye_like(x) - P))

    return PotentialFunction("flat_bottom", val, grad, hess, True, True,
                             {"center": "origin", "radius": R0}, {"radius": R0, "stiffness": k})


def double_well(separation=2.0, dim=3, scale=1.0):
    """g(x) = c min(|x - a|^2, |x + a|^2) with a = separation e_1 (non-convex control).

    g(0) = c |a|^2 != 0, so this potential is exempt from the anchoring check.
    """
    a = np.zeros(int(dim))
    a[0] = float(separation)
    c = float(scale)

    def val(x):
        return c * np.minimum(np.sum((x - a) ** 2, -1), np.sum((x + a) ** 2, -1))

    def grad(x):
        right = np.sum((x - a) ** 2, -1) <= np.sum((x + a) ** 2, -1)
        return 2 * c * np.where(right[..., None], x - a, x + a)

    def hess(x):
        return 2 * c * _eye_like(x).copy()

    return PotentialFunction("double_well", val, grad, hess, False, True, None,
                             {"separation": float(separation), "dim": int(dim), "scale": c}, anchored=False)


CATALOG = {
    "zero": lambda: zero(),
    "radial": radial,
    "radial_linear": lambda scale=1.0: radial(1, scale),
    "radial_quadratic": lambda scale=1.0: radial(2, scale),
    "radial_quartic": lambda scale=1.0: radial(4, scale),
    "gravitational": gravitational,
    "flat_bottom": flat_bottom,
    "double_well": double_well,
}
ALIASES = {"radial-quadratic": "radial_quadratic", "radial-linear": "radial_linear",
           "radial-quartic": "radial_quartic", "flat-bottom": "flat_bottom", "double-well": "double_well"}


def potential_from_config(spec):
    """Build a potential from ``{"kind": ..., "params": {...}}``."""
    kind = ALIASES.get(spec.get("kind"), spec.get("kind"))
    if kind not in CATALOG:
        raise DomainError(f"unknown potential kind {spec.get('kind')!r}; choose from {sorted(CATALOG)}")
    return CATALOG[kind](**spec.get("params", {}))


# -- audits ----------------------------------------------------------------------


def _box_samples(box, samples, rng):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    return rng.uniform(lo, hi, size=(int(samples), lo.size))


def check_convexity(g, box, samples=1000, seed=0):
    """Sample Hessian eigenvalues on ``box = (lo, hi)``; fall back to midpoint tests.

    Without a Hessian evaluator ``samples`` random pairs are tested for
    g((x+y)/2) <= (g(x)+g(y))/2; the report records the method used.
    """
    if samples < 10:
        raise DomainError("need at least 10 samples")
    rng = np.random.default_rng(seed)
    X = _box_samples(box, samples, rng)
    if g.hessian_evaluator is not None:
        eig = np.linalg.eigvalsh(g.hessian(X))
        m = float(eig.min())
        return {"method": "hessian", "min_hessian_eig": m, "pass": m >= -CONVEXITY_TOL}
    Y = _box_samples(box, samples, rng)
    gap = 0.5 * (g.value(X) + g.value(Y)) - g.value(0.5 * (X + Y))
    scale = 1.0 + np.abs(g.value(X)) + np.abs(g.value(Y))
    m = float((gap / scale).min())
    return {"method": "midpoint", "min_midpoint_gap": m, "min_hessian_eig": None, "pass": m >= -CONVEXITY_TOL}


def check_sublevel_convexity(g, levels, box, samples=2000, seed=0):
    """For each level t, test midpoint closure of {g < t} on random pairs."""
    if len(levels) == 0:
        raise DomainError("levels must be nonempty")
    rng = np.random.default_rng(seed)
    X = _box_samples(box, samples, rng)
    gX = g.value(X)
    out = []
    for t in levels:
        inside = X[gX < t]
        if len(inside) < 2:
            out.append({"level": float(t), "pass": True, "vacuous": True, "violations": 0})
            continue
        i = rng.integers(0, len(inside), size=samples)
        j = rng.integers(0, len(inside), size=samples)
        mid = 0.5 * (inside[i] + inside[j])
        bad = int(np.sum(g.value(mid) >= t))
        out.append({"level": float(t), "pass": bad == 0, "vacuous": False, "violations": bad})
    return out


def sup_on_ball(g, radius, dim, samples=20000, seed=0, safety=2.0):
    """Safety factor times the sampled maximum of g on the closed ball B_radius."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(samples, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    shell = X * radius
    r = radius * rng.random(samples) ** (1.0 / dim)
    pts = np.concatenate([shell, X * r[:, None], np.zeros((1, dim))])
    return safety * float(g.value(pts).max())
