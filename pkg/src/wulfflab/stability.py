"""Stability modulus, mass scaling, energy-gap bound and mass sweeps.

The modulus w_m(eps) is estimated from above: competitors of mass m are
generated from deterministic families around the minimizer, filtered by
their translation-aligned asymmetry |E Delta (E_m + t)| / m >= eps, and the
smallest energy gap among the survivors is reported.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .energy import potential_energy, surface_energy
from .errors import ConstraintInfeasibleError, DomainError, PreconditionError
from .optimizer import MinimizeOptions, minimize_at_mass
from .potential import sup_on_ball
from .shapes import align, convexity_defect, moments, rescale_to_mass, symmetric_difference

log = logging.getLogger(__name__)

FAMILIES = ("radial_bump", "ellipsoidal", "translated_overlap")


@dataclass
class ModulusEstimate:
    mass: float
    epsilon: float
    value: float
    competitor_count: int
    checked_count: int
    competitor_families: list
    minimizer_energy: float
    best_family: str
    best_asymmetry: float
    kind: str = "upper_bound"

    def to_dict(self):
        return asdict(self)


@dataclass
class SweepResult:
    masses: list
    rows: list
    detected_threshold: Optional[float]
    ratio_series: list = field(default_factory=list)
    gamma: Optional[float] = None
    flagged: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _energy(E, f, g):
    return surface_energy(E, f) + potential_energy(E, g)


def _options(mass, dim, options):
    kw = dict(options or {})
    kw.setdefault("dim", dim)
    return MinimizeOptions(mass=mass, **kw)


def best_minimizer(f, g, mass, options=None):
    """Lowest-energy converged result of a multi-start run at ``mass``."""
    results = minimize_at_mass(f, g, _options(mass, f.dimension, options))
    good = [r for r in results if r.converged]
    if not good:
        raise PreconditionError(f"no start converged at mass {mass}: "
                                f"{[(r.start_label, r.stop_reason) for r in results]}")
    return good[0]


# -- competitors -------------------------------------------------------------------------


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _directions(E):
    t = E.topology
    return t.grid_directions if t.dim == 3 else t.directions


def competitor(E, k, seed=0):
    """Competitor number ``k`` around the radial shape E, rescaled to |E|.

    Families cycle with k mod 3; the deformation size is relative, so the
    same k gives geometrically similar competitors at every mass.
    """
    rng = np.random.default_rng([seed, k])
    family = FAMILIES[k % 3]
    U = _directions(E)
    r0 = E.radii
    dim = E.dim
    if family == "radial_bump":
        r = r0.copy()
        for _ in range(int(rng.integers(1, 4))):
            d = _unit(rng, dim)
            width = rng.uniform(0.3, 1.0)
            amp = _log_uniform(rng, 0.005, 0.5) * rng.choice([-1.0, 1.0])
            ang = np.arccos(np.clip(U @ d, -1, 1))
            r = r * (1 + amp * np.exp(-ang ** 2 / (2 * width ** 2)))
    elif family == "ellipsoidal":
        # volume-preserving linear map A = Q diag(s) Q^T about the center
        logs = rng.normal(size=dim)
        logs -= logs.mean()
        logs *= _log_uniform(rng, 0.005, 0.5) / max(np.abs(logs).max(), 1e-12)
        Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        Ainv = Q @ np.diag(np.exp(-logs)) @ Q.T
        V = U @ Ainv.T
        nv = np.linalg.norm(V, axis=-1)
        r = E.radius_at(V / nv[..., None]) / nv
    else:
        # union of E and a translate of E, as a radial function about the center
        t = _unit(rng, dim) * _log_uniform(rng, 0.005, 0.6) * float(r0.min())
        lo = np.zeros(U.shape[:-1])
        hi = np.full(U.shape[:-1], float(r0.max()) + np.linalg.norm(t))
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            P = mid[..., None] * U - t
            rho = np.linalg.norm(P, axis=-1)
            inside = rho <= E.radius_at(P / rho[..., None])
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        r = np.maximum(r0, lo)
    shape = E.with_radii(r)
    return rescale_to_mass(shape, E.volume(), about="center"), family


def asymmetry(E_m, C, epsilon, resolution=32, final_resolution=64):
    """Translation-aligned |E_m Delta C| / m and whether C is eps-far.

    The search stops as soon as a translate closer than eps is found, so the
    admissibility decision is monotone in eps.
    """
    m = E_m.volume()
    _, res, info = align(E_m, C, group="translations", resolution=resolution,
                         final_resolution=final_resolution, stop_below=epsilon * m,
                         return_info=True, final_on_stop=False)
    admissible = (not info["stopped"]) and res >= epsilon * m
    return res / m, admissible


def modulus_estimate(f, g, m, epsilon, budget=200, minimizer=None, options=None, seed=0,
                     align_resolution=32):
    """Upper estimate of w_m(eps) over ``budget`` family competitors.

    Competitors are ranked by energy gap and the asymmetry filter runs in
    that order, so the first admissible one gives the minimum.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    if budget < 1:
        raise DomainError("budget must be positive")
    res = minimizer or best_minimizer(f, g, m, options)
    if not res.converged:
        raise PreconditionError("minimizer did not converge")
    E_m = res.shape
    e0 = _energy(E_m, f, g)
    cands = []
    for k in range(int(budget)):
        C, fam = competitor(E_m, k, seed)
        cands.append((_energy(C, f, g) - e0, k, fam, C))
    cands.sort(key=lambda c: (c[0], c[1]))
    checked = 0
    for gap, k, fam, C in cands:
        checked += 1
        asym, ok = asymmetry(E_m, C, epsilon, align_resolution)
        if ok:
            return ModulusEstimate(float(m), float(epsilon), max(float(gap), 0.0), int(budget), checked,
                                   list(FAMILIES), float(e0), fam, float(asym))
    raise ConstraintInfeasibleError(f"no competitor out of {budget} has asymmetry >= {epsilon}")


def modulus_mass_exponent(f, g, epsilon, masses, budget=200, options=None, seed=0, align_resolution=32):
    """Log-log fit of modulus estimates against mass; compare the slope with (n-1)/n."""
    masses = sorted(float(m) for m in masses)
    if len(masses) < 4:
        raise DomainError("need at least four masses")
    est, excluded = [], []
    for m in masses:
        e = modulus_estimate(f, g, m, epsilon, budget, options=options, seed=seed,
                             align_resolution=align_resolution)
        if e.value > 0:
            est.append(e)
        else:
            log.warning("modulus estimate at mass %g is not positive; excluded", m)
            excluded.append(m)
    if len(est) < 2:
        raise DomainError("fewer than two positive estimates")
    x = np.log([e.mass for e in est])
    y = np.log([e.value for e in est])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    n = f.dimension
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "expected": (n - 1) / n,
            "estimates": [e.to_dict() for e in est], "excluded": excluded}


# -- energy gap ---------------------------------------------------------------------------


def scaling_gap_check(f, g, mass_pairs, options=None, minimizers=None):
    """gap = |E(E_M) - E(E_m)| against gamma_1 (M^((n-1)/n) - m^((n-1)/n)).

    gamma_1 = 2 F(E_M) / M^((n-1)/n) is calibrated once, at the largest M.
    ``minimizers`` may map masses to precomputed results.
    """
    n = f.dimension
    p = (n - 1) / n
    cache = dict(minimizers or {})

    def get(mass):
        if mass not in cache:
            cache[mass] = best_minimizer(f, g, mass, options)
        return cache[mass]

    pairs = [(float(a), float(b)) for a, b in mass_pairs]
    for a, b in pairs:
        if a > b:
            raise DomainError(f"pair ({a}, {b}) needs m <= M")
    M_cal = max(b for _, b in pairs)
    E_cal = get(M_cal).shape
    gamma1 = 2 * surface_energy(E_cal, f) / M_cal ** p
    rows = []
    for a, b in pairs:
        if a == b:
            rows.append({"m": a, "M": b, "gap": 0.0, "bound": 0.0, "ratio": 0.0, "gamma1": gamma1})
            continue
        gap = abs(get(b).report.total - get(a).report.total)
        bound = gamma1 * (b ** p - a ** p)
        rows.append({"m": a, "M": b, "gap": gap, "bound": bound, "ratio": gap / bound, "gamma1": gamma1})
    return rows


# -- sweeps --------------------------------------------------------------------------------


def _radial_rescale(E, mass):
    return rescale_to_mass(E, mass, about="center")


def mass_sweep(f, g, masses, epsilon=None, defect_tol=1e-2, agreement_tol=0.01, options=None,
               budget=50, seed=0):
    """Multi-start minimization on an increasing mass grid.

    The detected threshold is the smallest mass whose best converged result
    has convexity defect above ``defect_tol`` or whose converged starts
    disagree in energy by more than ``agreement_tol``.  Masses where no start
    converges are flagged and skipped.
    """
    masses = [float(m) for m in masses]
    if any(b <= a for a, b in zip(masses, masses[1:])):
        raise DomainError("mass grid must be strictly increasing")
    rows, flagged, best = [], [], {}
    prev = None
    threshold = None
    for m in masses:
        results = minimize_at_mass(f, g, _options(m, f.dimension, options))
        good = [r for r in results if r.converged]
        row = {"mass": m, "starts": len(results), "converged_starts": len(good)}
        if not good:
            flagged.append(m)
            row.update({"energy": None, "defect": None, "residual": None, "spread": None,
                        "alignment_to_previous": None})
            rows.append(row)
            continue
        b = good[0]
        best[m] = b
        energies = np.array([r.report.total for r in good])
        spread = float((energies.max() - energies.min()) / abs(energies.min()))
        defect = convexity_defect(b.shape)
        align_prev = None
        if prev is not None:
            moved = _radial_rescale(prev.shape, m)
            _, resid = align(b.shape, moved, group="translations", resolution=32)
            align_prev = resid / m
        prev = b
        row.update({"energy": b.report.total, "defect": defect, "residual": b.report.relative_residual,
                    "spread": spread, "alignment_to_previous": align_prev, "best_start": b.start_label})
        rows.append(row)
        if threshold is None and (defect > defect_tol or spread > agreement_tol):
            threshold = m
    ratios, gamma = [], None
    if threshold is not None and epsilon is not None:
        below = [m for m in masses if m < threshold and m in best]
        if threshold in best and below:
            n = f.dimension
            gamma = 2 * surface_energy(best[threshold].shape, f) / threshold ** ((n - 1) / n)
            for m in below:
                try:
                    w = modulus_estimate(f, g, m, epsilon, budget, minimizer=best[m], seed=seed).value
                except ConstraintInfeasibleError:
                    continue
                if w > 0:
                    ratios.append({"mass": m, "ratio": gamma * (threshold - m) / w})
    return SweepResult(masses, rows, threshold, ratios, gamma, flagged)


def translation_invariance_bound(f, g, masses, options=None, radius=None, C=None):
    """Translation-aligned distance between two minimizers from distinct starts.

    rhs = 2 (C sup_{B_R} g)^(1/2) m^(1 + 1/(2n)) with C calibrated at the
    smallest mass so that the bound is tight there.  A run passes when lhs
    is within rhs plus the O(h) error of the symmetric-difference estimate
    and the resolution of the translation search.
    """
    scalar = np.isscalar(masses)
    masses = sorted([float(masses)] if scalar else [float(m) for m in masses])
    n = f.dimension
    rows = []
    for m in masses:
        opts = _options(m, n, options)
        results = [r for r in minimize_at_mass(f, g, opts) if r.converged]
        if len(results) < 2:
            raise PreconditionError(f"need two converged starts at mass {m}")
        A, B = results[0].shape, results[1].shape
        _, lhs = align(A, B, group="translations", resolution=40)
        _, err = symmetric_difference(A, B, return_error=True)
        # Nelder-Mead stops at xatol = 1e-4 scale, fatol = 1e-7 |E|
        scale = np.sqrt(np.trace(moments(B)[2]))
        err += 0.5 * (A.surface_area() + B.surface_area()) * 1e-4 * scale + 1e-7 * m
        R = opts.confinement_radius if radius is None else radius
        sup_g = 0.0 if g is None or g.is_zero else sup_on_ball(g, R, n)
        rows.append({"mass": m, "lhs": float(lhs), "sup_g": sup_g, "tolerance": float(err),
                     "starts": (results[0].start_label, results[1].start_label),
                     "centers": (np.asarray(A.center).tolist(), np.asarray(B.center).tolist())})
    if C is None:
        r0 = rows[0]
        scale0 = 4 * r0["sup_g"] * r0["mass"] ** (2 + 1.0 / n)
        C = r0["lhs"] ** 2 / scale0 if scale0 > 0 else 0.0
    for row in rows:
        rhs = 2 * np.sqrt(C * row["sup_g"]) * row["mass"] ** (1 + 1.0 / (2 * n))
        row.update({"C": C, "rhs": float(rhs), "pass": bool(row["lhs"] <= rhs + row["tolerance"])})
    return rows[0] if scalar else rows
