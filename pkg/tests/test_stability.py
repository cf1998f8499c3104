import logging

import numpy as np
import pytest

from wulfflab import stability as S
from wulfflab.anisotropy import ellipsoidal, euclidean, wulff_shape
from wulfflab.errors import ConstraintInfeasibleError, DomainError
from wulfflab.potential import double_well, flat_bottom, radial
from wulfflab.shapes import ball, rescale_to_mass, symmetric_difference

F2, F3 = euclidean(2), euclidean(3)
OPT2 = {"resolution": 64, "starts": ["ball", "random_2"]}
OPT3 = {"resolution": (16, 32), "starts": ["ball"]}


@pytest.fixture(scope="module")
def ball_minimizer_3d():
    return S.best_minimizer(F3, None, 4 * np.pi / 3, OPT3)


@pytest.fixture(scope="module")
def disk_minimizer():
    return S.best_minimizer(F2, None, np.pi, OPT2)


def test_modulus_of_unit_ball_is_small_and_positive(ball_minimizer_3d):
    est = S.modulus_estimate(F3, None, 4 * np.pi / 3, 0.1, budget=60, minimizer=ball_minimizer_3d)
    assert est.value > 0
    assert est.value / (4 * np.pi) < 0.05
    assert est.kind == "upper_bound"
    assert est.best_asymmetry >= 0.1
    assert set(est.competitor_families) == set(S.FAMILIES)


def test_modulus_is_monotone_in_epsilon(ball_minimizer_3d):
    values = [S.modulus_estimate(F3, None, 4 * np.pi / 3, eps, budget=60, minimizer=ball_minimizer_3d).value
              for eps in (0.2, 0.1, 0.05)]
    assert values[0] >= values[1] >= values[2] > 0


def test_modulus_is_monotone_in_budget_and_epsilon_2d(disk_minimizer):
    by_budget = [S.modulus_estimate(F2, None, np.pi, 0.1, budget=b, minimizer=disk_minimizer).value
                 for b in (10, 30, 90)]
    assert by_budget[0] >= by_budget[1] >= by_budget[2]
    by_eps = [S.modulus_estimate(F2, None, np.pi, e, budget=40, minimizer=disk_minimizer).value
              for e in (0.05, 0.1, 0.2, 0.3)]
    assert all(a <= b for a, b in zip(by_eps, by_eps[1:]))


def test_translated_minimizer_is_not_a_competitor(disk_minimizer):
    E = disk_minimizer.shape
    moved = ball(1.0, center=(0.7, -0.2), resolution=E.radii.size)
    asym, ok = S.asymmetry(E, moved, 0.05)
    assert not ok and asym < 0.05
    far = rescale_to_mass(ball(1.0, resolution=E.radii.size), np.pi)
    far.radii[: far.radii.size // 2] *= 1.3
    far = rescale_to_mass(far, np.pi)
    asym, ok = S.asymmetry(E, far, 0.05)
    assert ok and asym >= 0.05


def test_modulus_input_errors(disk_minimizer):
    with pytest.raises(DomainError):
        S.modulus_estimate(F2, None, np.pi, 0.0, minimizer=disk_minimizer)
    with pytest.raises(DomainError):
        S.modulus_estimate(F2, None, np.pi, 1.0, minimizer=disk_minimizer)
    with pytest.raises(ConstraintInfeasibleError):
        S.modulus_estimate(F2, None, np.pi, 0.95, budget=5, minimizer=disk_minimizer)


def test_mass_exponent_needs_four_masses():
    with pytest.raises(DomainError):
        S.modulus_mass_exponent(F2, None, 0.1, [0.1, 0.2, 0.5])


def test_mass_exponent_2d():
    fit = S.modulus_mass_exponent(F2, None, 0.1, [0.05, 0.1, 0.2, 0.5], budget=40, options=OPT2)
    assert fit["expected"] == 0.5
    assert abs(fit["slope"] - 0.5) < 0.1
    assert fit["r2"] > 0.9


def test_scaling_gap_for_balls_matches_closed_form():
    rows = S.scaling_gap_check(F3, None, [(0.5, 1.0), (1.0, 1.0)], options=OPT3)
    m, M = 0.5, 1.0
    exact_gap = (36 * np.pi) ** (1 / 3) * (M ** (2 / 3) - m ** (2 / 3))
    assert rows[0]["gap"] == pytest.approx(exact_gap, rel=2e-3)
    # gamma_1 = 2 F(E_M) / M^(2/3) = 2 (36 pi)^(1/3), so the ratio is one half
    assert rows[0]["ratio"] == pytest.approx(0.5, rel=1e-6)
    assert rows[1] == {"m": 1.0, "M": 1.0, "gap": 0.0, "bound": 0.0, "ratio": 0.0, "gamma1": rows[0]["gamma1"]}


def test_scaling_gap_convex_potential_and_ordering():
    rows = S.scaling_gap_check(F3, radial(2), [(0.5, 1.0)], options=OPT3)
    assert 0 < rows[0]["gap"] and rows[0]["ratio"] <= 1
    with pytest.raises(DomainError):
        S.scaling_gap_check(F3, None, [(1.0, 0.5)], options=OPT3)


def test_sweep_with_radial_potential_finds_no_threshold():
    res = S.mass_sweep(F2, radial(2), [0.1, 0.5, 1.0, 3.0, 10.0], options=OPT2)
    assert res.detected_threshold is None and res.flagged == []
    for row in res.rows:
        assert row["defect"] < 1e-2 and row["spread"] < 0.01
    assert all(r["alignment_to_previous"] < 1e-3 for r in res.rows[1:])


def test_sweep_anisotropic_without_potential_returns_wulff_shapes():
    f = ellipsoidal(axes=(1.0, 1.6))
    res = S.mass_sweep(f, None, [0.5, 2.0], options={"resolution": 64, "starts": ["ball", "wulff"]})
    assert res.detected_threshold is None
    for row in res.rows:
        W = wulff_shape(f, mass=row["mass"], resolution=64).body
        best = S.best_minimizer(f, None, row["mass"], {"resolution": 64, "starts": ["ball"]}).shape
        assert symmetric_difference(best, W) / row["mass"] < 0.02


def test_double_well_negative_control_detects_threshold():
    res = S.mass_sweep(F2, double_well(1.0, 2), [0.1, 0.5, 1.0, 2.0], epsilon=0.1, options=OPT2)
    assert res.detected_threshold is not None
    assert res.gamma is not None and res.ratio_series


def test_sweep_is_reproducible_and_grid_checked():
    a = S.mass_sweep(F2, radial(2), [0.3, 0.6], options=OPT2)
    b = S.mass_sweep(F2, radial(2), [0.3, 0.6], options=OPT2)
    assert [r["defect"] for r in a.rows] == [r["defect"] for r in b.rows]
    assert [r["energy"] for r in a.rows] == [r["energy"] for r in b.rows]
    with pytest.raises(DomainError):
        S.mass_sweep(F2, None, [1.0, 1.0])


def test_translation_bound_cases():
    free = S.translation_invariance_bound(F2, None, [0.2, 0.5],
                                          options={"resolution": 64, "starts": ["ball", "random_1"],
                                                   "center_spread": 0.3})
    assert all(r["pass"] and r["lhs"] <= r["tolerance"] for r in free)
    bowl = S.translation_invariance_bound(F2, radial(2), 0.2, options=OPT2)
    assert bowl["pass"] and bowl["lhs"] < 1e-6
    flat = S.translation_invariance_bound(F2, flat_bottom(0.5), [0.05, 0.1],
                                          options={"resolution": 64, "starts": ["ball", "random_1"],
                                                   "center_spread": 0.5})
    assert all(r["pass"] for r in flat)


def test_nonpositive_estimates_are_excluded_with_warning(monkeypatch, caplog):
    real = S.modulus_estimate

    def fake(f, g, m, eps, budget=200, **kw):
        est = real(f, g, m, eps, budget, **kw)
        if m == 0.1:
            est.value = 0.0
        return est

    monkeypatch.setattr(S, "modulus_estimate", fake)
    with caplog.at_level(logging.WARNING, logger="wulfflab.stability"):
        fit = S.modulus_mass_exponent(F2, None, 0.1, [0.05, 0.1, 0.2, 0.5], budget=20, options=OPT2)
    assert fit["excluded"] == [0.1]
    assert "not positive" in caplog.text
