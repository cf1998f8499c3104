import csv

import numpy as np
import pytest

from wulfflab.anisotropy import ellipsoidal, euclidean, smoothed_lp, wulff_shape
from wulfflab.energy import first_variation_residual
from wulfflab.errors import DomainError, PreconditionError
from wulfflab.optimizer import (MinimizeOptions, MinimizerResult, certify_minimizer, initial_radii,
                                minimize_at_mass, write_history)
from wulfflab.potential import PotentialFunction, double_well, gravitational, radial, zero
from wulfflab.shapes import ball, convexity_defect, symmetric_difference

ISO = euclidean()


def test_ball_start_recovers_unit_ball():
    res = minimize_at_mass(ISO, zero(), MinimizeOptions(mass=4 * np.pi / 3, starts=["ball"]))[0]
    assert res.converged
    assert res.report.total == pytest.approx(4 * np.pi, rel=5e-3)
    assert res.defect < 1e-3
    assert res.mass_error <= 1e-3


def test_anisotropic_minimizer_is_the_wulff_shape():
    f = ellipsoidal(axes=[1, 1, 2])
    m = 3.0
    res = minimize_at_mass(f, zero(), MinimizeOptions(mass=m, starts=["ball"]))[0]
    W = wulff_shape(f, mass=m)
    assert res.converged
    assert res.report.total == pytest.approx(3 * W.volume / W.scale, rel=1e-2)
    assert symmetric_difference(res.shape, W.body) < 0.02 * m


def test_convexity_emerges_from_random_starts():
    opts = MinimizeOptions(mass=2.0, starts=["random_3"], seed=4)
    for label in opts.expanded_starts():
        r, _ = initial_radii(label, ISO, opts)
        assert r.std() > 0.02  # genuinely perturbed starts
    results = minimize_at_mass(ISO, radial(2), opts)
    energies = [r.report.total for r in results]
    assert all(r.converged for r in results)
    assert (max(energies) - min(energies)) / min(energies) < 5e-3
    assert max(r.defect for r in results) < 1e-2


def test_planar_minimizer():
    f = smoothed_lp(dim=2)
    res = minimize_at_mass(f, zero(), MinimizeOptions(mass=np.pi, dim=2, starts=["ball", "random_1"]))
    W = wulff_shape(f, mass=np.pi)
    assert all(r.converged for r in res)
    assert res[0].report.total == pytest.approx(2 * W.volume / W.scale, rel=5e-3)


def test_results_sorted_best_first_and_history_monotone():
    opts = MinimizeOptions(mass=1.0, starts=["wulff", "random_2"], resolution=(16, 32), seed=1)
    results = minimize_at_mass(smoothed_lp(), radial(2), opts)
    keys = [(r.report.total, r.start_label) for r in results]
    assert keys == sorted(keys)
    for r in results:
        energies = [h[1] for h in r.history]
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        assert r.history[0][0] == 0 and r.history[-1][3] is not None
        assert r.shape.volume() == pytest.approx(1.0, rel=1e-3)


def test_determinism():
    opts = MinimizeOptions(mass=1.0, starts=["random_2"], resolution=(16, 32), seed=9, threads=1)
    a = minimize_at_mass(smoothed_lp(), radial(2), opts)
    b = minimize_at_mass(smoothed_lp(), radial(2), opts)
    for x, y in zip(a, b):
        assert x.history == y.history
        assert np.array_equal(x.shape.radii, y.shape.radii)


def test_threaded_run_matches_serial():
    kw = dict(mass=1.0, starts=["ball", "random_1"], resolution=(16, 32), seed=2)
    a = minimize_at_mass(ISO, radial(2), MinimizeOptions(threads=1, **kw))
    b = minimize_at_mass(ISO, radial(2), MinimizeOptions(threads=2, **kw))
    assert [r.history for r in a] == [r.history for r in b]


def test_confinement_is_flagged():
    # a non-coercive potential pushes the body downward; a tight ball catches the drift
    opts = MinimizeOptions(mass=1.0, starts=["ball"], resolution=(16, 32), confinement_radius=0.75,
                           center=(0.0, 0.0, 0.1))
    res = minimize_at_mass(ISO, gravitational(5.0), opts)[0]
    assert res.stop_reason == "confinement" and res.confinement_active and not res.converged
    assert res.diagnostics


def test_option_validation():
    with pytest.raises(DomainError):
        MinimizeOptions(mass=0.0)
    with pytest.raises(DomainError):
        MinimizeOptions(mass=1.0, residual_tol=0.0)
    with pytest.raises(DomainError):
        MinimizeOptions(mass=1.0, confinement_radius=-1.0)
    with pytest.raises(DomainError):
        minimize_at_mass(euclidean(2), zero(), MinimizeOptions(mass=1.0))
    with pytest.raises(DomainError):
        initial_radii("sphere", ISO, MinimizeOptions(mass=1.0))


def test_history_csv(tmp_path):
    opts = MinimizeOptions(mass=1.0, starts=["ball"], resolution=(16, 32), history_dir=str(tmp_path))
    res = minimize_at_mass(ISO, zero(), opts)[0]
    rows = list(csv.reader(open(tmp_path / "history_ball.csv")))
    assert rows[0] == ["iter", "energy", "residual", "defect"]
    assert len(rows) == len(res.history) + 1
    write_history(tmp_path / "again.csv", res.history)
    assert (tmp_path / "again.csv").read_text() == (tmp_path / "history_ball.csv").read_text()


def _manual_result(shape, f, g, converged=True):
    rep = first_variation_residual(shape, f, g)
    return MinimizerResult(shape, rep, 0, converged, "manual", [], convexity_defect(shape), 0.0, "stationary")


def test_certify_converged_ball():
    res = minimize_at_mass(ISO, zero(), MinimizeOptions(mass=4 * np.pi / 3, starts=["ball"]))[0]
    cert = certify_minimizer(res, ISO, zero())
    assert cert["is_critical"] and cert["is_local_min_probe"]


def test_certify_detects_saddle_under_inverted_potential():
    # g = -5|x|^2 keeps the centred ball critical, but translating mass outward lowers the energy
    c = 5.0
    inverted = PotentialFunction("inverted", lambda x: -c * np.sum(x * x, -1), lambda x: -2 * c * x, None,
                                 False, False, anchored=False)
    res = _manual_result(ball(), ISO, inverted)
    cert = certify_minimizer(res, ISO, inverted)
    assert cert["is_critical"]
    assert not cert["is_local_min_probe"]


def test_certify_needs_convergence():
    with pytest.raises(PreconditionError):
        certify_minimizer(_manual_result(ball(), ISO, zero(), converged=False), ISO, zero())


def test_drifting_start_is_recentered():
    # wells at +-e1; the centered disk is a worse critical point
    g = double_well(1.0, 2)
    res = minimize_at_mass(euclidean(2), g, MinimizeOptions(mass=1.0, dim=2, resolution=64,
                                                            starts=["ball", "random_2"]))
    best = res[0]
    assert best.converged and best.start_label.startswith("random")
    assert abs(abs(best.shape.center[0]) - 0.6) < 0.1
    assert best.restarts >= 1 and any("recentered" in d for d in best.diagnostics)
    assert best.report.total < [r for r in res if r.start_label == "ball"][0].report.total
