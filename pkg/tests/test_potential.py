import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wulfflab.errors import DomainError
from wulfflab.potential import (PotentialFunction, check_convexity, check_sublevel_convexity, double_well,
                                eval_potential, flat_bottom, gravitational, potential_from_config, radial,
                                sup_on_ball, zero)

BOX3 = ([-2, -2, -2], [2, 2, 2])


def test_examples():
    v, g = eval_potential(radial(2), np.array([1.0, 0, 0]), order=1)
    assert v == pytest.approx(1.0)
    assert np.allclose(g, [2, 0, 0])
    assert eval_potential(zero(), np.array([3.0, -1, 2])) == 0.0
    assert eval_potential(gravitational(1.0), np.array([0.0, 0, 2])) == pytest.approx(2.0)


def test_infinite_value_is_domain_error():
    inf = PotentialFunction("wall", lambda x: np.full(x.shape[:-1], np.inf), np.zeros_like, None, True, True)
    with pytest.raises(DomainError):
        eval_potential(inf, np.zeros(3))


def catalog():
    return [zero(), radial(1), radial(2), radial(4, 0.5), gravitational(2.0), flat_bottom(0.5, 3.0)]


@pytest.mark.parametrize("g", catalog(), ids=lambda g: g.name)
def test_anchor_and_sign(g):
    assert g.validate(dim=3) == []
    assert g.validate(dim=2) == []


@pytest.mark.parametrize("g", catalog() + [double_well()], ids=lambda g: g.name)
def test_derivatives_match_central_differences(g):
    rng = np.random.default_rng(2)
    X = rng.uniform(-1.5, 1.5, size=(100, 3))
    # stay away from kinks: origin, the plane x3 = 0, the flat-bottom sphere, the well interface
    X = X[(np.linalg.norm(X, axis=1) > 0.2) & (np.abs(X[:, 2]) > 0.05)
          & (np.abs(np.linalg.norm(X, axis=1) - 0.5) > 0.05) & (np.abs(X[:, 0]) > 0.05)]
    s = 1e-4
    for x in X:
        grad = g.gradient(x)
        fd = np.array([(g.value(x + s * e) - g.value(x - s * e)) / (2 * s) for e in np.eye(3)])
        assert np.abs(grad - fd).max() <= 1e-5 * (1 + np.abs(grad).max())
        if g.hessian_evaluator is not None:
            H = g.hessian(x)
            Hfd = np.stack([(g.gradient(x + s * e) - g.gradient(x - s * e)) / (2 * s) for e in np.eye(3)])
            assert np.abs(H - Hfd).max() <= 1e-5 * (1 + np.abs(H).max())


def test_convexity_examples():
    rep = check_convexity(radial(2), BOX3)
    assert rep["method"] == "hessian" and rep["min_hessian_eig"] == pytest.approx(2.0) and rep["pass"]
    neg = PotentialFunction("neg", lambda x: -np.sum(x * x, -1), lambda x: -2 * x,
                            lambda x: -2 * np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],)),
                            False, False)
    assert not check_convexity(neg, BOX3)["pass"]


def test_cone_by_midpoint_sampling():
    rep = check_convexity(radial(1), BOX3, samples=10_000)
    assert rep["method"] == "midpoint" and rep["pass"]
    # oracle: direct triangle inequality on fresh pairs
    rng = np.random.default_rng(11)
    X, Y = rng.uniform(-2, 2, (10_000, 3)), rng.uniform(-2, 2, (10_000, 3))
    assert np.all(np.linalg.norm((X + Y) / 2, axis=1) <= (np.linalg.norm(X, axis=1) + np.linalg.norm(Y, axis=1)) / 2 + 1e-12)


@pytest.mark.parametrize("g", [g for g in catalog() if g.declared_convex], ids=lambda g: g.name)
def test_declared_convex_passes_audit(g):
    assert check_convexity(g, BOX3)["pass"]


def test_sublevel_examples():
    assert check_sublevel_convexity(radial(2), [1.0], BOX3)[0]["pass"]
    well = double_well(separation=2.0)
    rep = check_sublevel_convexity(well, [1.0], ([-4, -2, -2], [4, 2, 2]), samples=4000)
    assert not rep[0]["pass"]
    assert check_sublevel_convexity(radial(1), [0.5], BOX3)[0]["pass"]
    empty = check_sublevel_convexity(radial(2), [-1.0], BOX3)[0]
    assert empty["pass"] and empty["vacuous"]
    with pytest.raises(DomainError):
        check_sublevel_convexity(radial(2), [], BOX3)


def test_sup_on_ball_has_safety_factor():
    assert sup_on_ball(radial(2), 2.0, 3) == pytest.approx(8.0, rel=1e-12)
    assert sup_on_ball(zero(), 1.0, 2) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_radial_potentials_are_midpoint_convex(a, b):
    x, y = np.array(a), np.array(b)
    for g in (radial(1), radial(2), radial(4), flat_bottom(), gravitational()):
        lhs = g.value((x + y) / 2)
        rhs = (g.value(x) + g.value(y)) / 2
        assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


def test_config_aliases_and_errors():
    g = potential_from_config({"kind": "radial-quadratic", "params": {"scale": 2.0}})
    assert g.value(np.array([1.0, 1.0, 0.0])) == pytest.approx(4.0)
    assert potential_from_config({"kind": "flat-bottom"}).zero_set_hint["radius"] == 0.5
    with pytest.raises(DomainError):
        potential_from_config({"kind": "nope"})
    with pytest.raises(DomainError):
        radial(3)
    assert double_well().validate() == [] or not double_well().anchored
