import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wulfflab.anisotropy import (TensionFunction, check_lambda_ellipticity, ellipsoidal, euclidean,
                                 eval_tension, smoothed_lp, support_error, tension_from_config,
                                 wulff_shape)
from wulfflab.energy import surface_energy
from wulfflab.errors import CapabilityError, DomainError
from wulfflab.shapes import convexity_defect


def ellipse_tension():
    return ellipsoidal(axes=[1.0, 1.0, 2.0])


def fd_gradient(fn, x, step=1e-4):
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return out


def test_euclidean_values():
    f = euclidean()
    assert eval_tension(f, [0.0, 0.0, 1.0]) == pytest.approx(1.0)
    assert eval_tension(f, [0.0, 0.0, 2.0]) == pytest.approx(2.0)


def test_ellipsoidal_value_and_fd_derivatives():
    f = ellipse_tension()
    nu = np.array([0.0, 0.0, 1.0])
    assert eval_tension(f, nu) == pytest.approx(2.0)
    rng = np.random.default_rng(1)
    for nu in rng.normal(size=(10, 3)):
        val, grad, hess = eval_tension(f, nu, order=2)
        assert val == pytest.approx(np.sqrt(nu[0] ** 2 + nu[1] ** 2 + 4 * nu[2] ** 2))
        assert np.allclose(grad, fd_gradient(f.value, nu), rtol=1e-6, atol=1e-8)
        H_fd = np.stack([fd_gradient(lambda x, i=i: f.gradient(x)[i], nu) for i in range(3)])
        assert np.allclose(hess, H_fd, rtol=1e-5, atol=1e-7)


def test_zero_direction_is_domain_error():
    with pytest.raises(DomainError):
        eval_tension(euclidean(), [0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        eval_tension(euclidean(), [1.0, 0.0, 0.0], order=3)


@pytest.mark.parametrize("make", [euclidean, ellipse_tension, smoothed_lp,
                                  lambda: smoothed_lp(dim=2), lambda: euclidean(2)])
def test_derivatives_match_central_differences(make):
    f = make()
    rng = np.random.default_rng(7)
    U = rng.normal(size=(100, f.dimension))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    worst_g = worst_h = 0.0
    for nu in U:
        g = f.gradient(nu)
        g_fd = fd_gradient(f.value, nu)
        worst_g = max(worst_g, np.abs(g - g_fd).max() / np.abs(g).max())
        H = f.hessian(nu)
        H_fd = np.stack([fd_gradient(lambda x, i=i: f.gradient(x)[i], nu) for i in range(f.dimension)])
        worst_h = max(worst_h, np.abs(H - H_fd).max() / max(np.abs(H).max(), 1e-12))
    assert worst_g < 1e-5
    assert worst_h < 1e-5


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.1, 20))
def test_homogeneity_identities(v, t):
    nu = np.array(v)
    if np.linalg.norm(nu) < 1e-3:
        return
    for f in (euclidean(), ellipse_tension(), smoothed_lp()):
        assert f.value(t * nu) == pytest.approx(t * f.value(nu), rel=1e-10)
        assert f.value(nu) > 0
        assert np.allclose(f.gradient(t * nu), f.gradient(nu), rtol=1e-9, atol=1e-12)
        H = f.hessian(nu)
        assert np.allclose(f.hessian(t * nu), H / t, rtol=1e-8, atol=1e-10)
        assert np.abs(H @ nu).max() < 1e-9 * (1 + np.abs(H).max() * np.linalg.norm(nu))


def test_ellipticity_euclidean_is_exactly_one():
    rep = check_lambda_ellipticity(euclidean(), samples=500)
    assert rep["min_tangential_eig"] == pytest.approx(1.0, abs=1e-12)
    assert rep["max_tangential_eig"] == pytest.approx(1.0, abs=1e-12)
    assert rep["pass"]


def test_ellipticity_ellipsoidal_against_sweep():
    f = ellipse_tension()
    rep = check_lambda_ellipticity(f, samples=2000)
    assert rep["pass"] and rep["min_tangential_eig"] > 0
    # independent oracle: dense angle sweep of tangential Rayleigh quotients by finite differences
    lo = np.inf
    for th in np.linspace(0.05, np.pi - 0.05, 25):
        nu = np.array([np.sin(th), 0.0, np.cos(th)])
        t1 = np.array([np.cos(th), 0.0, -np.sin(th)])
        t2 = np.array([0.0, 1.0, 0.0])
        for t in (t1, t2):
            s = 1e-4
            q = (f.value(nu + s * t) - 2 * f.value(nu) + f.value(nu - s * t)) / s ** 2
            lo = min(lo, q)
    assert rep["min_tangential_eig"] <= lo + 1e-5


def test_nonsmooth_l1_has_no_hessian():
    l1 = TensionFunction("l1", 3, lambda nu: np.abs(nu).sum(-1), np.sign, None, 1.0, 1.0)
    with pytest.raises(CapabilityError):
        check_lambda_ellipticity(l1, samples=32)


def test_ellipticity_needs_samples():
    with pytest.raises(DomainError):
        check_lambda_ellipticity(euclidean(), samples=4)


def test_wulff_ball():
    W = wulff_shape(euclidean(), mass=4 * np.pi / 3)
    r = np.linalg.norm(W.body.vertices, axis=1)
    assert np.abs(r - 1).max() < 1e-3
    assert W.volume == pytest.approx(4 * np.pi / 3, rel=1e-3)
    assert convexity_defect(W.body) < 1e-6


def test_wulff_ellipsoid_containment_both_ways():
    W = wulff_shape(ellipse_tension(), mass=8 * np.pi / 3)
    rng = np.random.default_rng(3)
    P = rng.normal(size=(2000, 3))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    P[:, 2] *= 2  # on the ellipsoid x^2 + y^2 + z^2/4 = 1
    assert W.body.contains(0.98 * P).all()
    assert not W.body.contains(1.02 * P).any()
    assert support_error(W) < 5e-3


def test_wulff_sphere_area_volume_relation():
    for m in (0.3, 2.0, 7.0):
        W = wulff_shape(euclidean(), mass=m)
        assert surface_energy(W.body, W.tension) == pytest.approx((36 * np.pi) ** (1 / 3) * m ** (2 / 3), rel=3e-3)


@pytest.mark.parametrize("make", [euclidean, ellipse_tension, smoothed_lp, lambda: smoothed_lp(dim=2)])
def test_energy_equals_n_volume_for_natural_wulff(make):
    f = make()
    W = wulff_shape(f)  # natural size, scale 1
    assert W.scale == 1.0
    n = f.dimension
    assert surface_energy(W.body, f) == pytest.approx(n * W.volume, rel=5e-3)


def test_wulff_scaling_vertexwise():
    f = ellipse_tension()
    t = 1.7
    A = wulff_shape(f, mass=1.0)
    B = wulff_shape(f, mass=t ** 3)
    assert np.abs(B.body.vertices - t * A.body.vertices).max() < 1e-9


def test_wulff_mass_must_be_positive():
    with pytest.raises(DomainError):
        wulff_shape(euclidean(), mass=0.0)


def test_config_catalog():
    f = tension_from_config({"kind": "ellipsoidal", "params": {"axes": [1, 2, 3]}})
    assert f.dimension == 3 and f.value(np.array([0.0, 0.0, 1.0])) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        tension_from_config({"kind": "crystalline"})
    with pytest.raises(DomainError):
        smoothed_lp(p=1.0)
