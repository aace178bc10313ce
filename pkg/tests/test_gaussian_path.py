import math

import numpy as np
import pytest
from scipy.stats import norm

from hoflow.density import Density
from hoflow.gaussian_path import (AffineMap, FarTailError, GaussianPath,
                                  GaussianReferencePath, RebasedPath,
                                  SingularityError, conditional_acceleration,
                                  conditional_log_density, conditional_velocity,
                                  continuity_residual, det_derivative_check,
                                  pushforward_density)
from hoflow.quadrature import QuadratureSpec
from hoflow.rng import stream
from hoflow.schedule import Schedule


LIN = Schedule.linear()
POW = Schedule.power(1.0, 0.5)


def test_conditional_velocity_examples():
    st = LIN.eval(0.5)
    assert conditional_velocity(st, 0.5, 1.0) == pytest.approx(1.0)
    assert conditional_velocity(st, 0.0, 0.0) == 0.0
    st = POW.eval(0.25)
    # alpha'(x - beta y)/alpha + beta' y with (1, 0.625, 0.5, -1)
    assert conditional_velocity(st, 1.0, 0.5) == pytest.approx(0.75)


def test_conditional_acceleration_examples():
    st = LIN.eval(0.0)
    assert conditional_acceleration(st, 0.0, 1.0) == pytest.approx(1.0)
    st = POW.eval(0.25)
    assert conditional_acceleration(st, 0.75, 1.0) == pytest.approx(2.0)
    st = LIN.eval(0.25)
    assert conditional_acceleration(st, 1.0, 0.0) == pytest.approx(-1.0 / 0.5625)


def test_conditional_singularity():
    st = LIN.eval(1.0)
    with pytest.raises(SingularityError):
        conditional_velocity(st, 0.0, 0.0)


def test_conditional_accel_is_time_derivative_of_velocity():
    # random probes across schedules: a(x|y) == d/dt v(x|y) to 1e-5 rel
    rng = stream(0, "cond-probes")
    h = 1e-4
    for s in (LIN, POW, Schedule.power(0.9, 1.5, 1.1, 0.8)):
        for _ in range(50):
            t = rng.uniform(0.05, 0.95)
            x = rng.normal()
            y = rng.uniform(-1, 1)
            stp, stm = s.eval(t + h), s.eval(t - h)
            fd = (conditional_velocity(stp, x, y)
                  - conditional_velocity(stm, x, y)) / (2 * h)
            a = conditional_acceleration(s.eval(t), x, y)
            assert abs(fd - a) / max(abs(a), 1.0) <= 1e-5


def test_conditional_log_density_formula():
    st = POW.eval(0.3)
    x = np.array([[0.4]])
    y = np.array([[0.1]])
    want = -0.5 * (0.4 - st.beta * 0.1) ** 2 / st.alpha ** 2 \
           - math.log(math.sqrt(2 * math.pi) * st.alpha)
    assert conditional_log_density(st, x, y)[0] == pytest.approx(want, abs=1e-12)


def test_marginal_density_uniform_closed_form():
    # oracle: (1/(2 beta)) [Phi((x+beta)/alpha) - Phi((x-beta)/alpha)]
    P = GaussianPath(LIN, Density.uniform(1))
    for t, x in ((0.5, 0.0), (0.5, 0.4), (0.3, -0.2)):
        st = LIN.eval(t)
        want = (norm.cdf((x + st.beta) / st.alpha)
                - norm.cdf((x - st.beta) / st.alpha)) / (2 * st.beta)
        got = P.density(t, np.array([[x]]), check=True)[0]
        assert got == pytest.approx(want, rel=1e-9)


def test_marginal_density_gaussian_reference_agreement():
    # near-untruncated narrow Gaussian target vs the convolution identity
    D = Density.mixture([[0.0]], [0.18], [1.0])
    P = GaussianPath(POW, D)
    R = GaussianReferencePath(POW, 0.18, 1)
    xs = np.linspace(-0.8, 0.8, 9)[:, None]
    for t in (0.2, 0.6):
        got = P.density(t, xs)
        want = R.density(t, xs)
        assert np.abs(got / want - 1.0).max() <= 1e-6


def test_marginal_far_tail_band():
    P = GaussianPath(POW, Density.uniform(1))
    st = POW.eval(0.25)
    x = st.beta + 10.0 * st.alpha
    val = P.density(0.25, np.array([[x]]))[0]
    assert val <= 10.0 * math.exp(-50.0)


def test_marginal_fields_odd_symmetry():
    P = GaussianPath(LIN, Density.uniform(1))
    v = P.velocity(0.5, np.array([[0.0]]))[0]
    a = P.acceleration(0.5, np.array([[0.0]]))[0]
    assert abs(v[0]) <= 1e-12 and abs(a[0]) <= 1e-12


def test_marginal_fields_degenerate_posterior():
    # narrow bump: fields approach the conditional fields at y0
    y0 = 0.2
    D = Density.mixture([[y0]], [0.005], [1.0])
    P = GaussianPath(POW, D)
    t, x = 0.4, 0.5
    st = POW.eval(t)
    v = P.velocity(t, np.array([[x]]))[0, 0]
    a = P.acceleration(t, np.array([[x]]))[0, 0]
    assert abs(v - conditional_velocity(st, x, y0)) / abs(v) <= 1e-3
    assert abs(a - conditional_acceleration(st, x, y0)) / abs(a) <= 1e-3


def test_marginal_quadrature_oracle():
    # 1e6-node trapezoid oracle for the Bayes-weighted fields
    P = GaussianPath(LIN, Density.uniform(1))
    t, x = 0.5, 0.25
    st = LIN.eval(t)
    ys = np.linspace(-1, 1, 10 ** 6)
    ker = np.exp(-0.5 * ((x - st.beta * ys) / st.alpha) ** 2)
    ker /= math.sqrt(2 * math.pi) * st.alpha
    w = 0.5 * ker
    p_or = np.trapezoid(w, ys)
    v_or = np.trapezoid(w * (st.alpha1 * (x - st.beta * ys) / st.alpha
                             + st.beta1 * ys), ys) / p_or
    assert P.density(t, np.array([[x]]))[0] == pytest.approx(p_or, rel=1e-6)
    assert P.velocity(t, np.array([[x]]))[0, 0] == pytest.approx(v_or, rel=1e-6)


def test_acceleration_two_routes_agree():
    # collapsed two-moment form vs direct four-term conditional quadrature
    P = GaussianPath(POW, Density.mixture([[0.1], [-0.3]], [0.4, 0.3], [0.5, 0.5]))
    xs = np.array([[0.3], [-0.5], [0.8]])
    for t in (0.2, 0.7):
        a1 = P.acceleration(t, xs)
        a2 = P.acceleration_direct(t, xs)
        assert np.abs(a1 - a2).max() <= 1e-8 * max(1.0, np.abs(a1).max())


def test_far_tail_error_raised():
    P = GaussianPath(POW, Density.uniform(1))
    st = POW.eval(0.04)
    x = st.beta + 60.0 * st.alpha
    with pytest.raises(FarTailError):
        P.velocity(0.04, np.array([[x]]))


def test_density_window_stability_under_node_doubling():
    quad = QuadratureSpec(nodes=96)
    P = GaussianPath(POW, Density.uniform(1), quad)
    xs = np.array([[0.2], [0.9]])
    t = 1e-4        # alpha/beta tiny: window path active
    a = P.density(t, xs)
    b = P.density(t, xs, check=True)
    assert np.allclose(a, b)


def test_continuity_residual_orders_gaussian_reference():
    R = GaussianReferencePath(POW, 1.0, 1)
    x = np.array([0.52])
    for order in (1, 2):
        res = [continuity_residual(R, 0.37, x, h, order)
               for h in (4e-3, 2e-3, 1e-3)]
        fit = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(res), 1)[0]
        assert 1.8 <= fit <= 2.2


def test_continuity_residual_symmetric_point_order2():
    P = GaussianPath(LIN, Density.uniform(1))
    res = continuity_residual(P, 0.5, np.array([0.0]), 1e-3, 2)
    assert res <= 1e-6


def test_continuity_residual_h_validation():
    R = GaussianReferencePath(POW, 1.0, 1)
    with pytest.raises(ValueError):
        continuity_residual(R, 0.4, np.array([0.1]), 1e-5, 1)


def test_reference_velocity_time_derivative():
    R = GaussianReferencePath(POW, 0.8, 1)
    xs = np.array([[0.3]])
    h = 1e-5
    fd = (R.velocity(0.4 + h, xs) - R.velocity(0.4 - h, xs)) / (2 * h)
    assert np.abs(R.velocity_time_derivative(0.4, xs) - fd).max() <= 1e-8


def test_pushforward_examples():
    u = Density.uniform(1)
    ident = AffineMap(np.array([[1.0]]))
    assert pushforward_density(ident, u, np.array([[0.3]]))[0] == 0.5
    scale = AffineMap(np.array([[2.0]]))
    assert pushforward_density(scale, u, np.array([[1.5]]))[0] == 0.25
    assert pushforward_density(scale, u, np.array([[3.0]]))[0] == 0.0
    with pytest.raises(SingularityError):
        AffineMap(np.array([[0.0]]))


def test_pushforward_gaussian_affine_image():
    # affine image of a Gaussian matches the closed form
    R = GaussianReferencePath(LIN, 1.0, 1)
    A = AffineMap(np.array([[0.5]]), np.array([0.2]))
    xs = np.linspace(-1, 1, 7)[:, None]
    got = pushforward_density(A, lambda y: R.density(1e-9, y), xs)
    want = np.exp(-0.5 * ((xs[:, 0] - 0.2) / 0.5) ** 2) / (
        math.sqrt(2 * math.pi) * 0.5)
    assert np.abs(got - want).max() <= 1e-6


def test_det_derivative_examples():
    err = det_derivative_check(lambda t: t * np.eye(2), 1.0)
    assert err <= 1e-9
    err = det_derivative_check(lambda t: np.diag([1.0, 1.0 + t]), 0.0)
    assert err <= 1e-9
    rng = stream(1, "spd")
    A = rng.normal(size=(3, 3))
    A = A @ A.T + 3 * np.eye(3)
    B = rng.normal(size=(3, 3))
    assert det_derivative_check(lambda t: A + t * B, 0.2, h=1e-5) <= 1e-5
    with pytest.raises(SingularityError):
        det_derivative_check(lambda t: np.zeros((2, 2)), 0.0)


def test_rebased_path_reproduces_marginals():
    P = GaussianPath(POW, Density.mixture([[0.25], [-0.35]], [0.5, 0.4],
                                          [0.6, 0.4]))
    RP = RebasedPath(P, 0.25)
    xs = np.array([[0.0], [0.4], [-0.7]])
    for t in (0.5, 0.8, 1.0):
        a = P.density(t, xs)
        b = RP.density(t, xs)
        assert np.abs(a - b).max() <= 1e-9 * a.max()


def test_rebased_path_d2_not_implemented():
    P = GaussianPath(POW, Density.uniform(2))
    with pytest.raises(NotImplementedError):
        RebasedPath(P, 0.25)
