"""Exact conditional path quantities and quadrature-based marginals.

The conditional law of the trajectory given a data point y is
N(beta_t * y, alpha_t^2 I_d).  Differentiating the conditional velocity
v_t(x|y) = alpha'(x - beta y)/alpha + beta' y in t gives the conditional
acceleration; its posterior average is the marginal acceleration used by
the bound suites and rate experiments.

Two distinct "marginal acceleration" notions coexist and are deliberately
kept apart:

* `marginal_acceleration` - the Bayes-weighted conditional acceleration
  E[a_t(x|y) | x].  This is the regression target of second-order flow
  matching and the object the acceleration bounds control.
* the Eulerian derivative d/dt v_t(x) - what the second-order continuity
  equation needs.  `continuity_residual` forms it by central differences
  of the marginal velocity; substituting the Bayes field leaves an O(1)
  defect, so the two must not be conflated.

Since a_t(x|y) is affine in y, the Bayes field reduces to schedule scalars
times the two posterior moments E[(x - beta y)/alpha | x] and E[y | x]:

    a_t(x) = (alpha'' - alpha'^2/alpha) E[u|x] + (beta'' - alpha'beta'/alpha) E[y|x].
"""

import math

import numpy as np

from .density import Density
from .quadrature import QuadratureSpec, gauss_moments
from .schedule import Schedule, ScheduleState

DENSITY_FLOOR = 1e-300


class SingularityError(ZeroDivisionError):
    pass


class FarTailError(FloatingPointError):
    """Marginal denominator underflowed; use the window bounds instead."""


class PrecisionError(ArithmeticError):
    """Quadrature failed to converge under node doubling."""


# -- conditional fields -----------------------------------------------------

def conditional_velocity(st: ScheduleState, x, y):
    """v_t(x|y) = alpha' (x - beta y)/alpha + beta' y."""
    if st.alpha == 0:
        raise SingularityError(f"alpha_t = 0 at t={st.t}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return st.alpha1 * (x - st.beta * y) / st.alpha + st.beta1 * y


def conditional_acceleration(st: ScheduleState, x, y):
    """d/dt v_t(x|y) at fixed x (four-term closed form)."""
    if st.alpha == 0:
        raise SingularityError(f"alpha_t = 0 at t={st.t}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (x - st.beta * y) / st.alpha
    return (st.alpha2 * u + st.beta2 * y
            - st.alpha1 ** 2 * u / st.alpha
            - st.alpha1 * st.beta1 * y / st.alpha)


def conditional_log_density(st: ScheduleState, x, y):
    """log N(x; beta y, alpha^2 I)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = x.shape[1]
    r2 = ((x - st.beta * y) ** 2).sum(axis=1)
    return -0.5 * r2 / st.alpha ** 2 - d * math.log(math.sqrt(2 * math.pi) * st.alpha)


# -- marginal path -----------------------------------------------------------

class GaussianPath:
    """A schedule bound to a target density, with quadrature marginals."""

    def __init__(self, schedule: Schedule, p0: Density, quad: QuadratureSpec = None):
        self.schedule = schedule
        self.p0 = p0
        self.d = p0.d
        self.quad = quad or QuadratureSpec()

    # weight function and support box for the y-integrals
    def _weight(self):
        return self.p0.eval, (-1.0, 1.0)

    def moments(self, t, xs, n_nodes=None):
        """(m0, mu, my): kernel mass and the two first moments at points xs."""
        st = self.schedule.eval(t)
        if st.alpha == 0:
            raise SingularityError(f"alpha_t = 0 at t={t}")
        fy, support = self._weight()
        n = n_nodes or self.quad.nodes_for(self.d)
        return gauss_moments(st.alpha, st.beta, xs, fy, d=self.d, n_nodes=n,
                             window_sigmas=self.quad.window_sigmas,
                             support=support)

    def density(self, t, xs, check=False):
        """Marginal density p_t at points xs (vectorized).

        With check=True the node count is doubled and a relative change
        above 1e-4 raises PrecisionError.
        """
        m0, _, _ = self.moments(t, xs)
        if check:
            n = self.quad.nodes_for(self.d)
            m0b, _, _ = self.moments(t, xs, n_nodes=2 * n)
            rel = np.abs(m0b - m0) / np.maximum(np.abs(m0b), DENSITY_FLOOR)
            if np.any(rel > 1e-4):
                raise PrecisionError(
                    f"quadrature not converged: rel change {rel.max():.3e}")
        return m0

    def velocity(self, t, xs):
        st = self.schedule.eval(t)
        m0, mu, my = self.moments(t, xs)
        self._check_floor(m0, t)
        return (st.alpha1 * mu + st.beta1 * my) / m0[:, None]

    def acceleration(self, t, xs):
        """Bayes-weighted conditional acceleration E[a_t(x|y) | x]."""
        st = self.schedule.eval(t)
        m0, mu, my = self.moments(t, xs)
        self._check_floor(m0, t)
        return (st.accel_u_coeff * mu + st.accel_y_coeff * my) / m0[:, None]

    def posterior_mean(self, t, xs):
        m0, _, my = self.moments(t, xs)
        self._check_floor(m0, t)
        return my / m0[:, None]

    def fields(self, t, xs):
        """(p, v, a) in one quadrature pass."""
        st = self.schedule.eval(t)
        m0, mu, my = self.moments(t, xs)
        self._check_floor(m0, t)
        v = (st.alpha1 * mu + st.beta1 * my) / m0[:, None]
        a = (st.accel_u_coeff * mu + st.accel_y_coeff * my) / m0[:, None]
        return m0, v, a

    @staticmethod
    def _check_floor(m0, t):
        if np.any(m0 < DENSITY_FLOOR):
            raise FarTailError(
                f"p_t underflowed at t={t}; use the tail/window bounds instead")

    def acceleration_direct(self, t, xs, n_nodes=None):
        """Independent route: quadrature of the four-term conditional field.

        Kept separate from `acceleration` (which uses the collapsed
        two-moment form) so the two can cross-check each other.
        """
        st = self.schedule.eval(t)
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        n = n_nodes or self.quad.nodes_for(self.d)
        fy, support = self._weight()
        out = np.empty_like(xs)
        from .quadrature import axis_window, leggauss, WINDOW_RATIO
        u, wu = leggauss(n)
        for i, x in enumerate(xs):
            if st.beta > 0 and st.alpha / st.beta < WINDOW_RATIO:
                w_half = self.quad.window_sigmas * st.alpha / st.beta
                a, b = axis_window(x / st.beta, w_half, *support)
            else:
                a = np.full(self.d, support[0])
                b = np.full(self.d, support[1])
            axes = [0.5 * (a[k] + b[k]) + 0.5 * (b[k] - a[k]) * u for k in range(self.d)]
            wts = [0.5 * (b[k] - a[k]) * wu for k in range(self.d)]
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([gg.ravel() for gg in grids], axis=-1)
            wgt = wts[0]
            for k in range(1, self.d):
                wgt = np.multiply.outer(wgt, wts[k])
            wgt = wgt.ravel()
            z = (x - st.beta * pts) / st.alpha
            ker = np.exp(-0.5 * (z * z).sum(axis=1)) / (
                math.sqrt(2 * math.pi) * st.alpha) ** self.d
            base = ker * fy(pts) * wgt
            m0 = base.sum()
            self._check_floor(np.array([m0]), t)
            ac = conditional_acceleration(st, x[None, :], pts)
            out[i] = (base[:, None] * ac).sum(axis=0) / m0
        return out


class RebasedPath(GaussianPath):
    """Path re-based at t_star: base weight is the marginal p_{t_star}.

    The base density is tabulated once on a fine grid and interpolated by a
    cubic spline; every consumer (fits and moment integrals) sees the same
    interpolant, so fit-vs-target comparisons are self-consistent.
    Implemented for d = 1, the regime the large-t experiments run in.
    """

    def __init__(self, base_path: GaussianPath, t_star: float,
                 quad: QuadratureSpec = None, table_n: int = 4096):
        from scipy.interpolate import CubicSpline
        from .schedule import rebase_schedule
        if base_path.d != 1:
            raise NotImplementedError("rebased path is implemented for d = 1")
        self.base_path = base_path
        self.t_star = float(t_star)
        st = base_path.schedule.eval(t_star)
        half = st.beta * 1.0 + 10.0 * st.alpha
        ys = np.linspace(-half, half, table_n)
        pv = base_path.density(t_star, ys[:, None])
        self._spline = CubicSpline(ys, pv, extrapolate=False)
        self._half = half
        self.schedule = rebase_schedule(base_path.schedule, t_star)
        self.p0 = base_path.p0
        self.d = 1
        self.quad = quad or base_path.quad

    def base_density(self, ys):
        ys = np.asarray(ys, dtype=float)
        out = self._spline(ys.ravel())
        out = np.where(np.isnan(out), 0.0, out)
        return np.maximum(out, 0.0)

    def _weight(self):
        return (lambda pts: self.base_density(pts[:, 0])), (-self._half, self._half)


class GaussianReferencePath:
    """Closed-form path for an untruncated Gaussian target N(0, sigma0^2 I).

    Marginal is N(0, (alpha^2 + beta^2 sigma0^2) I); velocity and the Bayes
    acceleration are linear in x.  Used as the no-quadrature oracle.
    """

    def __init__(self, schedule: Schedule, sigma0: float = 1.0, d: int = 1):
        self.schedule = schedule
        self.sigma0 = float(sigma0)
        self.d = d

    def _coef(self, t):
        st = self.schedule.eval(t)
        var = st.alpha ** 2 + st.beta ** 2 * self.sigma0 ** 2
        return st, var

    def density(self, t, xs):
        _, var = self._coef(t)
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        r2 = (xs ** 2).sum(axis=1)
        return np.exp(-0.5 * r2 / var) / (math.sqrt(2 * math.pi * var)) ** self.d

    def velocity_coef(self, t):
        st, var = self._coef(t)
        return (st.alpha1 * st.alpha + st.beta1 * st.beta * self.sigma0 ** 2) / var

    def velocity(self, t, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return self.velocity_coef(t) * xs

    def velocity_time_derivative(self, t, xs):
        """Exact d/dt of the marginal velocity field (Eulerian)."""
        st, var = self._coef(t)
        s2 = self.sigma0 ** 2
        num = st.alpha1 * st.alpha + st.beta1 * st.beta * s2
        dnum = st.alpha2 * st.alpha + st.alpha1 ** 2 + (st.beta2 * st.beta + st.beta1 ** 2) * s2
        dvar = 2.0 * (st.alpha1 * st.alpha + st.beta1 * st.beta * s2)
        cdot = (dnum * var - num * dvar) / var ** 2
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return cdot * xs

    def acceleration(self, t, xs):
        st, var = self._coef(t)
        m = st.beta * self.sigma0 ** 2 / var        # E[y|x] = m x
        u = (1.0 - st.beta * m) / st.alpha           # E[(x-beta y)/alpha | x] = u x
        g = st.accel_u_coeff * u + st.accel_y_coeff * m
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return g * xs


# -- continuity residuals ----------------------------------------------------

def continuity_residual(P, t, x, h, order=1):
    """|lhs - rhs| of the (first or second order) continuity equation.

    Time derivatives of p use central differences at step h; the divergence
    uses central differences in x at the same step.  For order 2 the
    acceleration entering the flux is the finite-difference Eulerian
    d/dt v (see module docstring).
    """
    if not (1e-4 <= h <= 1e-2):
        raise ValueError("h must lie in [1e-4, 1e-2]")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]

    def shifts(xx):
        pts = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            pts.append(xx + e)
            pts.append(xx - e)
        return np.vstack(pts)

    pts = shifts(x)          # (2d, d)

    if order == 1:
        lhs = (P.density(t + h, x) - P.density(t - h, x)) / (2.0 * h)
        flux = P.velocity(t, pts) * P.density(t, pts)[:, None]
        div = 0.0
        for i in range(d):
            div = div + (flux[2 * i, i] - flux[2 * i + 1, i]) / (2.0 * h)
        return float(abs(lhs[0] + div))

    if order == 2:
        lhs = (P.density(t + h, x) - 2.0 * P.density(t, x) + P.density(t - h, x)) / h ** 2
        pdot = (P.density(t + h, pts) - P.density(t - h, pts)) / (2.0 * h)
        if hasattr(P, "velocity_time_derivative"):
            accel = P.velocity_time_derivative(t, pts)
        else:
            accel = (P.velocity(t + h, pts) - P.velocity(t - h, pts)) / (2.0 * h)
        flux = P.velocity(t, pts) * pdot[:, None] + accel * P.density(t, pts)[:, None]
        div = 0.0
        for i in range(d):
            div = div + (flux[2 * i, i] - flux[2 * i + 1, i]) / (2.0 * h)
        return float(abs(lhs[0] + div))

    raise ValueError("order must be 1 or 2")


# -- pushforward and determinant fact ----------------------------------------

class AffineMap:
    """x -> A x + c with checked invertibility."""

    def __init__(self, A, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.c = np.zeros(self.A.shape[0]) if c is None else np.asarray(c, dtype=float)
        self.det = float(np.linalg.det(self.A))
        if abs(self.det) <= 1e-12:
            raise SingularityError("map is singular")
        self.Ainv = np.linalg.inv(self.A)

    def inverse(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.c) @ self.Ainv.T


def pushforward_density(mapping: AffineMap, p0, x):
    """(mapping_* p0)(x) = p0(mapping^-1 x) * |det d(mapping^-1)/dx|."""
    y = mapping.inverse(x)
    vals = p0.eval(y) if hasattr(p0, "eval") else p0(y)
    return np.asarray(vals) / abs(mapping.det)


def det_derivative_check(X, t, h=1e-5):
    """Relative gap between d/dt det X(t) (FD) and det X * tr(X^-1 dX/dt)."""
    Xt = np.asarray(X(t), dtype=float)
    det = np.linalg.det(Xt)
    if abs(det) <= 1e-12:
        raise SingularityError("X(t) is singular")
    Xp, Xm = np.asarray(X(t + h), dtype=float), np.asarray(X(t - h), dtype=float)
    fd = (np.linalg.det(Xp) - np.linalg.det(Xm)) / (2.0 * h)
    Xdot = (Xp - Xm) / (2.0 * h)
    formula = det * np.trace(np.linalg.solve(Xt, Xdot))
    return abs(fd - formula) / max(abs(formula), 1e-12)
