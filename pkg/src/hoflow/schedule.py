"""Interpolation schedules (alpha_t, beta_t) with exact derivatives.

Time convention: the trajectory is x_t = alpha_t * x0 + beta_t * x1 with x0
the noise draw and x1 the data draw.  Power-law schedules follow the
small-t data convention (alpha_t = b0 * t^kappa -> 0 as t -> 0, so t = T0
is data-dominant and t = 1 is noise-dominant).  The `linear` kind
(alpha = 1 - t, beta = t) is the classic reversed-orientation fixture:
data sits at t = 1.  The paper-convention straight-line schedule is
`Schedule.power(kappa=1, kappa_tilde=1)`.

Derivatives are closed-form per kind, never numeric, so downstream PDE
residual checks are not polluted by schedule error.  Custom schedules must
supply derivative callbacks, which are validated against finite
differences at construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


class ScheduleDomainError(ValueError):
    """A schedule value or derivative is non-finite at the requested time."""


@dataclass(frozen=True)
class ScheduleState:
    """alpha/beta and their first/second time derivatives at one time."""

    t: float
    alpha: float
    beta: float
    alpha1: float
    beta1: float
    alpha2: float
    beta2: float

    @property
    def accel_u_coeff(self) -> float:
        # coefficient of E[(x - beta y)/alpha | x] in the Bayes acceleration
        return self.alpha2 - self.alpha1 ** 2 / self.alpha

    @property
    def accel_y_coeff(self) -> float:
        # coefficient of E[y | x] in the Bayes acceleration
        return self.beta2 - self.alpha1 * self.beta1 / self.alpha


def _fd_check(f, t, exact, h=1e-5, tol=1e-6):
    approx = (f(t + h) - f(t - h)) / (2.0 * h)
    scale = max(abs(exact), 1.0)
    return abs(approx - exact) / scale <= tol


class Schedule:
    """An (alpha_t, beta_t) pair with closed-form derivatives.

    kinds: 'linear', 'power', 'custom', 'rebased'.
    """

    def __init__(self, kind, b0=1.0, kappa=0.5, b0_tilde=1.0, kappa_tilde=1.0,
                 funcs=None):
        self.kind = kind
        self.b0 = float(b0)
        self.kappa = float(kappa)
        self.b0_tilde = float(b0_tilde)
        self.kappa_tilde = float(kappa_tilde)
        self._funcs = funcs
        if kind == "power":
            if self.b0 <= 0 or self.b0_tilde <= 0:
                raise ValueError("b0 and b0_tilde must be positive")
            if self.kappa < 0.5:
                raise ValueError("kappa must be >= 1/2")
            if self.kappa_tilde <= 0:
                raise ValueError("kappa_tilde must be positive")
        elif kind == "custom":
            if funcs is None:
                raise ValueError("custom schedule needs derivative callbacks")
            self._validate_custom()
        elif kind not in ("linear",):
            raise ValueError(f"unknown schedule kind {kind!r}")

    # -- constructors ---------------------------------------------------
    @staticmethod
    def linear() -> "Schedule":
        return Schedule("linear")

    @staticmethod
    def power(b0=1.0, kappa=0.5, b0_tilde=1.0, kappa_tilde=1.0) -> "Schedule":
        return Schedule("power", b0, kappa, b0_tilde, kappa_tilde)

    @staticmethod
    def custom(alpha, beta, alpha1, beta1, alpha2, beta2) -> "Schedule":
        funcs = dict(alpha=alpha, beta=beta, alpha1=alpha1, beta1=beta1,
                     alpha2=alpha2, beta2=beta2)
        return Schedule("custom", funcs=funcs)

    def _validate_custom(self):
        f = self._funcs
        for t in (0.11, 0.37, 0.73, 0.97):
            if not _fd_check(f["alpha"], t, f["alpha1"](t)):
                raise ValueError(f"custom alpha' disagrees with finite differences at t={t}")
            if not _fd_check(f["beta"], t, f["beta1"](t)):
                raise ValueError(f"custom beta' disagrees with finite differences at t={t}")
            if not _fd_check(f["alpha1"], t, f["alpha2"](t)):
                raise ValueError(f"custom alpha'' disagrees with finite differences at t={t}")
            if not _fd_check(f["beta1"], t, f["beta2"](t)):
                raise ValueError(f"custom beta'' disagrees with finite differences at t={t}")

    # -- evaluation ------------------------------------------------------
    def alpha_beta(self, t):
        """(alpha_t, beta_t) values only; valid where derivatives may not be."""
        if self.kind == "linear":
            return 1.0 - t, t
        if self.kind == "power":
            return self.b0 * t ** self.kappa, 1.0 - self.b0_tilde * t ** self.kappa_tilde
        f = self._funcs
        return f["alpha"](t), f["beta"](t)

    def eval(self, t: float) -> ScheduleState:
        """Full state with exact first/second derivatives.

        Raises ScheduleDomainError if any derivative is non-finite at t
        (e.g. a kappa < 1 power law at t = 0).
        """
        if t < 0:
            raise ScheduleDomainError(f"t={t} out of domain")
        if self.kind == "linear":
            st = ScheduleState(t, 1.0 - t, t, -1.0, 1.0, 0.0, 0.0)
        elif self.kind == "power":
            st = self._eval_power(t)
        else:
            f = self._funcs
            st = ScheduleState(t, f["alpha"](t), f["beta"](t),
                               f["alpha1"](t), f["beta1"](t),
                               f["alpha2"](t), f["beta2"](t))
        for name in ("alpha", "beta", "alpha1", "beta1", "alpha2", "beta2"):
            if not math.isfinite(getattr(st, name)):
                raise ScheduleDomainError(f"{name} is non-finite at t={t}")
        return st

    def _eval_power(self, t):
        b0, k = self.b0, self.kappa
        bt, kt = self.b0_tilde, self.kappa_tilde

        def pow_d(c, p, order):
            # d^order/dt^order of c * t^p, with exact handling of t = 0
            coef = c
            for i in range(order):
                coef *= p - i
            q = p - order
            if coef == 0.0:
                return 0.0
            if t == 0.0:
                if q > 0:
                    return 0.0
                if q == 0:
                    return coef
                return math.inf
            return coef * t ** q

        alpha = pow_d(b0, k, 0)
        alpha1 = pow_d(b0, k, 1)
        alpha2 = pow_d(b0, k, 2)
        beta = 1.0 - pow_d(bt, kt, 0)
        beta1 = -pow_d(bt, kt, 1)
        beta2 = -pow_d(bt, kt, 2)
        return ScheduleState(t, alpha, beta, alpha1, beta1, alpha2, beta2)

    def eval_batch(self, ts):
        """Vectorized (alpha, beta, alpha1, beta1, alpha2, beta2) arrays."""
        ts = np.asarray(ts, dtype=float)
        if self.kind == "linear":
            o = np.ones_like(ts)
            return (1.0 - ts, ts, -o, o, 0.0 * o, 0.0 * o)
        if self.kind == "power":
            b0, k = self.b0, self.kappa
            bt, kt = self.b0_tilde, self.kappa_tilde
            a = b0 * ts ** k
            a1 = b0 * k * ts ** (k - 1.0)
            a2 = b0 * k * (k - 1.0) * ts ** (k - 2.0) if k != 1.0 else 0.0 * ts
            b = 1.0 - bt * ts ** kt
            b1 = -bt * kt * ts ** (kt - 1.0)
            b2 = -bt * kt * (kt - 1.0) * ts ** (kt - 2.0) if kt != 1.0 else 0.0 * ts
            return (a, b, a1, b1, np.asarray(a2), np.asarray(b2))
        cols = [self.eval(float(t)) for t in np.atleast_1d(ts)]
        return tuple(np.array([getattr(s, n) for s in cols])
                     for n in ("alpha", "beta", "alpha1", "beta1", "alpha2", "beta2"))

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "power":
            d.update(b0=self.b0, kappa=self.kappa,
                     b0_tilde=self.b0_tilde, kappa_tilde=self.kappa_tilde)
        return d


class RebasedSchedule(Schedule):
    """Schedule re-based at t_star: beta~ = beta/beta_*, alpha~ = sqrt(alpha^2 - beta~^2 alpha_*^2).

    The rebased pair reproduces the original marginal path on [t_star, 1]
    when the base density is the path marginal at t_star.  At t = t_star the
    values collapse to (alpha~, beta~) = (0, 1); derivatives are singular
    there, so the evaluation contract holds on t > t_star.
    """

    def __init__(self, base: Schedule, t_star: float):
        self.kind = "rebased"
        self.base = base
        self.t_star = float(t_star)
        st = base.eval(self.t_star)
        if st.beta == 0:
            raise ScheduleDomainError("beta vanishes at t_star; cannot rebase")
        self._alpha_star = st.alpha
        self._beta_star = st.beta
        self.kappa = base.kappa
        self.b0 = base.b0
        self.b0_tilde = base.b0_tilde
        self.kappa_tilde = base.kappa_tilde
        self._funcs = None

    def alpha_beta(self, t):
        ab, bb = self.base.alpha_beta(t)
        beta_r = bb / self._beta_star
        rad = ab * ab - beta_r * beta_r * self._alpha_star ** 2
        if rad < 0:
            if rad > -1e-12 * max(ab * ab, 1.0):
                rad = 0.0
            else:
                raise ScheduleDomainError(
                    f"negative radicand in rebased alpha at t={t}")
        return math.sqrt(rad), beta_r

    def eval(self, t: float) -> ScheduleState:
        st = self.base.eval(t)
        a_s, b_s = self._alpha_star, self._beta_star
        beta_r = st.beta / b_s
        beta1_r = st.beta1 / b_s
        beta2_r = st.beta2 / b_s
        rad = st.alpha ** 2 - beta_r ** 2 * a_s ** 2
        if rad <= 0:
            raise ScheduleDomainError(
                f"negative or zero radicand in rebased alpha at t={t}")
        alpha_r = math.sqrt(rad)
        alpha1_r = (st.alpha * st.alpha1 - beta_r * beta1_r * a_s ** 2) / alpha_r
        alpha2_r = (st.alpha1 ** 2 + st.alpha * st.alpha2
                    - (beta1_r ** 2 + beta_r * beta2_r) * a_s ** 2
                    - alpha1_r ** 2) / alpha_r
        out = ScheduleState(t, alpha_r, beta_r, alpha1_r, beta1_r,
                            alpha2_r, beta2_r)
        for name in ("alpha", "beta", "alpha1", "beta1", "alpha2", "beta2"):
            if not math.isfinite(getattr(out, name)):
                raise ScheduleDomainError(f"rebased {name} non-finite at t={t}")
        return out

    def describe(self) -> dict:
        return {"kind": "rebased", "t_star": self.t_star,
                "base": self.base.describe()}


def rebase_schedule(s: Schedule, t_star: float) -> RebasedSchedule:
    return RebasedSchedule(s, t_star)


def eval_schedule(s: Schedule, t: float) -> ScheduleState:
    return s.eval(t)


@dataclass
class TimeGrid:
    """Time variables: T0 = N^-R0, T_star = N^-((1/kappa - delta)/d), dyadic partition."""

    N: int
    R0: float
    delta: float
    d: int
    kappa: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.delta < 0.1):
            raise ValueError("delta must be in (0, 0.1)")
        if self.R0 <= 0 or self.N < 2 or self.d < 1:
            raise ValueError("bad TimeGrid parameters")
        if not self.T0 < self.T_star < 1.0:
            raise ValueError(
                f"need T0 < T_star < 1, got T0={self.T0:g} T_star={self.T_star:g}")

    @property
    def T0(self) -> float:
        return float(self.N) ** (-self.R0)

    @property
    def T_star(self) -> float:
        return float(self.N) ** (-(1.0 / self.kappa - self.delta) / self.d)

    def partition(self):
        """Dyadic knots t_0 = T0, t_j = 2 t_{j-1}, final knot clamped to 1."""
        ts = [self.T0]
        while ts[-1] * 2.0 < 1.0:
            ts.append(ts[-1] * 2.0)
        if ts[-1] < 1.0:
            ts.append(1.0)
        return np.array(ts)

    def grid(self, points: int = 512):
        """Log-spaced check grid on [T0, 1]."""
        return np.geomspace(self.T0, 1.0, points)


@dataclass
class AssumptionCheck:
    name: str
    passed: object          # True / False / None (report-only)
    value: float = math.nan
    witness_t: float = math.nan
    note: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "witness_t": self.witness_t, "note": self.note}


@dataclass
class AssumptionReport:
    schedule: dict
    checks: list = field(default_factory=list)
    D0: float = math.nan
    K0: float = math.nan
    integral_value: float = math.nan
    D1: float = math.nan
    b1: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.passed is not None)

    def to_dict(self):
        return {"schedule": self.schedule, "D0": self.D0, "K0": self.K0,
                "integral_value": self.integral_value, "D1": self.D1,
                "b1": self.b1, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def _second_deriv_sq(s: Schedule):
    def f(t):
        st = s.eval(t)
        return st.alpha2 ** 2 + st.beta2 ** 2
    return f


def second_deriv_integral(s: Schedule, t_lo: float, t_hi: float) -> float:
    """Adaptive quadrature of int (alpha''^2 + beta''^2) dt on [t_lo, t_hi].

    Integrated in log-time: power-law integrands span many decades near 0.
    """
    if t_hi <= t_lo:
        return 0.0
    f = _second_deriv_sq(s)
    g = lambda u: f(math.exp(u)) * math.exp(u)
    val, _ = integrate.quad(g, math.log(t_lo), math.log(t_hi), limit=400,
                            epsabs=0.0, epsrel=1e-10)
    return val


def check_assumptions(s: Schedule, g: TimeGrid, gamma: float = 1.0,
                      D0_cap: float = 4.0, points: int = 512) -> AssumptionReport:
    """Grid checks of the schedule assumptions on [T0, 1].

    Reports the measured D0 (extremes of alpha^2 + beta^2), the smallest K0
    capping |alpha'|+|beta'| and |alpha''|+|beta''| by N^K0, and (for
    kappa = 1/2) the second-derivative integral over [T0, N^-gamma] with a
    fitted (D1, b1) such that value <= D1 * log^b1 N across an internal N
    ladder.  The integral entry is report-only: the stated polylog cap does
    not hold for pure power schedules (the integral grows like T0^(1-2kappa*2)),
    so the fit documents growth rather than asserting it.
    """
    if points < 100:
        raise ValueError("grid must have >= 100 points")
    rep = AssumptionReport(schedule=s.describe())
    ts = g.grid(points)
    states = [s.eval(t) for t in ts]
    alphas = np.array([st.alpha for st in states])
    betas = np.array([st.beta for st in states])

    # positivity / range (data-end endpoint excluded: alpha may vanish there)
    interior = ts < 1.0
    bad = np.where((alphas <= 0) & interior)[0]
    rep.checks.append(AssumptionCheck(
        "alpha-positive", len(bad) == 0,
        value=float(alphas.min()),
        witness_t=float(ts[bad[0]]) if len(bad) else math.nan))
    badb = np.where((betas < -1e-12) | (betas > 1.0 + 1e-12))[0]
    rep.checks.append(AssumptionCheck(
        "beta-range", len(badb) == 0,
        value=float(betas.max()),
        witness_t=float(ts[badb[0]]) if len(badb) else math.nan))

    # D0 sandwich on alpha^2 + beta^2
    sq = alphas ** 2 + betas ** 2
    i_max, i_min = int(np.argmax(sq)), int(np.argmin(sq))
    D0 = max(sq[i_max], 1.0 / sq[i_min]) if sq[i_min] > 0 else math.inf
    rep.D0 = float(D0)
    ok = math.isfinite(D0) and D0 <= D0_cap
    witness = ts[i_max] if sq[i_max] >= 1.0 / max(sq[i_min], 1e-300) else ts[i_min]
    rep.checks.append(AssumptionCheck(
        "D0-sandwich", bool(ok), value=float(D0), witness_t=float(witness),
        note="" if ok else f"alpha^2+beta^2 outside [1/{D0_cap}, {D0_cap}]"))

    # derivative caps: smallest K0 with |a'|+|b'| <= N^K0 and |a''|+|b''| <= N^K0
    d1 = np.array([abs(st.alpha1) + abs(st.beta1) for st in states])
    d2 = np.array([abs(st.alpha2) + abs(st.beta2) for st in states])
    logN = math.log(g.N)
    m1, m2 = d1.max(), d2.max()
    K0 = max(math.log(max(m1, 1e-300)) / logN, math.log(max(m2, 1e-300)) / logN, 0.0)
    rep.K0 = float(K0)
    rep.checks.append(AssumptionCheck(
        "derivative-caps", bool(np.isfinite(m1) and np.isfinite(m2)),
        value=float(K0), witness_t=float(ts[int(np.argmax(d2))])))

    # finite-difference consistency of the closed-form derivatives; checked
    # for t >= 0.01 where the h = 1e-5 stencil resolves power-law curvature
    worst = 0.0
    worst_t = math.nan
    for t in np.geomspace(max(g.T0, 1e-2), 0.99, 25):
        st = s.eval(t)
        h = 1e-5 * max(t, 1.0)
        fa = (s.eval(t + h).alpha - s.eval(t - h).alpha) / (2 * h)
        fb = (s.eval(t + h).beta - s.eval(t - h).beta) / (2 * h)
        fa2 = (s.eval(t + h).alpha1 - s.eval(t - h).alpha1) / (2 * h)
        err = max(abs(fa - st.alpha1) / max(abs(st.alpha1), 1.0),
                  abs(fb - st.beta1) / max(abs(st.beta1), 1.0),
                  abs(fa2 - st.alpha2) / max(abs(st.alpha2), 1.0))
        if err > worst:
            worst, worst_t = err, t
    rep.checks.append(AssumptionCheck(
        "fd-consistency", bool(worst <= 1e-6), value=float(worst),
        witness_t=float(worst_t)))

    # kappa = 1/2 second-derivative integral (report-only fit)
    if abs(getattr(s, "kappa", math.nan) - 0.5) < 1e-12 or s.kind == "linear":
        if not (0.0 <= gamma < g.R0):
            raise ValueError("need 0 <= gamma < R0")
        t_hi = float(g.N) ** (-gamma)
        val = second_deriv_integral(s, g.T0, t_hi)
        rep.integral_value = float(val)
        ladder = sorted({max(16, g.N // 4), max(16, g.N // 2), g.N})
        vals = []
        for n in ladder:
            tg = TimeGrid(n, g.R0, g.delta, g.d, g.kappa)
            vals.append(max(second_deriv_integral(s, tg.T0, float(n) ** (-gamma)),
                            1e-300))
        x = np.log(np.log(np.array(ladder, dtype=float)))
        ylog = np.log(np.array(vals))
        if len(set(ladder)) >= 2:
            b1, logD1 = np.polyfit(x, ylog, 1)
        else:
            b1, logD1 = 0.0, ylog[0]
        rep.D1, rep.b1 = float(math.exp(min(logD1, 700.0))), float(b1)
        rep.checks.append(AssumptionCheck(
            "second-deriv-integral", None, value=float(val),
            note=f"fitted D1={rep.D1:.4g} b1={rep.b1:.4g} over N ladder {ladder}"))
    return rep
