import math

import numpy as np
import pytest

from hoflow.schedule import (RebasedSchedule, Schedule, ScheduleDomainError,
                             TimeGrid, check_assumptions, eval_schedule,
                             rebase_schedule, second_deriv_integral)


def test_linear_state_values():
    st = eval_schedule(Schedule.linear(), 0.5)
    assert (st.alpha, st.beta) == (0.5, 0.5)
    assert (st.alpha1, st.beta1) == (-1.0, 1.0)
    assert (st.alpha2, st.beta2) == (0.0, 0.0)


def test_power_half_state_values():
    st = eval_schedule(Schedule.power(1.0, 0.5), 0.25)
    assert st.alpha == pytest.approx(0.5)
    assert st.beta == pytest.approx(0.75)
    assert st.alpha1 == pytest.approx(1.0)
    assert st.beta1 == pytest.approx(-1.0)
    assert st.alpha2 == pytest.approx(-2.0)
    assert st.beta2 == pytest.approx(0.0)


def test_power_half_at_one():
    st = eval_schedule(Schedule.power(1.0, 0.5), 1.0)
    assert st.alpha == 1.0
    assert st.alpha1 == 0.5
    assert st.alpha2 == -0.25


def test_power_domain_error_at_zero():
    with pytest.raises(ScheduleDomainError) as exc:
        eval_schedule(Schedule.power(1.0, 0.5), 0.0)
    assert "alpha1" in str(exc.value)


def test_negative_time_rejected():
    with pytest.raises(ScheduleDomainError):
        Schedule.linear().eval(-0.1)


def test_custom_schedule_fd_validation():
    # wrong derivative callback must be rejected at construction
    with pytest.raises(ValueError):
        Schedule.custom(alpha=lambda t: 1 - t, beta=lambda t: t,
                        alpha1=lambda t: 1.0, beta1=lambda t: 1.0,
                        alpha2=lambda t: 0.0, beta2=lambda t: 0.0)


def test_custom_schedule_accepts_consistent_callbacks():
    s = Schedule.custom(alpha=lambda t: math.cos(t), beta=lambda t: math.sin(t),
                        alpha1=lambda t: -math.sin(t), beta1=lambda t: math.cos(t),
                        alpha2=lambda t: -math.cos(t), beta2=lambda t: -math.sin(t))
    st = s.eval(0.3)
    assert st.alpha == pytest.approx(math.cos(0.3))


@pytest.mark.parametrize("s", [Schedule.linear(), Schedule.power(1.0, 0.5),
                               Schedule.power(0.8, 1.5, 1.2, 0.7)])
def test_fd_consistency_invariant(s):
    h = 1e-5
    for t in (0.05, 0.2, 0.55, 0.9):
        st = s.eval(t)
        fa = (s.eval(t + h).alpha - s.eval(t - h).alpha) / (2 * h)
        fb = (s.eval(t + h).beta - s.eval(t - h).beta) / (2 * h)
        assert abs(fa - st.alpha1) / max(abs(st.alpha1), 1.0) <= 1e-6
        assert abs(fb - st.beta1) / max(abs(st.beta1), 1.0) <= 1e-6


def test_power_small_t_log_slope():
    s = Schedule.power(1.0, 0.5)
    tg = TimeGrid(64, 4.0, 0.05, 1, 0.5)
    ts = np.geomspace(tg.T0, tg.T0 * 1e3, 64)
    alphas = np.array([s.alpha_beta(t)[0] for t in ts])
    slope = np.polyfit(np.log(ts), np.log(alphas), 1)[0]
    assert abs(slope - 0.5) <= 1e-3


def test_timegrid_invariants():
    tg = TimeGrid(64, 4.0, 0.05, 1, 0.5)
    assert tg.T0 < tg.T_star < 1.0
    part = tg.partition()
    assert part[0] == tg.T0 and part[-1] == 1.0
    assert np.all(np.diff(part) > 0)
    # dyadic except the final clamp
    assert np.allclose(part[1:-1] / part[:-2], 2.0)
    with pytest.raises(ValueError):
        TimeGrid(64, 4.0, 0.2, 1, 0.5)
    with pytest.raises(ValueError):
        TimeGrid(64, 0.5, 0.05, 1, 0.5)   # T0 > T_star


def test_assumptions_linear_trivial():
    tg = TimeGrid(64, 2.0, 0.05, 1, 1.0)
    rep = check_assumptions(Schedule.linear(), tg)
    assert rep.passed
    assert rep.integral_value == 0.0        # alpha'' = beta'' = 0
    assert 1.0 <= rep.D0 <= 2.0 + 1e-9


def test_assumptions_integral_vs_trapezoid_oracle():
    # oracle: 1e6-point trapezoid of (alpha''^2 + beta''^2) in log time
    s = Schedule.power(1.0, 0.5)
    N, gamma = 256, 1.0
    tg = TimeGrid(N, 4.0, 0.05, 1, 0.5)
    val = second_deriv_integral(s, tg.T0, N ** (-gamma))
    us = np.linspace(math.log(tg.T0), math.log(N ** (-gamma)), 10 ** 6)
    ts = np.exp(us)
    integrand = (ts ** -3.0 / 16.0) * ts      # beta'' = 0 for kappa_tilde = 1
    oracle = np.trapezoid(integrand, us)
    assert abs(val - oracle) / oracle <= 1e-6


def test_assumptions_invalid_beta_fails():
    # beta_t = 2 violates both the range and the D0 cap
    s = Schedule.custom(alpha=lambda t: 1.0, beta=lambda t: 2.0,
                        alpha1=lambda t: 0.0, beta1=lambda t: 0.0,
                        alpha2=lambda t: 0.0, beta2=lambda t: 0.0)
    tg = TimeGrid(64, 2.0, 0.05, 1, 1.0)
    rep = check_assumptions(s, tg)
    assert not rep.passed
    failed = {c.name for c in rep.checks if c.passed is False}
    assert "beta-range" in failed and "D0-sandwich" in failed
    witness = [c for c in rep.checks if c.name == "D0-sandwich"][0]
    assert math.isfinite(witness.witness_t)


# -- rebasing -----------------------------------------------------------------

def test_rebase_collapses_at_t_star():
    s = Schedule.power(1.0, 0.5)
    rb = rebase_schedule(s, 0.3)
    a, b = rb.alpha_beta(0.3)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert b == pytest.approx(1.0)


def test_rebase_paper_line_endpoint():
    # straight-line schedule in the small-t-data convention: alpha=t, beta=1-t
    line = Schedule.power(1.0, 1.0, 1.0, 1.0)
    rb = rebase_schedule(line, 0.5)
    a, b = rb.alpha_beta(1.0)
    assert b == pytest.approx(0.0)
    assert a == pytest.approx(1.0)


def test_rebase_power_value_against_hand_expansion():
    s = Schedule.power(1.0, 0.5)
    rb = rebase_schedule(s, 0.25)
    t, t_star = 0.75, 0.25
    beta_r = (1 - t) / (1 - t_star)
    alpha_r = math.sqrt(t - beta_r ** 2 * t_star)
    a, b = rb.alpha_beta(t)
    assert a == pytest.approx(alpha_r, rel=1e-15)
    assert b == pytest.approx(beta_r, rel=1e-15)


def test_rebase_derivatives_match_fd():
    s = Schedule.power(1.0, 0.5)
    rb = rebase_schedule(s, 0.25)
    h = 1e-5
    for t in (0.55, 0.75, 0.95):
        st = rb.eval(t)
        fa = (rb.eval(t + h).alpha - rb.eval(t - h).alpha) / (2 * h)
        fa2 = (rb.eval(t + h).alpha1 - rb.eval(t - h).alpha1) / (2 * h)
        assert abs(fa - st.alpha1) / max(abs(st.alpha1), 1.0) <= 1e-6
        assert abs(fa2 - st.alpha2) / max(abs(st.alpha2), 1.0) <= 1e-6


def test_rebase_alpha_lower_bound():
    # rebased alpha^2 >= 1/(2 D0) for t >= 2 t_star
    s = Schedule.power(1.0, 0.5)
    tg = TimeGrid(64, 4.0, 0.05, 1, 0.5)
    D0 = check_assumptions(s, tg).D0
    rb = rebase_schedule(s, 0.25)
    for t in np.linspace(0.5, 1.0, 32):
        a, _ = rb.alpha_beta(t)
        assert a * a >= 1.0 / (2.0 * D0) - 1e-12


def test_rebase_negative_radicand_error():
    # reversed-orientation linear: alpha decreasing, radicand goes negative
    rb = RebasedSchedule(Schedule.linear(), 0.5)
    with pytest.raises(ScheduleDomainError) as exc:
        rb.eval(0.9)
    assert "radicand" in str(exc.value)


def test_eval_batch_matches_scalar():
    for s in (Schedule.linear(), Schedule.power(1.0, 0.5)):
        ts = np.array([0.1, 0.4, 0.9])
        batch = s.eval_batch(ts)
        for i, t in enumerate(ts):
            st = s.eval(float(t))
            for j, name in enumerate(("alpha", "beta", "alpha1", "beta1",
                                      "alpha2", "beta2")):
                v = batch[j] if np.ndim(batch[j]) == 0 else batch[j][i]
                assert float(v) == pytest.approx(getattr(st, name), abs=1e-15)
