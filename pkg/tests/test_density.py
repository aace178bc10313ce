import math

import numpy as np
import pytest

from hoflow.density import (BesovParams, Density, DensityConfigError,
                            besov_seminorm_estimate, eval_density,
                            modulus_of_smoothness, sample_density)


def test_uniform_values():
    u = Density.uniform(1)
    assert eval_density(u, np.array([[0.0]]))[0] == 0.5
    u2 = Density.uniform(2)
    assert eval_density(u2, np.array([[2.0, 0.0]]))[0] == 0.0
    assert u.C0 == 2.0


def test_mixture_matches_quadrature_normalized_formula():
    # oracle: normalization constant from a 1e5-node trapezoid rule
    means, sigmas, weights = [[0.3]], [0.5], [1.0]
    D = Density.mixture(means, sigmas, weights)
    ys = np.linspace(-1, 1, 100001)
    raw = np.exp(-0.5 * ((ys - 0.3) / 0.5) ** 2) / (math.sqrt(2 * math.pi) * 0.5)
    Z = np.trapezoid(raw, ys)
    xs = np.linspace(-0.9, 0.9, 7)
    want = np.exp(-0.5 * ((xs - 0.3) / 0.5) ** 2) / (math.sqrt(2 * math.pi) * 0.5) / Z
    got = eval_density(D, xs[:, None])
    assert np.abs(got - want).max() <= 1e-6


def test_density_mass_is_one():
    from hoflow.quadrature import box_nodes
    for D in (Density.uniform(2), Density.bump_product(1),
              Density.mixture([[0.2], [-0.4]], [0.3, 0.5], [0.5, 0.5])):
        pts, w = box_nodes([-1.0] * D.d, [1.0] * D.d, 200 if D.d == 1 else 96)
        assert abs(float(D.eval(pts) @ w) - 1.0) <= 1e-6


def test_sampling_deterministic_and_mean_band():
    u = Density.uniform(1)
    a = sample_density(u, 10 ** 5, seed=7)
    b = sample_density(u, 10 ** 5, seed=7)
    assert np.array_equal(a, b)
    sigma = 2.0 / math.sqrt(12.0)
    band = 4.0 * sigma / math.sqrt(10 ** 5)
    assert abs(a.mean()) <= band


def test_mixture_component_counts():
    D = Density.mixture([[0.5], [-0.5]], [0.1, 0.1], [0.7, 0.3])
    pts = sample_density(D, 10 ** 5, seed=3)
    n_right = int((pts[:, 0] > 0).sum())
    expect = 0.7 * 10 ** 5
    assert abs(n_right - expect) <= 4.0 * math.sqrt(10 ** 5)


def test_sampling_mixture_respects_support():
    D = Density.mixture([[0.9]], [0.8], [1.0])
    pts = sample_density(D, 4096, seed=1)
    assert np.all(np.abs(pts) <= 1.0)


def test_rejection_sampler_bump():
    D = Density.bump_product(1, degree=4, floor=0.3)
    pts = sample_density(D, 8192, seed=5)
    assert np.all(np.abs(pts) <= 1.0)
    # histogram L1 distance shrinks roughly like n^-1/2 on a fixed 64-bin grid
    edges = np.linspace(-1, 1, 65)
    mids = 0.5 * (edges[1:] + edges[:-1])
    ref = D.eval(mids[:, None]) * (edges[1] - edges[0])
    def l1(n):
        h = np.histogram(sample_density(D, n, seed=11)[:, 0], bins=edges)[0] / n
        return float(np.abs(h - ref).sum())
    assert l1(65536) < l1(1024)


def test_besov_params_validation():
    with pytest.raises(ValueError):
        BesovParams(s=1.0, s_check=2.0)     # needs > max(6s, 1)
    bp = BesovParams(s=1.0, s_check=6.5)
    assert bp.s_check == 6.5
    with pytest.raises(ValueError):
        BesovParams(s=-1.0)


def test_bspline_built_density_agrees_with_expansion():
    from hoflow.bspline import fit_expansion
    base = Density.mixture([[0.0]], [0.6], [1.0])
    E = fit_expansion(base, 64, BesovParams(s=1.0), d=1, ell=1)
    D = Density.from_expansion(E, besov=BesovParams(s=1.0))
    xs = np.linspace(-0.99, 0.99, 257)[:, None]
    assert np.abs(D.eval(xs) - E.eval(xs)).max() <= 1e-12


# -- modulus of smoothness -----------------------------------------------------

def const_f(pts):
    return np.ones(pts.shape[0])


def lin_f(pts):
    return pts[:, 0]


def abs_f(pts):
    return np.abs(pts[:, 0])


def test_modulus_constant_zero():
    assert modulus_of_smoothness(const_f, 2, math.inf, 0.1) == 0.0


def test_modulus_linear_first_order():
    w = modulus_of_smoothness(lin_f, 1, math.inf, 0.1)
    assert w == pytest.approx(0.1, rel=1e-9)


def test_modulus_abs_second_order():
    # brute force over the h grid: the kink doubles the first difference
    w = modulus_of_smoothness(abs_f, 2, math.inf, 0.1)
    assert w == pytest.approx(0.2, rel=1e-2)


def test_modulus_monotone_in_t():
    vals = [modulus_of_smoothness(abs_f, 2, math.inf, t) for t in (0.05, 0.1, 0.2)]
    assert vals[0] <= vals[1] <= vals[2]


def test_modulus_argument_errors():
    with pytest.raises(ValueError):
        modulus_of_smoothness(lin_f, 0, 2.0, 0.1)
    with pytest.raises(ValueError):
        modulus_of_smoothness(lin_f, 1, -1.0, 0.1)


def test_besov_seminorm_linear():
    grid = np.geomspace(1e-3, 1.0, 13)
    est = besov_seminorm_estimate(lin_f, 1.0, math.inf, math.inf, grid)
    assert est.in_space
    assert est.value == pytest.approx(1.0, rel=1e-6)


def test_besov_seminorm_constant_zero():
    grid = np.geomspace(1e-3, 1.0, 13)
    est = besov_seminorm_estimate(const_f, 1.0, math.inf, math.inf, grid)
    assert est.value == 0.0


def test_besov_seminorm_flags_divergence():
    grid = np.geomspace(1e-3, 1.0, 13)
    est = besov_seminorm_estimate(abs_f, 1.5, math.inf, math.inf, grid)
    assert not est.in_space


def test_besov_grid_must_span_three_decades():
    with pytest.raises(ValueError):
        besov_seminorm_estimate(lin_f, 1.0, math.inf, math.inf,
                                np.geomspace(0.01, 0.5, 8))
