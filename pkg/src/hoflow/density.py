"""Target densities on the cube I^d = [-1,1]^d and Besov smoothness tooling.

Every density evaluates to exactly 0 outside the cube, integrates to 1
(checked by quadrature at construction), and is sandwiched between C0^-1
and C0 on the cube with a finite reported C0.  Besov membership is declared
metadata: the seminorm estimator validates it on a finite modulus grid
rather than proving it.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .quadrature import box_nodes
from .rng import stream


class DensityConfigError(ValueError):
    pass


INF = math.inf


@dataclass
class BesovParams:
    """Declared smoothness (s, p', q') plus boundary smoothness s_check."""

    s: float
    p_prime: float = INF
    q_prime: float = INF
    s_check: float = None

    def __post_init__(self):
        if self.s <= 0 or self.p_prime <= 0 or self.q_prime <= 0:
            raise ValueError("Besov parameters must be positive")
        if self.s_check is not None and self.s_check <= max(6.0 * self.s, 1.0):
            raise ValueError("boundary smoothness must exceed max(6s, 1)")

    def to_dict(self):
        enc = lambda v: "inf" if v is not None and math.isinf(v) else v
        return {"s": self.s, "p_prime": enc(self.p_prime),
                "q_prime": enc(self.q_prime), "s_check": self.s_check}


def _check_mass(dens, d, tol=1e-6):
    n = {1: 2048, 2: 160, 3: 40}[d]
    pts, w = box_nodes([-1.0] * d, [1.0] * d, n)
    mass = float(np.dot(dens.eval(pts), w))
    if abs(mass - 1.0) > tol:
        raise DensityConfigError(f"density mass {mass} differs from 1 by > {tol}")
    return mass


class Density:
    """A normalized density on I^d with evaluation and exact/seeded sampling."""

    def __init__(self, kind, d, besov=None):
        if d < 1 or d > 3:
            raise DensityConfigError("dimension must be 1, 2 or 3")
        self.kind = kind
        self.d = d
        self.besov = besov or BesovParams(s=1.0)
        self.C0 = math.nan

    # -- constructors ---------------------------------------------------
    @staticmethod
    def uniform(d=1, besov=None):
        self = Density("uniform-cube", d, besov)
        self.C0 = 2.0 ** d
        _check_mass(self, d)
        return self

    @staticmethod
    def mixture(means, sigmas, weights, besov=None):
        """Gaussian mixture truncated to I^d, normalized in closed form."""
        self = Density("truncated-gaussian-mixture", np.atleast_2d(means).shape[1], besov)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.sigmas = np.asarray(sigmas, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights <= 0) or np.any(self.sigmas <= 0):
            raise DensityConfigError("mixture weights and sigmas must be positive")
        self.weights = self.weights / self.weights.sum()
        # per-component truncated mass: prod_i Phi((1-mu)/s) - Phi((-1-mu)/s)
        lo = (-1.0 - self.means) / self.sigmas[:, None]
        hi = (1.0 - self.means) / self.sigmas[:, None]
        self._cdf_lo = ndtr(lo)
        self._cdf_hi = ndtr(hi)
        self._comp_mass = np.prod(self._cdf_hi - self._cdf_lo, axis=1)
        self._Z = float(np.dot(self.weights, self._comp_mass))
        _check_mass(self, self.d)
        self._measure_C0()
        return self

    @staticmethod
    def from_expansion(expansion, besov=None, normalize=True):
        """Density backed by a B-spline expansion (coefficients rescaled to mass 1)."""
        d = expansion.d
        self = Density("bspline-built", d, besov)
        self.expansion = expansion
        if normalize:
            n = {1: 2048, 2: 160, 3: 40}[d]
            pts, w = box_nodes([-1.0] * d, [1.0] * d, n)
            mass = float(np.dot(expansion.eval(pts), w))
            if mass <= 0:
                raise DensityConfigError("expansion has non-positive mass")
            expansion.scale_coefficients(1.0 / mass)
        _check_mass(self, d)
        self._measure_C0()
        if not math.isfinite(self.C0):
            raise DensityConfigError("bspline-built density is not positive on the cube")
        return self

    @staticmethod
    def bump_product(d=1, degree=8, floor=0.5, besov=None):
        """floor + prod_i (1 - x_i^2)^degree, normalized.

        Smooth in the interior, polynomial of the given degree at the
        boundary faces; the positive floor keeps Assumption-style two-sided
        bounds valid.
        """
        self = Density("bump-product", d, besov)
        if floor <= 0:
            raise DensityConfigError("floor must be positive")
        self.degree = int(degree)
        self.floor = float(floor)
        n = {1: 2048, 2: 160, 3: 40}[d]
        pts, w = box_nodes([-1.0] * d, [1.0] * d, n)
        raw = self._bump_raw(pts)
        self._Z = float(np.dot(raw, w))
        _check_mass(self, d)
        self._measure_C0()
        return self

    # -- evaluation -------------------------------------------------------
    def _bump_raw(self, pts):
        return self.floor + np.prod((1.0 - pts ** 2).clip(min=0.0) ** self.degree, axis=1)

    def eval(self, pts):
        """Density values at an (n, d) array of points; 0 outside I^d."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inside = np.all(np.abs(pts) <= 1.0, axis=1)
        out = np.zeros(pts.shape[0])
        if not inside.any():
            return out
        p = pts[inside]
        if self.kind == "uniform-cube":
            vals = np.full(p.shape[0], 2.0 ** -self.d)
        elif self.kind == "truncated-gaussian-mixture":
            vals = np.zeros(p.shape[0])
            for k in range(len(self.weights)):
                z = (p - self.means[k]) / self.sigmas[k]
                comp = np.exp(-0.5 * (z ** 2).sum(axis=1)) / (
                    math.sqrt(2.0 * math.pi) * self.sigmas[k]) ** self.d
                vals += self.weights[k] * comp
            vals /= self._Z
        elif self.kind == "bspline-built":
            vals = self.expansion.eval(p)
        elif self.kind == "bump-product":
            vals = self._bump_raw(p) / self._Z
        else:
            raise DensityConfigError(f"unknown kind {self.kind}")
        out[inside] = vals
        return out

    def _measure_C0(self, n_grid=None):
        n = n_grid or {1: 4096, 2: 128, 3: 48}[self.d]
        axes = [np.linspace(-1.0, 1.0, n)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        vals = self.eval(pts)
        lo, hi = float(vals.min()), float(vals.max())
        self.C0 = max(hi, 1.0 / lo) if lo > 0 else math.inf
        return self.C0

    # -- sampling ---------------------------------------------------------
    def sample(self, n, seed):
        """n points in I^d, deterministic given seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = stream(seed, f"density-{self.kind}")
        if self.kind == "uniform-cube":
            return rng.uniform(-1.0, 1.0, size=(n, self.d))
        if self.kind == "truncated-gaussian-mixture":
            probs = self.weights * self._comp_mass
            probs = probs / probs.sum()
            ks = rng.choice(len(probs), size=n, p=probs)
            u = rng.uniform(size=(n, self.d))
            lo, hi = self._cdf_lo[ks], self._cdf_hi[ks]
            x = ndtri(lo + u * (hi - lo))
            return self.means[ks] + self.sigmas[ks, None] * x
        # rejection from the uniform envelope
        env = self._envelope()
        out = np.empty((n, self.d))
        got, tried = 0, 0
        while got < n:
            m = max(2 * (n - got), 1024)
            cand = rng.uniform(-1.0, 1.0, size=(m, self.d))
            u = rng.uniform(size=m)
            acc = u * env < self.eval(cand)
            k = min(int(acc.sum()), n - got)
            out[got:got + k] = cand[acc][:k]
            got += k
            tried += m
            if tried > 4096 and got / tried < 1e-3:
                raise DensityConfigError("rejection sampler acceptance below 1e-3")
        return out

    def _envelope(self):
        n = {1: 4096, 2: 128, 3: 48}[self.d]
        axes = [np.linspace(-1.0, 1.0, n)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        return float(self.eval(pts).max()) * 1.05 + 1e-12

    def describe(self):
        d = {"kind": self.kind, "d": self.d, "C0": self.C0,
             "besov": self.besov.to_dict()}
        if self.kind == "truncated-gaussian-mixture":
            d.update(means=self.means.tolist(), sigmas=self.sigmas.tolist(),
                     weights=self.weights.tolist())
        if self.kind == "bump-product":
            d.update(degree=self.degree, floor=self.floor)
        return d


def eval_density(D: Density, x):
    return D.eval(x)


def sample_density(D: Density, n: int, seed: int):
    return D.sample(n, seed)


# -- modulus of smoothness and Besov seminorm ------------------------------

def _directions(d, n_dirs, seed=1234):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    rng = stream(seed, "modulus-directions")
    v = rng.normal(size=(n_dirs, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def modulus_of_smoothness(f, r, p, t, d=1, n_dirs=64, n_mags=64, grid_n=None):
    """r-th modulus of smoothness sup_{|h|<=t} ||Delta_h^r f||_p on I^d.

    The r-th difference at x is set to 0 whenever any node x + j*h leaves
    the cube, matching the definition's case split.  The sup over h is
    sampled over n_dirs directions and n_mags magnitudes; the L^p norm over
    x is taken on a uniform grid whose resolution is at most t/8.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if p <= 0:
        raise ValueError("p must be positive")
    if grid_n is None:
        per_axis = int(min(max(np.ceil(2.0 / (t / 8.0)), 64), {1: 2048, 2: 96, 3: 24}[d]))
    else:
        per_axis = grid_n
    axes = [np.linspace(-1.0, 1.0, per_axis)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([g.ravel() for g in grids], axis=-1)
    cell = (2.0 / (per_axis - 1)) ** d

    coeffs = np.array([math.comb(r, j) * (-1) ** (r - j) for j in range(r + 1)])
    dirs = _directions(d, n_dirs)
    mags = np.linspace(t / n_mags, t, n_mags)
    best = 0.0
    for e in dirs:
        for m in mags:
            h = m * e
            delta = np.zeros(xs.shape[0])
            valid = np.ones(xs.shape[0], dtype=bool)
            vals = []
            for j in range(r + 1):
                pj = xs + j * h
                valid &= np.all(np.abs(pj) <= 1.0, axis=1)
                vals.append(f(pj))
            for j in range(r + 1):
                delta += coeffs[j] * vals[j]
            delta = np.where(valid, delta, 0.0)
            if math.isinf(p):
                norm = float(np.max(np.abs(delta)))
            else:
                norm = float((np.sum(np.abs(delta) ** p) * cell) ** (1.0 / p))
            best = max(best, norm)
    return best


@dataclass
class BesovEstimate:
    value: float
    in_space: bool
    r: int
    small_t_slope: float

    def to_dict(self):
        return {"value": self.value, "in_space": self.in_space, "r": self.r,
                "small_t_slope": self.small_t_slope}


def besov_seminorm_estimate(f, s, p, q, t_grid, d=1, **modulus_kw) -> BesovEstimate:
    """Besov seminorm via the modulus on a log-spaced t grid.

    q = inf: sup_t t^-s w(t); otherwise (int (t^-s w)^q dt/t)^(1/q) by
    trapezoid in log t.  Divergence as t -> 0 (the estimator growing over
    the smallest decade) flags the function as not in the declared space.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if t_grid[-1] / t_grid[0] < 0.999e3:
        raise ValueError("t grid must span at least 3 decades")
    r = int(math.floor(s)) + 1
    w = np.array([modulus_of_smoothness(f, r, p, t, d=d, **modulus_kw)
                  for t in t_grid])
    g = t_grid ** (-s) * w
    # slope of log g over the smallest decade
    mask = t_grid <= t_grid[0] * 10.0
    gs = np.maximum(g[mask], 1e-300)
    slope = float(np.polyfit(np.log(t_grid[mask]), np.log(gs), 1)[0]) \
        if mask.sum() >= 2 and gs.max() > 1e-250 else 0.0
    diverging = slope < -0.1 and g[mask].max() > 2.0 * np.median(g[~mask] + 1e-300)
    if math.isinf(q):
        val = float(g.max())
    else:
        lt = np.log(t_grid)
        val = float(np.trapezoid(g ** q, lt) ** (1.0 / q))
    return BesovEstimate(value=val, in_space=not diverging, r=r,
                         small_t_slope=slope)
