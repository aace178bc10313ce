"""Cardinal/tensor-product B-splines and the adaptive two-part expansion.

Convention: N_0 is the indicator of [0, 1) and N_ell = N_{ell-1} * N_0, so
the order-ell cardinal spline is piecewise degree ell with support
[0, ell+1].  The tensor basis of order ell is

    M_{k,j}(x) = prod_i N_ell(2^{k_i} x_i - j_i),

with per-axis shifts admissible when -2^k - ell <= j <= 2^k.

Expansions carry a flag per term: full-cube terms are gated by the
indicator of I^d, contracted-cube terms by the cube of half-width
1 - N^(-(1/kappa - delta)/d).  Coefficients come from ridge-regularized
least squares on a Gauss-Legendre grid; the existence theorems are
non-constructive, and only the measured error and its rate are asserted
downstream.
"""

import math

import numpy as np

from .quadrature import box_nodes, gauss_moments


class FitConfigError(ValueError):
    pass


def cardinal_bspline(ell: int, x):
    """Order-ell cardinal B-spline (degree ell, support [0, ell+1]).

    Cox-de Boor on uniform knots:
    N_m(x) = (x N_{m-1}(x) + (m+1-x) N_{m-1}(x-1)) / m.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    x = np.asarray(x, dtype=float)
    if ell == 0:
        return ((x >= 0.0) & (x < 1.0)).astype(float)
    prev = cardinal_bspline(ell - 1, x)
    prev_left = cardinal_bspline(ell - 1, x - 1.0)
    return (x * prev + (ell + 1.0 - x) * prev_left) / ell


def tensor_bspline(k, j, ell: int, x):
    """M_{k,j}(x) = prod_i N_ell(2^{k_i} x_i - j_i) for points x of shape (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=int))
    j = np.atleast_1d(np.asarray(j, dtype=int))
    if not (x.shape[1] == k.size == j.size):
        raise ValueError("dimension mismatch between k, j, x")
    out = np.ones(x.shape[0])
    for i in range(k.size):
        out *= cardinal_bspline(ell, (2.0 ** k[i]) * x[:, i] - j[i])
    return out


FULL = "F"
CONTRACTED = "C"


class BSplineExpansion:
    """Gated linear combination of tensor B-splines.

    terms: list of (k tuple, j tuple, A float, flag).  Evaluation is exactly
    0 for ||x||_inf >= 1 (full-cube gate) and contracted terms vanish
    outside the contracted cube.
    """

    def __init__(self, d, ell, budget, contraction, terms=None):
        self.d = int(d)
        self.ell = int(ell)
        self.budget = int(budget)
        self.contraction = float(contraction)
        self.terms = terms or []
        self.fit_error = math.nan
        self.fit_quad_n = None
        self.coef_bound = math.nan
        self.coef_bound_ok = None

    def __len__(self):
        return len(self.terms)

    def scale_coefficients(self, c: float):
        self.terms = [(k, j, A * c, flag) for (k, j, A, flag) in self.terms]

    def eval(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        sup = np.max(np.abs(pts), axis=1)
        full_gate = sup < 1.0
        contr_gate = sup <= self.contraction
        out = np.zeros(pts.shape[0])
        for (k, j, A, flag) in self.terms:
            col = tensor_bspline(k, j, self.ell, pts)
            out += A * np.where(full_gate if flag == FULL else contr_gate, col, 0.0)
        return out

    # -- text serialization (bit-exact round trip) ------------------------
    def dumps(self) -> str:
        lines = [f"{self.d} {self.ell} {self.budget} {float(self.contraction)!r}"]
        for (k, j, A, flag) in self.terms:
            ks = " ".join(str(v) for v in k)
            js = " ".join(str(v) for v in j)
            lines.append(f"{ks} {js} {float(A)!r} {flag}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def loads(text: str) -> "BSplineExpansion":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        d, ell, budget, contraction = lines[0].split()
        E = BSplineExpansion(int(d), int(ell), int(budget), float(contraction))
        d = E.d
        for ln in lines[1:]:
            parts = ln.split()
            k = tuple(int(v) for v in parts[:d])
            j = tuple(int(v) for v in parts[d:2 * d])
            A = float(parts[2 * d])
            flag = parts[2 * d + 1]
            E.terms.append((k, j, A, flag))
        return E

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @staticmethod
    def load(path) -> "BSplineExpansion":
        with open(path) as fh:
            return BSplineExpansion.loads(fh.read())


def _axis_shifts(k, ell):
    return range(-(2 ** k) - ell, 2 ** k + 1)


def level_indices(k, d, ell):
    """All admissible (k, j) multi-indices at isotropic level k."""
    axes = [list(_axis_shifts(k, ell))] * d
    out = []
    grids = np.meshgrid(*axes, indexing="ij")
    js = np.stack([g.ravel() for g in grids], axis=-1)
    for row in js:
        out.append(((k,) * d, tuple(int(v) for v in row)))
    return out


def _design_columns(indices, ell, pts, gate):
    cols = np.empty((pts.shape[0], len(indices)))
    for c, (k, j) in enumerate(indices):
        cols[:, c] = tensor_bspline(k, j, ell, pts)
    return cols * gate[:, None]


def _quad_grid(d, n_quad):
    n = n_quad or {1: 2048, 2: 96, 3: 32}[d]
    return box_nodes([-1.0] * d, [1.0] * d, n) + (n,)


def fit_expansion(f, N, params, structure="single", d=1, ell=1, kappa=0.5,
                  delta=0.05, r_norm=2.0, n_quad=None, ridge=1e-12):
    """Least-squares expansion on the theorem's resolution ladder.

    `f` is a callable on (n, d) points or a Density.  The uniform part
    fills dyadic levels 0..K within the budget; when the declared (s, p')
    give a finite nu = (s - omega)/(2 omega), the remaining budget is
    spent on adaptive levels K+1..K* with n_k terms chosen greedily by
    weighted residual correlation.  structure='two-part' adds 2N
    contracted-cube terms fit to the residual, mirroring the two-norm
    approximation lemma.
    """
    feval = f.eval if hasattr(f, "eval") else f
    if N < 2 ** d:
        raise FitConfigError("budget below 2^d")
    if (ell + 3) ** d > N:
        raise FitConfigError(f"budget {N} below the level-0 cover {(ell + 3) ** d}")
    contraction = 1.0 - float(N) ** (-(1.0 / kappa - delta) / d)
    E = BSplineExpansion(d, ell, N, contraction)

    pts, w, nq = _quad_grid(d, n_quad)
    fvals = feval(pts)
    sup = np.max(np.abs(pts), axis=1)
    full_gate = (sup < 1.0).astype(float)
    contr_gate = (sup <= contraction).astype(float)

    # uniform levels 0..K within budget
    K = -1
    uniform = []
    while True:
        nxt = level_indices(K + 1, d, ell)
        if len(uniform) + len(nxt) > N:
            break
        uniform += nxt
        K += 1
    indices = list(uniform)
    flags = [FULL] * len(indices)

    # adaptive levels K+1..K* when nu is finite
    s = params.s
    omega = d * max(1.0 / params.p_prime - 1.0 / r_norm, 0.0)
    nu = (s - omega) / (2.0 * omega) if omega > 0 else math.inf
    remaining = N - len(indices)
    if math.isfinite(nu) and remaining > 0:
        Phi = _design_columns(indices, ell, pts, full_gate)
        coef = _solve(Phi, w, fvals, ridge)
        res = fvals - Phi @ coef
        K_star = K + max(1, math.ceil((1.0 + math.log(max(N, 2))) / max(nu, 1e-9)))
        weights_left = np.array([2.0 ** (-nu * (k - K)) for k in range(K + 1, K_star + 1)])
        alloc = np.floor(remaining * weights_left / weights_left.sum()).astype(int)
        alloc[0] += remaining - alloc.sum()
        for lvl, n_k in zip(range(K + 1, K_star + 1), alloc):
            if n_k <= 0:
                continue
            picked = _greedy_pick(level_indices(lvl, d, ell), n_k, ell, pts, w,
                                  res, full_gate)
            indices += picked
            flags += [FULL] * len(picked)
            Phi = _design_columns(indices, ell, pts, full_gate)
            coef = _solve(Phi, w, fvals, ridge)
            res = fvals - Phi @ coef

    Phi = _design_with_flags(indices, flags, ell, pts, full_gate, contr_gate)
    coef = _solve(Phi, w, fvals, ridge)

    if structure == "two-part":
        res = fvals - Phi @ coef
        extra = []
        for lvl in (K + 1, K + 2):
            picked = _greedy_pick(level_indices(lvl, d, ell), N, ell, pts, w,
                                  res, contr_gate)
            extra += picked
            if len(extra) >= 2 * N:
                extra = extra[:2 * N]
                break
        indices += extra
        flags += [CONTRACTED] * len(extra)
        Phi = _design_with_flags(indices, flags, ell, pts, full_gate, contr_gate)
        coef = _solve(Phi, w, fvals, ridge)
    elif structure != "single":
        raise FitConfigError(f"unknown structure {structure!r}")

    E.terms = [(k, j, float(A), fl)
               for (k, j), A, fl in zip(indices, coef, flags)]
    res = fvals - Phi @ coef
    E.fit_error = float(np.sqrt(np.dot(w, res ** 2)))
    E.fit_quad_n = nq

    # coefficient magnitude vs the theorem's cap (modulo the function scale)
    exponent = (1.0 / max(nu, 1e-12) + 1.0 / d) * max(d / params.p_prime - s, 0.0) \
        if math.isfinite(nu) else (1.0 / d) * max(d / params.p_prime - s, 0.0)
    scale = max(1.0, 2.0 * float(np.abs(fvals).max()))
    E.coef_bound = scale * float(N) ** exponent
    E.coef_bound_ok = bool(max(abs(A) for (_, _, A, _) in E.terms) <= E.coef_bound)
    return E


def _design_with_flags(indices, flags, ell, pts, full_gate, contr_gate):
    cols = np.empty((pts.shape[0], len(indices)))
    for c, ((k, j), fl) in enumerate(zip(indices, flags)):
        gate = full_gate if fl == FULL else contr_gate
        cols[:, c] = tensor_bspline(k, j, ell, pts) * gate
    return cols


def _solve(Phi, w, fvals, ridge):
    Wp = Phi * w[:, None]
    G = Phi.T @ Wp
    G[np.diag_indices_from(G)] += ridge
    return np.linalg.solve(G, Wp.T @ fvals)


def _greedy_pick(candidates, n_k, ell, pts, w, res, gate):
    scores = []
    wr = w * res
    for (k, j) in candidates:
        col = tensor_bspline(k, j, ell, pts) * gate
        nrm = math.sqrt(max(np.dot(w, col ** 2), 1e-300))
        scores.append(abs(np.dot(wr, col)) / nrm)
    order = np.argsort(np.array(scores))[::-1]
    return [candidates[i] for i in order[:n_k]]


def eval_expansion(E: BSplineExpansion, x):
    return E.eval(x)


def l2_error(E: BSplineExpansion, f, region="full", N=None, kappa=0.5,
             delta=0.05, n_quad=None):
    """Quadrature L2 distance between E and f on the region.

    region='boundary-strip' uses the frame I^d minus the inner cube of
    half-width 1 - N^-(1 - kappa*delta).
    """
    feval = f.eval if hasattr(f, "eval") else f
    d = E.d
    pts, w, _ = _quad_grid(d, n_quad or E.fit_quad_n)
    diff2 = (E.eval(pts) - feval(pts)) ** 2
    if region == "full":
        return float(np.sqrt(np.dot(w, diff2)))
    if region == "boundary-strip":
        if N is None:
            N = E.budget
        width = float(N) ** (-(1.0 - kappa * delta))
        inner = np.max(np.abs(pts), axis=1) <= 1.0 - width
        return float(np.sqrt(np.dot(w[~inner], diff2[~inner])))
    raise ValueError(f"unknown region {region!r}")


def gauss_convolved_features(E: BSplineExpansion, st, xs, n_nodes=128,
                             window_sigmas=12.0):
    """(f_tilde, f2, f3): Gaussian-convolved expansion moments at points xs.

        f_tilde = int K(x - beta y; alpha) E(y) dy
        f2      = int (x - beta y)/alpha K E dy
        f3      = int y K E dy
    """
    if st.alpha <= 0:
        raise ZeroDivisionError("alpha_t must be positive")
    m0, mu, my = gauss_moments(st.alpha, st.beta, xs, E.eval, d=E.d,
                               n_nodes=n_nodes, window_sigmas=window_sigmas)
    return m0, mu, my


def assemble_f4(features, st, clamp, C5, N, indicator="coordinate"):
    """Acceleration surrogate built from the convolved features.

    f1 = max(f_tilde, clamp); the output is

        (c_u f2 + c_y f3) / f1 * 1[|f2/f1| <= C5 sqrt(log N)] * 1[|f3/f1| <= C5]

    with (c_u, c_y) the schedule scalars of the posterior-moment
    decomposition of the Bayes acceleration (accel_u_coeff/accel_y_coeff).
    The indicators act per coordinate by default; indicator='norm' applies
    them to the euclidean norm of the ratios instead.
    """
    if clamp <= 0:
        raise ValueError("clamp must be positive")
    f_tilde, f2, f3 = features
    f_tilde = np.atleast_1d(np.asarray(f_tilde, dtype=float))
    f2 = np.atleast_2d(np.asarray(f2, dtype=float))
    f3 = np.atleast_2d(np.asarray(f3, dtype=float))
    f1 = np.maximum(f_tilde, clamp)[:, None]
    r2 = f2 / f1
    r3 = f3 / f1
    cap2 = C5 * math.sqrt(math.log(N))
    if indicator == "coordinate":
        mask = (np.abs(r2) <= cap2) & (np.abs(r3) <= C5)
    elif indicator == "norm":
        m = (np.linalg.norm(r2, axis=1) <= cap2) & (np.linalg.norm(r3, axis=1) <= C5)
        mask = m[:, None]
    else:
        raise ValueError(f"unknown indicator mode {indicator!r}")
    core = (st.accel_u_coeff * f2 + st.accel_y_coeff * f3) / f1
    return np.where(mask, core, 0.0)
