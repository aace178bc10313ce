"""Explicit ReLU networks with complexity accounting and gadget constructions.

A network is the alternating composition

    (A_L ReLU(.) + b_L) o ... o (A_2 ReLU(.) + b_2) o (A_1 x + b_1),

stored as a list of (A, b) layers.  Stats are exact: L is the affine-layer
count, W the width list, S the number of stored nonzero entries, B the
largest absolute entry.

Gadget constructions:

* clip - exact, one hidden layer: min(b, max(x, a)) = a + ReLU(x-a) - ReLU(x-b).
* square - the piecewise-linear sawtooth telescope: u^2 equals
  u - sum_k g_k(u)/4^k with g_k the k-fold hat composition, truncated at
  depth K with error 4^-(K+1); scaled to [-D, D].
* mult - pairwise via xy = (s(x+y) - s(x) - s(y))/2 with one shared square
  net s, reduced over a binary tree.  Sharing s makes zero absorption
  exact in floating point: if an input is 0 the two square evaluations
  cancel bitwise and s(0) = 0.
* recip - input clip to [eps, 1/eps] followed by piecewise-linear
  interpolation of 1/x on adaptively spaced knots (chord error of 1/x on
  [x, x(1+q)] is about q^2/(4x), so q grows like sqrt(x)).
"""

import math

import numpy as np


class ReluNetwork:
    def __init__(self, layers):
        self.layers = [(np.atleast_2d(np.asarray(A, dtype=float)),
                        np.atleast_1d(np.asarray(b, dtype=float)))
                       for A, b in layers]
        for (A, b) in self.layers:
            if A.shape[0] != b.shape[0]:
                raise ValueError("bias length must match rows of A")
        for (A0, _), (A1, _) in zip(self.layers, self.layers[1:]):
            if A1.shape[1] != A0.shape[0]:
                raise ValueError("consecutive layer dims do not compose")

    @property
    def in_dim(self):
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self):
        return self.layers[-1][0].shape[0]

    @property
    def depth(self):
        return len(self.layers)

    def widths(self):
        return [self.in_dim] + [A.shape[0] for A, _ in self.layers]

    def eval(self, x):
        """Forward pass; x is (n, in_dim) or (in_dim,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        z = np.atleast_2d(x)
        if z.shape[1] != self.in_dim:
            raise ValueError(f"input dim {z.shape[1]} != {self.in_dim}")
        A, b = self.layers[0]
        z = z @ A.T + b
        for A, b in self.layers[1:]:
            z = np.maximum(z, 0.0) @ A.T + b
        return z[0] if single else z

    def stats(self):
        """(L, widths, S, B): exact complexity accounting."""
        S = sum(int(np.count_nonzero(A)) + int(np.count_nonzero(b))
                for A, b in self.layers)
        B = max(max(np.abs(A).max(initial=0.0), np.abs(b).max(initial=0.0))
                for A, b in self.layers)
        return len(self.layers), self.widths(), S, float(B)

    # -- serialization -----------------------------------------------------
    def dumps(self):
        L = len(self.layers)
        lines = ["relunet %d %s" % (L, " ".join(str(w) for w in self.widths()))]
        for A, b in self.layers:
            rr, cc = np.nonzero(A)
            triples = " ".join(f"{r} {c} {float(A[r, c])!r}" for r, c in zip(rr, cc))
            bias = " ".join(repr(float(v)) for v in b)
            lines.append(f"{triples} ; {bias}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def loads(text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "relunet":
            raise ValueError("not a relunet file")
        L = int(head[1])
        widths = [int(v) for v in head[2:]]
        layers = []
        for i in range(L):
            left, _, right = lines[1 + i].partition(";")
            A = np.zeros((widths[i + 1], widths[i]))
            toks = left.split()
            for t in range(0, len(toks), 3):
                A[int(toks[t]), int(toks[t + 1])] = float(toks[t + 2])
            b = np.array([float(v) for v in right.split()])
            layers.append((A, b))
        return ReluNetwork(layers)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @staticmethod
    def load(path):
        with open(path) as fh:
            return ReluNetwork.loads(fh.read())


def eval_network(net: ReluNetwork, x):
    return net.eval(x)


def network_stats(net: ReluNetwork):
    return net.stats()


# -- combinators -------------------------------------------------------------

def affine_net(A, b=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if b is None:
        b = np.zeros(A.shape[0])
    return ReluNetwork([(A, b)])


def identity_net(d):
    return affine_net(np.eye(d))


def compose(outer: ReluNetwork, inner: ReluNetwork) -> ReluNetwork:
    """outer o inner, merging the boundary affine pair (L = L1 + L2 - 1)."""
    if outer.in_dim != inner.out_dim:
        raise ValueError("composition dims do not match")
    Ai, bi = inner.layers[-1]
    Ao, bo = outer.layers[0]
    merged = (Ao @ Ai, Ao @ bi + bo)
    return ReluNetwork(inner.layers[:-1] + [merged] + outer.layers[1:])


def extend_depth(net: ReluNetwork, target_depth: int) -> ReluNetwork:
    """Append exact identity-carry stages (x = ReLU(x) - ReLU(-x))."""
    out = net
    while out.depth < target_depth:
        m = out.out_dim
        up = np.vstack([np.eye(m), -np.eye(m)])
        down = np.hstack([np.eye(m), -np.eye(m)])
        carry = ReluNetwork([(up, np.zeros(2 * m)), (down, np.zeros(m))])
        out = compose(carry, out)
    return out


def parallel(nets, share_input=False) -> ReluNetwork:
    """Stack networks side by side (block-diagonal); equalizes depths.

    With share_input=True every sub-network reads the same input vector.
    """
    depth = max(n.depth for n in nets)
    nets = [extend_depth(n, depth) for n in nets]
    layers = []
    for i in range(depth):
        blocks = [n.layers[i] for n in nets]
        if i == 0 and share_input:
            A = np.vstack([A for A, _ in blocks])
        else:
            A = _block_diag([A for A, _ in blocks])
        b = np.concatenate([b for _, b in blocks])
        layers.append((A, b))
    return ReluNetwork(layers)


def _block_diag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def add_networks(a: ReluNetwork, b: ReluNetwork) -> ReluNetwork:
    if a.in_dim != b.in_dim or a.out_dim != b.out_dim:
        raise ValueError("added networks must share dims")
    par = parallel([a, b], share_input=True)
    m = a.out_dim
    return compose(affine_net(np.hstack([np.eye(m), np.eye(m)])), par)


def select_inputs(net: ReluNetwork, idx, total_in) -> ReluNetwork:
    """Pre-compose an embedding feeding input coordinates idx to the net."""
    E = np.zeros((len(idx), total_in))
    for r, c in enumerate(idx):
        E[r, c] = 1.0
    return compose(net, affine_net(E))


# -- gadgets -----------------------------------------------------------------

def build_clip(d, a, b) -> ReluNetwork:
    """Exact coordinatewise clip to [a_i, b_i]; L=2, widths (d, 2d, d)."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    b = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
    if np.any(a > b):
        raise ValueError("need a_i <= b_i")
    A1 = np.zeros((2 * d, d))
    b1 = np.zeros(2 * d)
    A2 = np.zeros((d, 2 * d))
    b2 = a.copy()
    for i in range(d):
        A1[2 * i, i] = 1.0
        b1[2 * i] = -a[i]
        A1[2 * i + 1, i] = 1.0
        b1[2 * i + 1] = -b[i]
        A2[i, 2 * i] = 1.0
        A2[i, 2 * i + 1] = -1.0
    return ReluNetwork([(A1, b1), (A2, b2)])


def square_depth(D, delta) -> int:
    """Sawtooth stages needed for |s(z) - z^2| <= delta on [-D, D]."""
    return max(1, math.ceil(0.5 * math.log2(max(D * D / (4.0 * delta), 2.0))))


def build_square(D, delta) -> ReluNetwork:
    """PL sawtooth approximation of z^2 on [-D, D]; exact 0 at z = 0.

    State channels after each hidden layer: (u, acc, g, g - 1/2, g - 1)
    with u = |z|/D and g the current sawtooth iterate; all nonnegative
    channels pass the ReLU unchanged.
    """
    K = square_depth(D, delta)
    layers = []
    # entry: [z, -z]
    layers.append((np.array([[1.0], [-1.0]]), np.zeros(2)))
    # z1: from ReLU([z,-z]) compute u and the first hat parts
    inv = 1.0 / D
    A = np.array([
        [inv, inv],        # u
        [0.0, 0.0],        # acc = 0
        [inv, inv],        # g-part p1 = u
        [inv, inv],        # p2 = u - 1/2
        [inv, inv],        # p3 = u - 1
    ])
    b = np.array([0.0, 0.0, 0.0, -0.5, -1.0])
    layers.append((A, b))
    # stages 2..K: g = 2 p1 - 4 p2 + 2 p3, acc += g/4^(k-1), new parts from g
    for k in range(2, K + 1):
        scale = 4.0 ** -(k - 1)
        A = np.array([
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 2.0 * scale, -4.0 * scale, 2.0 * scale],
            [0.0, 0.0, 2.0, -4.0, 2.0],
            [0.0, 0.0, 2.0, -4.0, 2.0],
            [0.0, 0.0, 2.0, -4.0, 2.0],
        ])
        b = np.array([0.0, 0.0, 0.0, -0.5, -1.0])
        layers.append((A, b))
    # final: D^2 (u - acc - g_K/4^K)
    sc = 4.0 ** -K
    A = np.array([[D * D, -D * D, -2.0 * D * D * sc, 4.0 * D * D * sc,
                   -2.0 * D * D * sc]])
    layers.append((A, np.zeros(1)))
    return ReluNetwork(layers)


def barrier(net: ReluNetwork) -> ReluNetwork:
    """Materialize the outputs through one identity-carry stage.

    Affine fusion during composition can reorder float accumulations across
    sub-network boundaries; a barrier pins exact-zero paths to a literal
    0.0 before they mix, which the exact zero-absorption contracts rely on.
    """
    return extend_depth(net, net.depth + 1)


def build_pair_mult(Bx, By, delta, pre_clip=False) -> ReluNetwork:
    """xy on [-Bx, Bx] x [-By, By] via the shared-square identity.

    Error <= 3/2 * delta_s with the shared square's error delta_s set to
    2*delta/3.  Exact 0 whenever an input is exactly 0: the three squares
    share weights, so s(x+0) and s(x) cancel bitwise and s(0) = 0.
    """
    D = Bx + By
    sq = build_square(D, 2.0 * delta / 3.0)
    pre = affine_net(np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))
    three = parallel([sq, sq, sq])
    out = affine_net(np.array([[0.5, -0.5, -0.5]]))
    # barrier: the three square values must materialize before combining,
    # else fused-dot summation order spoils the exact s(x)-s(x) cancellation
    net = compose(out, barrier(compose(three, pre)))
    if pre_clip:
        net = compose(net, barrier(build_clip(2, [-Bx, -By], [Bx, By])))
    return net


def build_mult(d, C, eps) -> ReluNetwork:
    """Product of d inputs on [-C, C]^d within eps; |output| <= C^d.

    Inputs are clipped to [-C, C], reduced pairwise over a binary tree
    (exact zero absorption at every node), and the output is clipped to
    [-C^d, C^d].
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if C < 1:
        raise ValueError("C must be >= 1")
    if not (0 < eps <= 0.1):
        raise ValueError("eps must be in (0, 0.1]")
    delta_pair = eps / (max(d - 1, 1) * C ** max(d - 2, 0)) / 2.0
    net = build_clip(d, [-C] * d, [C] * d)
    bounds = [C] * d
    while len(bounds) > 1:
        blocks = []
        new_bounds = []
        i = 0
        while i + 1 < len(bounds):
            Bx, By = bounds[i], bounds[i + 1]
            blocks.append(build_pair_mult(Bx, By, delta_pair))
            new_bounds.append(Bx * By + delta_pair)
            i += 2
        if i < len(bounds):                       # odd element carried
            blocks.append(identity_net(1))
            new_bounds.append(bounds[i])
        net = compose(parallel(blocks), barrier(net))
        bounds = new_bounds
    cap = C ** d
    return compose(build_clip(1, [-cap], [cap]), barrier(net))


def recip_knots(eps):
    """Adaptive knots on [eps, 1/eps]: chord error of 1/x <= 0.9 eps each."""
    ks = [eps]
    hi = 1.0 / eps
    while ks[-1] < hi:
        x = ks[-1]
        q = math.sqrt(3.6 * eps * x)
        ks.append(min(x * (1.0 + q), hi))
    if ks[-1] != hi:
        ks.append(hi)
    return np.array(ks)


def build_recip(eps) -> ReluNetwork:
    """PL interpolation of 1/x on [eps, 1/eps] after an input clip.

    |recip(x') - 1/x| <= eps + |x - x'|/eps^2 for x in [eps, 1/eps]: the
    interpolation error is below 0.9 eps per segment and the steepest
    chord slope is bounded by 1/eps^2.
    """
    if not (0 < eps <= 0.1):
        raise ValueError("eps must be in (0, 0.1]")
    ks = recip_knots(eps)
    g = 1.0 / ks
    s = np.diff(g) / np.diff(ks)
    M = len(ks)
    # after the clip, x >= eps > 0, so ReLU(x) = x carries the linear part
    A1 = np.ones((M - 1, 1))
    b1 = np.concatenate([[0.0], -ks[1:-1]])
    A2 = np.zeros((1, M - 1))
    A2[0, 0] = s[0]
    A2[0, 1:] = np.diff(s)
    b2 = np.array([g[0] - s[0] * ks[0]])
    pl = ReluNetwork([(A1, b1), (A2, b2)])
    return compose(pl, build_clip(1, [eps], [1.0 / eps]))


def _hat_gate(lo, hi, margin=1.0) -> ReluNetwork:
    """Exact PL gate: 1 on [lo, hi], 0 outside [lo - margin, hi + margin].

    g = min(1, m1, m2) with m1 = ReLU((u - lo + margin)/margin),
    m2 = ReLU((hi + margin - u)/margin); the mins are ReLU-exact and the
    gate is exactly 0.0 one margin past the support.
    """
    inv = 1.0 / margin
    l1 = (np.array([[inv], [-inv]]),
          np.array([(-lo + margin) * inv, (hi + margin) * inv]))
    # g1 = 1 - ReLU(1 - m1); need ReLU of (1 - m1) and carry m2
    l2 = (np.array([[-1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 0.0]))
    # now state ReLU([1-m1, m2]); g1 = 1 - (1-m1)_+ ; g = g1 - ReLU(g1 - m2)
    l3 = (np.array([[-1.0, -1.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))
    # state ReLU([g1 - m2, g1]) -> g = g1 - (g1 - m2)_+
    l4 = (np.array([[-1.0, 1.0]]), np.zeros(1))
    return ReluNetwork([l1, l2, l3, l4])


def compile_bspline_net(k, j, ell, eps) -> ReluNetwork:
    """Network within eps of tensor_bspline(k, j, ell, .) on its support.

    Realized per axis from the truncated-power identity
    N_ell(u) = (1/ell!) sum_m (-1)^m C(ell+1, m) ReLU(u - m)^ell, with the
    ReLU powers built from `build_mult` for ell >= 2, and gated by an exact
    PL window so the output is exactly 0 one unit beyond the support.
    ell = 0 uses steep ramps: the sup guarantee then holds away from the
    two jump points.
    """
    if not (0 <= ell <= 4):
        raise ValueError("ell must be in 0..4")
    k = np.atleast_1d(np.asarray(k, dtype=int))
    j = np.atleast_1d(np.asarray(j, dtype=int))
    d = k.size
    axis_nets = []
    for i in range(d):
        pre = affine_net(np.array([[2.0 ** k[i]]]), np.array([-float(j[i])]))
        axis_nets.append(compose(_axis_spline_net(ell, eps / (2.0 * d)), pre))
    if d == 1:
        return axis_nets[0]
    sel = [select_inputs(n, [i], d) for i, n in enumerate(axis_nets)]
    vals = parallel(sel, share_input=True)
    prod = build_mult(d, 1.0, min(eps / 2.0, 0.09))
    return compose(prod, vals)


def _axis_spline_net(ell, eps) -> ReluNetwork:
    gate = _hat_gate(0.0, ell + 1.0)
    if ell == 0:
        w = min(eps, 0.05)
        ramp = ReluNetwork([
            (np.array([[1.0 / w], [1.0 / w]]), np.array([0.0, -(1.0 - w) / w])),
            (np.array([[1.0, -1.0]]), np.zeros(1)),
        ])
        core = compose(build_clip(1, [0.0], [1.0]), ramp)
    elif ell == 1:
        A1 = np.array([[1.0], [1.0], [1.0]])
        b1 = np.array([0.0, -1.0, -2.0])
        A2 = np.array([[1.0, -2.0, 1.0]])
        core = ReluNetwork([(A1, b1), (A2, np.zeros(1))])
    else:
        coefs = [(-1.0) ** m * math.comb(ell + 1, m) / math.factorial(ell)
                 for m in range(ell + 2)]
        delta = eps / (2.0 * sum(abs(c) for c in coefs))
        powers = []
        for m in range(ell + 2):
            shift = affine_net(np.tile(np.array([[1.0]]), (ell, 1)),
                               -float(m) * np.ones(ell))
            relu_in = compose(ReluNetwork([(np.eye(ell), np.zeros(ell)),
                                           (np.eye(ell), np.zeros(ell))]), shift)
            # power range ell+2: the truncated-power cancellation must stay
            # intact over the gate ramp [ell+1, ell+2]
            powers.append(compose(build_mult(ell, float(ell + 2), delta)
                                  if ell >= 2 else identity_net(1), relu_in))
        stack = parallel(powers, share_input=True)
        core = compose(affine_net(np.array([coefs])), stack)
    both = barrier(parallel([gate, core], share_input=True))
    g_eps = min(eps / 2.0, 1e-13)
    return compose(build_pair_mult(1.0, ell + 1.0, max(g_eps, 1e-14)), both)


# -- the zeta pipeline -------------------------------------------------------

class AccelNet:
    """Assembled acceleration network (the zeta pipeline).

    `gadget` is the real ReLU network mapping the stacked component values
    [u5, u6_1..d, u7_1..d] to the d output coordinates.  When all three
    components are themselves ReLU networks, `full` is their composition
    with the gadget into a single weight-level network.
    """

    def __init__(self, gadget, parts, full=None, d=1):
        self.gadget = gadget
        self.parts = parts
        self.full = full
        self.d = d

    def component_values(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        u5, u6, u7 = self.parts
        v5 = u5.eval(xs) if isinstance(u5, ReluNetwork) else u5(xs)
        v6 = u6.eval(xs) if isinstance(u6, ReluNetwork) else u6(xs)
        v7 = u7.eval(xs) if isinstance(u7, ReluNetwork) else u7(xs)
        v5 = np.atleast_2d(np.asarray(v5, dtype=float).reshape(xs.shape[0], -1))
        v6 = np.atleast_2d(np.asarray(v6, dtype=float).reshape(xs.shape[0], -1))
        v7 = np.atleast_2d(np.asarray(v7, dtype=float).reshape(xs.shape[0], -1))
        return np.hstack([v5, v6, v7])

    def eval(self, xs):
        if self.full is not None:
            return self.full.eval(np.atleast_2d(np.asarray(xs, dtype=float)))
        return self.gadget.eval(self.component_values(xs))

    def stats(self):
        return (self.full if self.full is not None else self.gadget).stats()


def assemble_accel_net(u5, u6, u7, a2_hat, b2_hat, consts) -> AccelNet:
    """Compose clip/recip/mult gadgets into the acceleration network:

        z1 = clip(u5; clamp, N^(K0+1));  z2 = recip(z1)
        z3 = mult(z2, u6);  z4 = clip(z3; +-C5 sqrt(log N))
        z5 = mult(z2, u7);  z6 = clip(z5; +-C5)
        u8 = mult(z4, a2_hat) + mult(z6, b2_hat)

    a2_hat/b2_hat enter as exactly-representable constants (bias channels).
    consts: clamp, C5, N, K0, plus optional recip_eps / mult_eps / mult_range.
    """
    clamp = float(consts["clamp"])
    C5 = float(consts["C5"])
    N = float(consts["N"])
    K0 = float(consts["K0"])
    if clamp <= 0:
        raise ValueError("clamp must be positive")
    recip_eps = float(consts.get("recip_eps", 0.02))
    mult_eps = float(consts.get("mult_eps", recip_eps / 4.0))
    d = int(consts.get("d", 1))
    cap_hi = N ** (K0 + 1.0)
    cap4 = C5 * math.sqrt(math.log(N))
    z2_bound = 1.0 / recip_eps
    v_bound = float(consts.get("mult_range", max(4.0 * cap4, z2_bound)))

    m = 1 + 2 * d      # stacked component width

    # stage 1: z1 = clip on channel 0, carry the 2d component channels
    s1 = parallel([build_clip(1, [clamp], [cap_hi]), identity_net(2 * d)])
    # stage 2: z2 = recip on channel 0
    s2 = parallel([build_recip(recip_eps), identity_net(2 * d)])
    # stage 3: per-coordinate pairs (z2, v6_i) and (z2, v7_i)
    wire = np.zeros((4 * d, m))
    for i in range(d):
        wire[2 * i, 0] = 1.0
        wire[2 * i + 1, 1 + i] = 1.0
        wire[2 * d + 2 * i, 0] = 1.0
        wire[2 * d + 2 * i + 1, 1 + d + i] = 1.0
    pair = build_pair_mult(z2_bound, v_bound, mult_eps, pre_clip=True)
    s3 = compose(parallel([pair] * (2 * d)), affine_net(wire))
    # stage 4: clips to +-C5 sqrt(log N) and +-C5
    s4 = parallel([build_clip(d, [-cap4] * d, [cap4] * d),
                   build_clip(d, [-C5] * d, [C5] * d)])
    # stage 5: multiply by the schedule constants via bias-injected pairs
    blocks = []
    for i in range(2 * d):
        cval = float(a2_hat) if i < d else float(b2_hat)
        bound_in = cap4 if i < d else C5
        inj = affine_net(np.array([[1.0], [0.0]]), np.array([0.0, cval]))
        blocks.append(compose(
            build_pair_mult(bound_in, abs(cval) + 1.0, mult_eps), inj))
    s5 = compose(_block_diag_net(blocks), identity_net(2 * d))
    # stage 6: u8 = z7 + z8
    s6 = affine_net(np.hstack([np.eye(d), np.eye(d)]))

    gadget = s1
    for stage in (s2, s3, s4, s5, s6):
        gadget = compose(stage, gadget)

    full = None
    if all(isinstance(u, ReluNetwork) for u in (u5, u6, u7)):
        stacked = parallel([u5, u6, u7], share_input=True)
        full = compose(gadget, stacked)
    return AccelNet(gadget, (u5, u6, u7), full=full, d=d)


def _block_diag_net(blocks):
    return parallel(blocks)
