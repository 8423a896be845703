"""Trimming, advantage-preserving maximizers and the consequence sets of a
small-cost rectangular witness, with exact mass-bound verifiers."""

import itertools
from fractions import Fraction

from .prob import Certificate, LogExpr, ceil_log2, marginal, total
from .protocol import CapExceeded, advantage_by_m
from .rectangular import RectDist, RectSet, external_cost, marginal_cost


def _labels(*tables):
    X, Y, M = set(), set(), set()
    for t in tables:
        for (x, y, m), v in t.items():
            if v:
                X.add(x)
                Y.add(y)
                M.add(m)
    key = repr
    return sorted(X, key=key), sorted(Y, key=key), sorted(M, key=key)


# ---------------------------------------------------------------------------
# trimming


class TrimResult:
    def __init__(self, T, deleted_log, mass, kappa):
        self.T = T
        self.deleted_log = deleted_log
        self.mass = mass
        self.kappa = kappa

    def record(self):
        return {"kappa": str(self.kappa), "mass": str(self.mass),
                "deleted": [[k, repr(pt), str(w)] for k, pt, w in self.deleted_log]}


def trim(a, b, kappa):
    """Delete low-ratio xm, ym and m slices of a until every survivor satisfies

        a(xm|T) >= kappa b(xm),  a(ym|T) >= kappa b(ym),  a(m|T) >= kappa a(m),

    where a(.|T) = a(. and T) / a(T).  Slices with no a-mass left are dropped
    as well.  Scan order: xm then ym then m, lexicographic within each kind,
    repeated until nothing fires.
    """
    kappa = Fraction(kappa)
    if not 0 < kappa < Fraction(1, 3):
        raise ValueError("kappa must lie in (0, 1/3)")
    X, Y, M = _labels(a, b)
    bxm = marginal(b, lambda k: (k[0], k[2]))
    bym = marginal(b, lambda k: (k[1], k[2]))
    am = marginal(a, lambda k: k[2])
    A = {m: set(X) for m in M}
    B = {m: set(Y) for m in M}
    alive = set(M)
    # masses of a inside T, kept up to date
    xmT = marginal(a, lambda k: (k[0], k[2]))
    ymT = marginal(a, lambda k: (k[1], k[2]))
    mT = dict(am)
    aT = total(a)
    log = []

    def drop_cells(cells):
        nonlocal aT
        gone = Fraction(0)
        for (x, y, m) in cells:
            v = a.get((x, y, m), 0)
            if v:
                xmT[(x, m)] -= v
                ymT[(y, m)] -= v
                mT[m] -= v
                gone += v
        aT -= gone
        return gone

    changed = True
    while changed:
        changed = False
        for m in M:
            if m not in alive:
                continue
            for x in sorted(A[m], key=repr):
                w = xmT.get((x, m), 0)
                if w == 0 or w < kappa * bxm.get((x, m), 0) * aT:
                    A[m].discard(x)
                    log.append(("xm", (x, m), drop_cells([(x, y, m) for y in B[m]])))
                    changed = True
        for m in M:
            if m not in alive:
                continue
            for y in sorted(B[m], key=repr):
                w = ymT.get((y, m), 0)
                if w == 0 or w < kappa * bym.get((y, m), 0) * aT:
                    B[m].discard(y)
                    log.append(("ym", (y, m), drop_cells([(x, y, m) for x in A[m]])))
                    changed = True
        for m in M:
            if m not in alive:
                continue
            w = mT.get(m, 0)
            if w == 0 or w < kappa * am.get(m, 0) * aT:
                alive.discard(m)
                log.append(("m", m, drop_cells([(x, y, m) for x in A[m] for y in B[m]])))
                changed = True
    T = RectSet({m: (A[m], B[m]) for m in alive})
    res = TrimResult(T, log, aT, kappa)
    check_trim(a, b, res)
    return res


def check_trim(a, b, res):
    """Exact re-check of the trimming guarantees; raises AssertionError."""
    kappa, T = res.kappa, res.T
    aT = T.mass(a)
    assert aT == res.mass, "incremental mass drifted"
    assert aT >= 1 - 3 * kappa, "trimmed mass %s below 1 - 3 kappa" % aT
    inside = T.restrict(a)
    xmT = marginal(inside, lambda k: (k[0], k[2]))
    ymT = marginal(inside, lambda k: (k[1], k[2]))
    mT = marginal(inside, lambda k: k[2])
    bxm = marginal(b, lambda k: (k[0], k[2]))
    bym = marginal(b, lambda k: (k[1], k[2]))
    am = marginal(a, lambda k: k[2])
    for (x, y, m), v in inside.items():
        if not v:
            continue
        assert xmT[(x, m)] >= kappa * bxm.get((x, m), 0) * aT
        assert ymT[(y, m)] >= kappa * bym.get((y, m), 0) * aT
        assert mT[m] >= kappa * am[m] * aT
    return True


def trim_certificates(a, b, res, prefix="trim"):
    """The trimming guarantees as a list of Certificates (min ratio per kind)."""
    kappa, T = res.kappa, res.T
    aT = T.mass(a)
    inside = {k: v for k, v in T.restrict(a).items() if v}
    out = [Certificate(prefix + ".mass", aT, ">=", 1 - 3 * kappa, "trimmed mass >= 1-3kappa")]
    if not inside:
        return out
    xmT = marginal(inside, lambda k: (k[0], k[2]))
    ymT = marginal(inside, lambda k: (k[1], k[2]))
    mT = marginal(inside, lambda k: k[2])
    bxm = marginal(b, lambda k: (k[0], k[2]))
    bym = marginal(b, lambda k: (k[1], k[2]))
    am = marginal(a, lambda k: k[2])

    def worst(vals):
        fin = [v for v in vals if v is not None]
        return min(fin) if fin else None

    rx = worst(xmT[k] / aT / bxm[k] if bxm.get(k) else None for k in xmT)
    ry = worst(ymT[k] / aT / bym[k] if bym.get(k) else None for k in ymT)
    rm = worst(mT[k] / aT / am[k] for k in mT)
    for nm, r in (("xm", rx), ("ym", ry), ("m", rm)):
        if r is not None:
            out.append(Certificate("%s.ratio_%s" % (prefix, nm), r, ">=", kappa,
                                   "min surviving %s ratio >= kappa" % nm))
    return out


# ---------------------------------------------------------------------------
# maximizers


def _obj_cmp(W1, S1, W2, S2, delta):
    """Sign of W1^(d-1) S1 - W2^(d-1) S2, with 0^(d-1)*0 read as 0."""
    z1 = W1 == 0 or S1 == 0
    z2 = W2 == 0 or S2 == 0
    if z1 or z2:
        return (0 if z1 else 1) - (0 if z2 else 1)
    a, b = delta.numerator, delta.denominator
    # raise both sides to the power b
    lhs = S1 ** b * W2 ** (b - a)
    rhs = S2 ** b * W1 ** (b - a)
    return (lhs > rhs) - (lhs < rhs)


def objective(W, S, delta):
    """W^(delta-1) * S as a LogExpr (log2 of the objective)."""
    if W == 0 or S == 0:
        return LogExpr.inf(-1)
    return LogExpr.log2(W, delta - 1) + LogExpr.log2(S)


def _slice_options(ent, X, Y, f):
    """Every rectangle of one message slice: (W, |S|, encoding, (A, B))."""
    out = {}
    out[(Fraction(0), Fraction(0))] = ((0, 0), (frozenset(), frozenset()))
    for ma in range(1, 1 << len(X)):
        A = [X[i] for i in range(len(X)) if ma >> i & 1]
        for mb in range(1, 1 << len(Y)):
            B = [Y[j] for j in range(len(Y)) if mb >> j & 1]
            W = Fraction(0)
            S = Fraction(0)
            for x in A:
                for y in B:
                    v = ent.get((x, y))
                    if v:
                        W += v
                        S += v if f(x, y) == 0 else -v
            key = (W, abs(S))
            enc = (ma, mb)
            if key not in out or enc < out[key][0]:
                out[key] = (enc, (frozenset(A), frozenset(B)))
    return out


def _split_by_m(v, max_labels):
    X, Y, M = _labels(v)
    if len(X) > max_labels or len(Y) > max_labels:
        raise CapExceeded("maximize_R needs |X|, |Y| <= %d" % max_labels)
    by_m = {}
    for (x, y, m), w in v.items():
        if w:
            by_m.setdefault(m, {})[(x, y)] = w
    return X, Y, M, by_m


def _upper_chain(opts):
    """Pareto points (W up, S strictly up) of one slice, then their upper hull."""
    pts = []
    for (W, S) in sorted(opts, key=lambda k: (k[0], -k[1])):
        if not pts or S > pts[-1][1]:
            pts.append((W, S))
    hull = []
    for pt in pts:
        while len(hull) >= 2:
            (w1, s1), (w2, s2) = hull[-2], hull[-1]
            # drop hull[-1] if it lies on or below the segment hull[-2] -> pt
            if (s2 - s1) * (pt[0] - w1) <= (pt[1] - s1) * (w2 - w1):
                hull.pop()
            else:
                break
        hull.append(pt)
    return hull


def maximize_R(v, f, delta, max_labels=4):
    """Rectangular R maximizing v(R)^delta E_{v(m|R)} |E_{v(xy|mR)}[(-1)^f]|.

    The objective is W^(delta-1) * S with W = v(R) and S = sum_m |S_m|, S_m
    the signed mass of R's slice at m.  Its upper level sets are bounded by
    strictly concave curves, so every maximizer is a vertex of the upper hull
    of the achievable (W, S) points.  That hull is the Minkowski sum of the
    per-message hulls, walked by merging edges in decreasing slope.
    Ties go to the lexicographically smallest encoding.  Returns (R, W, S).
    """
    delta = Fraction(delta)
    X, Y, M, by_m = _split_by_m(v, max_labels)
    opts = {m: _slice_options(by_m[m], X, Y, f) for m in M}
    chains = {m: _upper_chain(opts[m]) for m in M}
    edges = []
    for j, m in enumerate(M):
        ch = chains[m]
        for k in range(1, len(ch)):
            dW = ch[k][0] - ch[k - 1][0]
            dS = ch[k][1] - ch[k - 1][1]
            edges.append((dS / dW, j, k))
    edges.sort(key=lambda e: (-e[0], e[1], e[2]))
    pos = [0] * len(M)

    def snapshot():
        W = sum((chains[m][pos[j]][0] for j, m in enumerate(M)), Fraction(0))
        S = sum((chains[m][pos[j]][1] for j, m in enumerate(M)), Fraction(0))
        enc = tuple(opts[m][chains[m][pos[j]]][0] for j, m in enumerate(M))
        return W, S, enc, tuple(pos)

    best = snapshot()
    for _, j, k in edges:
        pos[j] = k
        cand = snapshot()
        c = _obj_cmp(cand[0], cand[1], best[0], best[1], delta)
        if c > 0 or (c == 0 and cand[2] < best[2]):
            best = cand
    W, S, enc, where = best
    R = RectSet({m: opts[m][chains[m][where[j]]][1] for j, m in enumerate(M)})
    return R, W, S


def maximize_R_pareto(v, f, delta, max_labels=4):
    """Same maximizer by a Pareto sweep over all (W, S) states; slow, used to
    cross-check the hull walk."""
    delta = Fraction(delta)
    X, Y, M, by_m = _split_by_m(v, max_labels)
    # states: (W, S) -> encoding tuple, choice tuple
    states = {(Fraction(0), Fraction(0)): ((), ())}
    for m in M:
        opts = _slice_options(by_m[m], X, Y, f)
        nxt = {}
        for (W, S), (enc, ch) in states.items():
            for (w, s), (e2, c2) in opts.items():
                key = (W + w, S + s)
                cand = (enc + (e2,), ch + ((m, c2),))
                if key not in nxt or cand[0] < nxt[key][0]:
                    nxt[key] = cand
        # Pareto prune: drop (W, S) if some (W', S') has W' <= W and S' >= S
        keep = {}
        best_S = None
        for key in sorted(nxt, key=lambda k: (k[0], -k[1])):
            if best_S is None or key[1] > best_S:
                keep[key] = nxt[key]
                best_S = key[1]
        states = keep
    best = None
    for (W, S), (enc, ch) in states.items():
        if best is None:
            best = (W, S, enc, ch)
            continue
        c = _obj_cmp(W, S, best[0], best[1], delta)
        if c > 0 or (c == 0 and enc < best[2]):
            best = (W, S, enc, ch)
    W, S, enc, ch = best
    R = RectSet({m: ab for m, ab in ch})
    return R, W, S


def rect_objective(v, f, R, delta):
    """(W, S) of R, so the objective is W^(delta-1) S."""
    sub = R.restrict(v)
    W = total(sub)
    acc = {}
    for (x, y, m), w in sub.items():
        acc[m] = acc.get(m, 0) + (w if f(x, y) == 0 else -w)
    return W, sum((abs(s) for s in acc.values()), Fraction(0))


def all_rectsets(v, max_cells=12):
    """Every RectSet over the support of v (exhaustive, tiny instances only)."""
    X, Y, M = _labels(v)
    per = []
    for m in M:
        opts = [None]
        for ma in range(1, 1 << len(X)):
            for mb in range(1, 1 << len(Y)):
                opts.append((frozenset(X[i] for i in range(len(X)) if ma >> i & 1),
                             frozenset(Y[j] for j in range(len(Y)) if mb >> j & 1)))
        per.append(opts)
    n = 1
    for o in per:
        n *= len(o)
    if n > 1 << max_cells * 2:
        raise CapExceeded("%d rectangular sets" % n)
    for combo in itertools.product(*per):
        yield RectSet({m: c for m, c in zip(M, combo) if c is not None})


def average_advantage(v, f, Z=None):
    """(mass, E_{v(m|Z)} |E_{v(xy|mZ)}[(-1)^f]|) for a RectSet Z (None = all)."""
    sub = v if Z is None else Z.restrict(v)
    W, S = rect_objective(sub, f, RectSet.full(sub), Fraction(1)) if sub else (0, 0)
    if W == 0:
        return Fraction(0), Fraction(0)
    return W, S / W


def verify_adv_preserving(v, f, delta, R, Z):
    """Certificate for  adv(Z) >= (1 - d^2 - d/v(Z|R)) v(R)^(-d) adv(v)."""
    delta = Fraction(delta)
    vR, _ = average_advantage(v, f, R)
    vZ, advZ = average_advantage(v, f, Z)
    _, adv0 = average_advantage(v, f)
    if vR == 0:
        raise ValueError("maximizer has zero mass")
    coef = 1 - delta ** 2 - delta * vR / vZ if vZ else None
    if coef is None or coef <= 0 or adv0 == 0:
        return Certificate("adv_preserving", advZ, ">=", Fraction(0),
                           "advantage on Z vs maximizer R", note="vacuous: non-positive right side")
    rhs = LogExpr.product((coef, 1), (vR, -delta), (adv0, 1))
    return Certificate("adv_preserving", LogExpr.log2(advZ), ">=", rhs,
                       "advantage on Z vs maximizer R", domain="log2")


# ---------------------------------------------------------------------------
# per-message G over w = (x1, y2, m)


def build_G_per_m(q, f, g, delta, max_w=16):
    """For each m, the w-measurable G_m maximizing q(G|m)^delta |E_{q(xy|mG)}[(-1)^(f+g)]|.

    Inputs are pairs x = (x1, x2), y = (y1, y2); f acts on copy 1, g on copy 2.
    Returns (G, certificates) where G maps m -> frozenset of (x1, y2) and the
    certificates check |adv_w| >= (1-delta) q(G|m)^(-delta) |adv_m| on G.
    """
    delta = Fraction(delta)
    qt = q.table() if hasattr(q, "table") else q
    cells = {}
    for ((x1, x2), (y1, y2), m), v in qt.items():
        if not v:
            continue
        s = v if (f(x1, y1) ^ g(x2, y2)) == 0 else -v
        W, S = cells.setdefault(m, {}).get((x1, y2), (Fraction(0), Fraction(0)))
        cells[m][(x1, y2)] = (W + v, S + s)
    G = {}
    certs = []
    for m in sorted(cells, key=repr):
        ws = sorted(cells[m], key=repr)
        if len(ws) > max_w:
            raise CapExceeded("%d w-values at one message" % len(ws))
        Wm = sum(c[0] for c in cells[m].values())
        Sm = sum(c[1] for c in cells[m].values())
        best = (Fraction(0), Fraction(0), 0)
        for mask in range(1, 1 << len(ws)):
            W = sum(cells[m][ws[i]][0] for i in range(len(ws)) if mask >> i & 1)
            S = abs(sum(cells[m][ws[i]][1] for i in range(len(ws)) if mask >> i & 1))
            if _obj_cmp(W, S, best[0], best[1], delta) > 0:
                best = (W, S, mask)
        W, S, mask = best
        chosen = frozenset(ws[i] for i in range(len(ws)) if mask >> i & 1)
        G[m] = chosen
        advm = abs(Sm) / Wm
        for w in sorted(chosen, key=repr):
            Ww, Sw = cells[m][w]
            advw = abs(Sw) / Ww
            if advm == 0:
                certs.append(Certificate("G.pointwise", advw, ">=", Fraction(0),
                                         "w-advantage on G", note="message advantage 0"))
                continue
            rhs = LogExpr.product((1 - delta, 1), (W / Wm, -delta), (advm, 1))
            certs.append(Certificate("G.pointwise", LogExpr.log2(advw), ">=", rhs,
                                     "w-advantage on G", domain="log2"))
    return G, certs


def G_as_predicate(G):
    def inG(key):
        (x1, _), (_, y2), m = key
        return (x1, y2) in G.get(m, ())
    return inG


# ---------------------------------------------------------------------------
# consequence sets


class _PMarg:
    """Prefix marginals of a protocol table: p(x, m_<=i), p(y, m_<=i), p(xy, m_<=i)."""

    def __init__(self, p):
        self.p = p
        self.x, self.y, self.xy, self.pre = {}, {}, {}, {}
        for (x, y, m), v in p.table().items():
            for i in range(len(m) + 1):
                pre = m[:i]
                self.x[(x, pre)] = self.x.get((x, pre), 0) + v
                self.y[(y, pre)] = self.y.get((y, pre), 0) + v
                self.xy[(x, y, pre)] = self.xy.get((x, y, pre), 0) + v
                self.pre[pre] = self.pre.get(pre, 0) + v

    def given_x(self, i, x, m):
        """p(m_i | x m_<i)."""
        return self.x[(x, m[:i + 1])] / self.x[(x, m[:i])]

    def given_y(self, i, y, m):
        return self.y[(y, m[:i + 1])] / self.y[(y, m[:i])]

    def given_xy(self, i, x, y, m):
        return self.xy[(x, y, m[:i + 1])] / self.xy[(x, y, m[:i])]

    def given_none(self, i, m):
        return self.pre[m[:i + 1]] / self.pre[m[:i]]

    def dist_given_x(self, i, x, m):
        pre = m[:i]
        return {s: self.x.get((x, pre + (s,)), 0) / self.x[(x, pre)] for s in self.p.alphabets[i]}

    def dist_given_y(self, i, y, m):
        pre = m[:i]
        return {s: self.y.get((y, pre + (s,)), 0) / self.y[(y, pre)] for s in self.p.alphabets[i]}

    def m_given_x(self, x, m):
        return self.x[(x, m)] / self.x[(x, ())]

    def m_given_y(self, y, m):
        return self.y[(y, m)] / self.y[(y, ())]

    def m_given_xy(self, x, y, m):
        return self.xy[(x, y, m)] / self.xy[(x, y, ())]


class GFactorization:
    """q/p = g1(xm) g2(ym) with g1 = A / Alice's factor, g2 = B / Bob's factor."""

    def __init__(self, q, p):
        from .rectangular import protocol_factors
        alpha, beta = protocol_factors(p)
        self.g1, self.g2 = {}, {}
        for (x, y, m) in q.table():
            self.g1[(x, m)] = q.A[(x, m)] / alpha[(x, m)]
            self.g2[(y, m)] = q.B[(y, m)] / beta[(y, m)]

    def check(self, q, p):
        pt = p.table()
        return all(v / pt[(x, y, m)] == self.g1[(x, m)] * self.g2[(y, m)]
                   for (x, y, m), v in q.table().items())

    def s_value(self, x, y, m):
        """ceil(log g1(xm)) + log g2(ym) as a LogExpr."""
        return LogExpr.const(ceil_log2(self.g1[(x, m)])) + LogExpr.log2(self.g2[(y, m)])


class ConsequenceSets:
    def __init__(self, M, K, members, certificates, M_ext=None, K_ext=None):
        self.M = M
        self.K = K
        self.M_ext = M_ext
        self.K_ext = K_ext
        self.members = members
        self.certificates = certificates

    def record(self):
        return {"M": float(self.M), "K": str(self.K),
                "M_ext": None if self.M_ext is None else float(self.M_ext),
                "K_ext": None if self.K_ext is None else str(self.K_ext),
                "sizes": {k: len(v) for k, v in self.members.items()},
                "certificates": [c.record() for c in self.certificates]}

    @property
    def ok(self):
        return all(self.certificates)


def _as_rect(q, p):
    if isinstance(q, RectDist):
        return q
    return RectDist.from_table(q, p.mu)


def _mass_cert(name, num, den, factor, level, anchor):
    """num/den <= factor * 2^(-level), with level a LogExpr; 0/0 reads as 0."""
    lhs = Fraction(0) if den == 0 else num / den
    rhs = LogExpr.log2(factor) - level
    return Certificate(name, lhs, "<=", rhs, anchor, domain="log2")


def build_consequence_sets(q, p, f, params, K=None, K_ext=2, M=None, M_ext=None):
    """Members of S_K, R_K, the external S/R pair and both T_K variants on
    supp(q), with the complement-mass certificates.

    M defaults to the marginal cost of q itself (and M_ext to its external
    cost); both must be finite.
    """
    q = _as_rect(q, p)
    K = params.K if K is None else Fraction(K)
    K_ext = Fraction(K_ext)
    I = params.I
    if M is None:
        M = marginal_cost(q, p, f, params).value
    if M_ext is None:
        M_ext = external_cost(q, p, f, params).value
    if not M.is_finite or not M_ext.is_finite:
        raise ValueError("consequence sets need a finite cost")
    qt = q.table()
    pm = _PMarg(p)
    gf = GFactorization(q, p)
    C = p.C
    r = C
    lvl = M.scale(Fraction(1) / I) + K            # (M + K I) / I
    lvl_ext = M_ext.scale(Fraction(1) / I) + K_ext
    s_bound = lvl.scale(3)
    s_bound_ext = lvl_ext.scale(3)
    r_exp = (M + K * I).scale(6)                  # log2 of 2^{6(M+KI)}
    r_exp_ext = (M_ext + K_ext * I).scale(5)
    t_exp = (M + K * I).scale(14) + LogExpr.log2(r + 1, 5)
    members = {k: set() for k in ("S", "R", "S_ext", "R_ext", "T_rounds", "T_commfree")}
    for (x, y, m) in qt:
        sv = gf.s_value(x, y, m)
        if _abs_le(sv, s_bound):
            members["S"].add((x, y, m))
        if _abs_le(sv, s_bound_ext):
            members["S_ext"].add((x, y, m))
        if C >= 1:
            a1 = pm.given_x(1, x, m)
            if LogExpr.log2(a1) <= r_exp + LogExpr.log2(pm.given_y(1, y, m)):
                members["R"].add((x, y, m))
            if LogExpr.log2(a1) <= r_exp_ext + LogExpr.log2(pm.given_none(1, m)):
                members["R_ext"].add((x, y, m))
        else:
            members["R"].add((x, y, m))
            members["R_ext"].add((x, y, m))
        ok = True
        for i in range(1, C + 1):
            num = pm.given_xy(i, x, y, m)
            for den in (pm.given_y(i, y, m), pm.given_x(i, x, m)):
                if LogExpr.log2(num / den) > t_exp:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            members["T_rounds"].add((x, y, m))
        pxy = pm.m_given_xy(x, y, m)
        lo = min(pm.m_given_x(x, m), pm.m_given_y(y, m))
        if LogExpr.log2(pxy / lo) <= r_exp:
            members["T_commfree"].add((x, y, m))

    def mass(keys):
        return sum((qt[k] for k in keys), Fraction(0))

    S, S_ext = members["S"], members["S_ext"]
    qS, qSe = mass(S), mass(S_ext)
    certs = [
        _mass_cert("S.complement", 1 - qS, 1, 5, lvl, "q(S^c) <= 5 2^-(M+KI)/I"),
        _mass_cert("R.complement_given_S", mass(S - members["R"]), qS, 5, lvl,
                   "q(R^c|S) <= 5 2^-(M+KI)/I"),
        _mass_cert("S_ext.complement", 1 - qSe, 1, 4, lvl_ext, "external q(S^c) <= 4 2^-(M+KI)/I"),
        _mass_cert("R_ext.complement_given_S", mass(S_ext - members["R_ext"]), qSe, 4, lvl_ext,
                   "external q(R^c|S) <= 4 2^-(M+KI)/I"),
        _mass_cert("T_rounds.complement_given_S", mass(S - members["T_rounds"]), qS, 22, lvl,
                   "bounded-round q(T^c|S) <= 22 2^-(M+KI)/I"),
        _mass_cert("T_commfree.complement_given_S", mass(S - members["T_commfree"]), qS, 6, lvl,
                   "q(T^c|S) <= 6 2^-(M+KI)/I for the one-shot sets"),
    ]
    members = {k: frozenset(v) for k, v in members.items()}
    return ConsequenceSets(M, K, members, certs, M_ext, K_ext)


def _abs_le(v, bound):
    return v <= bound and -bound <= v


def check_expectation_bounds(q, p, f, params, M=None):
    """Certificates for
        E_q sum_{i>=2} ||p(m_i|x m_<i) - p(m_i|y m_<i)||_1 <= 8 sqrt(C M)
        log2 E_q |E_{q(xy|m)}[(-1)^f]| >= -delta M / (12 I)
    """
    q = _as_rect(q, p)
    if M is None:
        M = marginal_cost(q, p, f, params).value
    qt = q.table()
    pm = _PMarg(p)
    C = p.C
    lhs = Fraction(0)
    for (x, y, m), v in qt.items():
        tot = Fraction(0)
        for i in range(2, C + 1):
            a = pm.dist_given_x(i, x, m)
            b = pm.dist_given_y(i, y, m)
            tot += sum(abs(a[s] - b[s]) for s in a)
        lhs += v * tot
    certs = []
    if not M.is_finite:
        certs.append(Certificate("pinsker_sum", lhs, "<=", M, "expected l1 drift <= 8 sqrt(C M)",
                                 note="infinite cost"))
    else:
        # lhs <= 8 sqrt(C M)  <=>  lhs^2 <= 64 C M  (both sides non-negative)
        certs.append(Certificate("pinsker_sum", lhs ** 2, "<=", M.scale(64 * C),
                                 "expected l1 drift <= 8 sqrt(C M), squared"))
    adv = advantage_by_m(qt, f)
    e = sum((s * abs(a) for s, a in adv.values()), Fraction(0))
    rhs = M.scale(-params.delta / (12 * params.I)) if M.is_finite else LogExpr.inf(-1)
    certs.append(Certificate("advantage_expectation", LogExpr.log2(e), ">=", rhs,
                             "E_q|adv| >= 2^-(delta M / 12 I)", domain="log2"))
    return certs
