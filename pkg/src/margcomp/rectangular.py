"""Rectangular distributions and sets, multiplicativity identities and the
marginal / external information costs."""

import itertools
import math
import random
from fractions import Fraction

from .prob import LogExpr, as_fraction, frac_str, lmax, marginal, total
from .protocol import CapExceeded, advantage_by_m

DELTA = Fraction(1, 15)


class NotRectangular(ValueError):
    pass


class SupportViolation(ValueError):
    pass


class CostParams:
    """Tunable constants.  I >= 1, delta fixed to 1/15 unless overridden."""

    def __init__(self, I=1, delta=DELTA, K=3, beta=Fraction(1, 8), eps=Fraction(1, 64), L=None):
        self.I = as_fraction(I)
        self.delta = as_fraction(delta)
        self.K = as_fraction(K)
        self.beta = as_fraction(beta)
        self.eps = as_fraction(eps)
        self.L = L
        if self.I < 1:
            raise ValueError("I must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def exponent(self):
        """12 I / delta, the power on the inverse advantage."""
        return 12 * self.I / self.delta

    def record(self):
        return {"I": frac_str(self.I), "delta": frac_str(self.delta), "K": frac_str(self.K),
                "beta": frac_str(self.beta), "eps": frac_str(self.eps)}


class RectSet:
    """Indicator 1_A(xm) * 1_B(ym), stored per message as (A_m, B_m)."""

    def __init__(self, slices):
        self.slices = {m: (frozenset(a), frozenset(b)) for m, (a, b) in dict(slices).items()
                       if a and b}

    @classmethod
    def full(cls, table):
        sl = {}
        for (x, y, m) in table:
            a, b = sl.setdefault(m, (set(), set()))
            a.add(x)
            b.add(y)
        return cls(sl)

    @classmethod
    def from_predicates(cls, inA, inB, X, Y, ms):
        return cls({m: ({x for x in X if inA(x, m)}, {y for y in Y if inB(y, m)}) for m in ms})

    def inA(self, x, m):
        s = self.slices.get(m)
        return s is not None and x in s[0]

    def inB(self, y, m):
        s = self.slices.get(m)
        return s is not None and y in s[1]

    def __contains__(self, key):
        x, y, m = key
        s = self.slices.get(m)
        return s is not None and x in s[0] and y in s[1]

    def restrict(self, table):
        return {k: v for k, v in table.items() if k in self}

    def mass(self, table):
        return total(table, lambda k: k in self)

    def is_subset_of(self, other, table):
        return all(k in other for k in table if k in self)

    def intersect(self, other):
        out = {}
        for m, (a, b) in self.slices.items():
            if m in other.slices:
                a2, b2 = other.slices[m]
                out[m] = (a & a2, b & b2)
        return RectSet(out)

    def encoding(self, order_x, order_y, order_m):
        """Tuple used for lexicographic tie-breaking."""
        out = []
        for m in order_m:
            a, b = self.slices.get(m, ((), ()))
            out.append((sum(1 << i for i, x in enumerate(order_x) if x in a),
                        sum(1 << i for i, y in enumerate(order_y) if y in b)))
        return tuple(out)

    def members(self, table):
        return sorted((k for k in table if k in self), key=repr)

    def __repr__(self):
        return "RectSet(%d messages)" % len(self.slices)


class RectDist:
    """q(xym) = mu(xy) * A(xm) * B(ym)."""

    def __init__(self, mu, A, B, check=True):
        self.mu = {k: as_fraction(v) for k, v in mu.items() if v}
        self.A = {k: as_fraction(v) for k, v in A.items() if v}
        self.B = {k: as_fraction(v) for k, v in B.items() if v}
        self._table = None
        if check:
            if any(v < 0 for v in list(self.A.values()) + list(self.B.values())):
                raise ValueError("negative rectangular weight")
            t = total(self.table())
            if t != 1:
                raise ValueError("rectangular weights sum to %s, not 1" % t)

    def table(self):
        if self._table is None:
            byx = {}
            for (x, m), a in self.A.items():
                byx.setdefault(m, []).append((x, a))
            out = {}
            for (y, m), b in self.B.items():
                for x, a in byx.get(m, ()):
                    w = self.mu.get((x, y), 0)
                    if w:
                        out[(x, y, m)] = w * a * b
            self._table = out
        return self._table

    @classmethod
    def from_table(cls, table, mu):
        A, B = extract_factors(table, mu)
        return cls(mu, A, B)

    @classmethod
    def from_protocol(cls, p):
        """p itself, split into its Alice factor and its Bob factor."""
        A, B = protocol_factors(p)
        return cls(p.mu, A, B)

    def record(self):
        return {
            "A": [[repr(x), repr(m), frac_str(v)] for (x, m), v in sorted(self.A.items(), key=repr)],
            "B": [[repr(y), repr(m), frac_str(v)] for (y, m), v in sorted(self.B.items(), key=repr)],
        }


def protocol_factors(p):
    """A(xm) = p(m0) prod_odd p(m_i|x m_<i),  B(ym) = prod_even p(m_i|y m_<i)."""
    A, B = {}, {}
    for (x, y, m) in p.table():
        if (x, m) not in A:
            a = p.p0[m[0]]
            for i in range(1, p.C + 1, 2):
                a *= p.cond(i, x, m[:i])[m[i]]
            A[(x, m)] = a
        if (y, m) not in B:
            b = Fraction(1)
            for i in range(2, p.C + 1, 2):
                b *= p.cond(i, y, m[:i])[m[i]]
            B[(y, m)] = b
    return A, B


def extract_factors(table, mu):
    """Weights A, B with table = mu * A * B, or raise NotRectangular."""
    by_m = {}
    for (x, y, m), v in table.items():
        if v:
            if not mu.get((x, y)):
                raise NotRectangular("mass at %r where mu vanishes" % ((x, y, m),))
            by_m.setdefault(m, {})[(x, y)] = v / mu[(x, y)]
    A, B = {}, {}
    for m, ent in by_m.items():
        rows = sorted({x for x, _ in ent}, key=repr)
        cols = sorted({y for _, y in ent}, key=repr)
        a, b = {}, {}
        for x0 in rows:
            if x0 in a:
                continue
            a[x0] = Fraction(1)
            queue = [("x", x0)]
            while queue:
                side, u = queue.pop()
                if side == "x":
                    for y in cols:
                        r = ent.get((u, y))
                        if r and y not in b:
                            b[y] = r / a[u]
                            queue.append(("y", y))
                else:
                    for x in rows:
                        r = ent.get((x, u))
                        if r and x not in a:
                            a[x] = r / b[u]
                            queue.append(("x", x))
        for x in rows:
            for y in cols:
                if mu.get((x, y)):
                    if ent.get((x, y), 0) != a[x] * b[y]:
                        raise NotRectangular("message %r does not factor at %r" % (m, (x, y)))
        for x, v in a.items():
            A[(x, m)] = v
        for y, v in b.items():
            B[(y, m)] = v
    return A, B


def is_rectangular(table, mu):
    try:
        extract_factors(table, mu)
        return True
    except NotRectangular:
        return False


def cross_ratio_holds(table, mu):
    """q(xym)q(x'y'm)mu(x'y)mu(xy') = q(x'ym)q(xy'm)mu(xy)mu(x'y') everywhere."""
    X = sorted({x for x, _ in mu}, key=repr)
    Y = sorted({y for _, y in mu}, key=repr)
    ms = {m for (_, _, m) in table}
    for m in ms:
        for x, x2 in itertools.combinations(X, 2):
            for y, y2 in itertools.combinations(Y, 2):
                lhs = (table.get((x, y, m), 0) * table.get((x2, y2, m), 0)
                       * mu.get((x2, y), 0) * mu.get((x, y2), 0))
                rhs = (table.get((x2, y, m), 0) * table.get((x, y2, m), 0)
                       * mu.get((x, y), 0) * mu.get((x2, y2), 0))
                if lhs != rhs:
                    return False
    return True


def condition_on_set(table, R):
    """p(. | R) for a RectSet R."""
    sub = R.restrict(table)
    t = total(sub)
    if t == 0:
        from .prob import ZeroMassEvent
        raise ZeroMassEvent("rectangular set has zero mass")
    return {k: v / t for k, v in sub.items()}


# ---------------------------------------------------------------------------
# costs


class CostReport:
    def __init__(self, value, argmax, breakdown, kind):
        self.value = value
        self.argmax = argmax
        self.breakdown = breakdown
        self.kind = kind

    @property
    def bits(self):
        return float(self.value)

    def record(self):
        return {"kind": self.kind, "value_bits": float(self.value), "value": self.value.to_record(),
                "argmax": repr(self.argmax),
                "breakdown": {k: float(v) for k, v in self.breakdown.items()}}

    def __repr__(self):
        return "CostReport(%s=%.4f at %r)" % (self.kind, float(self.value), self.argmax)


class _Marg:
    """Cached marginals of a joint table keyed (x, y, m)."""

    def __init__(self, table):
        self.t = table
        self.xm = marginal(table, lambda k: (k[0], k[2]))
        self.ym = marginal(table, lambda k: (k[1], k[2]))
        self.m = marginal(table, lambda k: k[2])


def _mu_conditionals(mu):
    px = marginal(mu, lambda k: k[0])
    py = marginal(mu, lambda k: k[1])
    return px, py


def _check_support(qt, pt):
    for k in qt:
        if not pt.get(k):
            raise SupportViolation("q has mass at %r outside supp(p)" % (k,))


def point_terms(qt, pt, mu, f, params, kind="marginal", qm=None, adv=None):
    """Per support point of q, the four log-factors of the cost as LogExprs."""
    _check_support(qt, pt)
    qm = qm or _Marg(qt)
    adv = adv or advantage_by_m(qt, f)
    px, py = _mu_conditionals(mu)
    E = params.exponent
    out = {}
    for (x, y, m), qv in qt.items():
        pv = pt[(x, y, m)]
        muv = mu[(x, y)]
        a = abs(adv[m][1])
        advterm = LogExpr.inf(1) if a == 0 else LogExpr({a: -E})
        dens = LogExpr({qv / pv: params.I})
        if kind == "marginal":
            t1 = LogExpr.log2((qv / qm.ym[(y, m)]) / (muv / py[y]))
            t2 = LogExpr.log2((qv / qm.xm[(x, m)]) / (muv / px[x]))
            out[(x, y, m)] = {"info_x": t1, "info_y": t2, "density": dens, "advantage": advterm}
        else:
            t = LogExpr.log2((qv / qm.m[m]) / muv)
            out[(x, y, m)] = {"info_xy": t, "density": dens, "advantage": advterm}
    return out


def _sup(terms, kind):
    keys = sorted(terms, key=repr)
    vals = []
    for k in keys:
        s = LogExpr()
        for v in terms[k].values():
            s = s + v
        vals.append(s)
    if not vals:
        return CostReport(LogExpr.inf(-1), None, {}, kind)
    best, i = lmax(vals)
    return CostReport(best, keys[i], terms[keys[i]], kind)


def _tables(q, p):
    qt = q.table() if hasattr(q, "table") else q
    pt = p.table() if hasattr(p, "table") else p
    return qt, pt


def marginal_cost(q, p, f, params, check_rect=True):
    """sup over supp(q) of the marginal-information log-expression."""
    qt, pt = _tables(q, p)
    mu = p.mu
    if check_rect and not isinstance(q, RectDist):
        extract_factors(qt, mu)
    return _sup(point_terms(qt, pt, mu, f, params, "marginal"), "marginal")


def external_cost(q, p, f, params, check_rect=True):
    """sup over supp(q) of the external variant log(q(xy|m)/p(xy) ...)."""
    qt, pt = _tables(q, p)
    mu = p.mu
    if check_rect and not isinstance(q, RectDist):
        extract_factors(qt, mu)
    return _sup(point_terms(qt, pt, mu, f, params, "external"), "external")


def cost_float(qt, pt, mu, f, params, kind="marginal"):
    """Float version of the cost, for search heuristics only."""
    qm = _Marg(qt)
    adv = advantage_by_m(qt, f)
    px, py = _mu_conditionals(mu)
    I = float(params.I)
    E = float(params.exponent)
    best = -math.inf
    for (x, y, m), qv in qt.items():
        a = abs(adv[m][1])
        if a == 0:
            return math.inf
        pv = pt[(x, y, m)]
        muv = mu[(x, y)]
        v = I * math.log2(qv / pv) - E * math.log2(a)
        if kind == "marginal":
            v += math.log2((qv / qm.ym[(y, m)]) / (muv / py[y]))
            v += math.log2((qv / qm.xm[(x, m)]) / (muv / px[x]))
        else:
            v += math.log2((qv / qm.m[m]) / muv)
        best = max(best, v)
    return best


# ---------------------------------------------------------------------------
# multiplicativity on two-copy inputs


def m_one(m, y2):
    return (m[0], (y2, m[1])) + tuple(m[2:]) if len(m) > 1 else ((m[0], y2),)


def m_two(m, x1):
    return ((m[0], x1),) + tuple(m[1:])


def check_multiplicativity(v):
    """The four product identities for a rectangular v on two-copy inputs.

    Returns {identity: (holds, number of points checked)}.
    """
    t = v.table() if hasattr(v, "table") else v
    W = marginal(t, lambda k: (k[0][0], k[1][1], k[2]))
    XW = marginal(t, lambda k: (k[0], k[1][1], k[2]))
    YW = marginal(t, lambda k: (k[1], k[0][0], k[2]))
    Y1W = marginal(t, lambda k: (k[1][0], k[0][0], k[1][1], k[2]))
    X2W = marginal(t, lambda k: (k[0][1], k[0][0], k[1][1], k[2]))
    YM = marginal(t, lambda k: (k[1], k[2]))
    XM = marginal(t, lambda k: (k[0], k[2]))
    X1YM = marginal(t, lambda k: (k[0][0], k[1], k[2]))
    res = {}
    ok = [True, True, True, True]
    for ((x1, x2), (y1, y2), m), val in t.items():
        w = (x1, y2, m)
        wv = W[w]
        # (1) v(xy|w) = v(y1|w) v(x2|w)
        if val / wv != (Y1W[(y1, x1, y2, m)] / wv) * (X2W[(x2, x1, y2, m)] / wv):
            ok[0] = False
        # (2) v(xw) v(yw) = v(xym) v(w)
        if XW[((x1, x2), y2, m)] * YW[((y1, y2), x1, m)] != val * wv:
            ok[1] = False
        # (3) v(x1|y1 y2 m) v(x2|x1 y2 m) = v(x|ym)
        a = X1YM[(x1, (y1, y2), m)] / YM[((y1, y2), m)]
        b = XW[((x1, x2), y2, m)] / wv
        if a * b != val / YM[((y1, y2), m)]:
            ok[2] = False
        # (4) v(y2|x1 x2 m) v(y1|x1 y2 m) = v(y|xm)
        X1X2M = XM[((x1, x2), m)]
        c = XW[((x1, x2), y2, m)] / X1X2M
        d = Y1W[(y1, x1, y2, m)] / wv
        if c * d != val / X1X2M:
            ok[3] = False
    n = len(t)
    for i, name in enumerate(["xy|w", "xw*yw", "x|ym", "y|xm"]):
        res[name] = (ok[i], n)
    return res


# ---------------------------------------------------------------------------
# witness search


def _rect_candidates(entries, X, Y):
    """All (maskA, maskB) rectangles of one message slice; yields (A, B, cells)."""
    for ka in range(1, len(X) + 1):
        for A in itertools.combinations(X, ka):
            for kb in range(1, len(Y) + 1):
                for B in itertools.combinations(Y, kb):
                    cells = [(x, y) for x in A for y in B if (x, y) in entries]
                    if cells:
                        yield A, B, cells


def _local_costs(pt, mu, f, params, X, Y, kind, max_side=16):
    """Per message, the (weight, local sup) of conditioning on each rectangle."""
    by_m = {}
    for (x, y, m), v in pt.items():
        by_m.setdefault(m, {})[(x, y)] = v
    if len(X) + len(Y) > max_side:
        raise CapExceeded("per-message rectangle enumeration over %d labels" % (len(X) + len(Y)))
    px, py = _mu_conditionals(mu)
    E = float(params.exponent)
    out = {}
    for m in sorted(by_m, key=repr):
        ent = by_m[m]
        cands = []
        for A, B, cells in _rect_candidates(ent, X, Y):
            W = sum(ent[c] for c in cells)
            s = sum(ent[c] * (1 if f(*c) == 0 else -1) for c in cells)
            if s == 0:
                continue
            rowm = {}
            colm = {}
            for (x, y) in cells:
                rowm[x] = rowm.get(x, 0) + ent[(x, y)]
                colm[y] = colm.get(y, 0) + ent[(x, y)]
            loc = -math.inf
            for (x, y) in cells:
                v = ent[(x, y)]
                muv = mu[(x, y)]
                if kind == "marginal":
                    t = (math.log2((v / colm[y]) / (muv / py[y]))
                         + math.log2((v / rowm[x]) / (muv / px[x])))
                else:
                    t = math.log2((v / W) / muv)
                loc = max(loc, t)
            loc -= E * math.log2(abs(s / W))
            cands.append((loc, W, A, B))
        out[m] = cands
    return out


def best_conditioning(pt, mu, f, params, kind="marginal"):
    """Exact minimizer (up to float ranking) of cost over q = p(.|R), R rectangular.

    cost(p(.|R)) = I*log(1/p(R)) + max_m local_m(R_m), so for every threshold t
    each message independently keeps its heaviest rectangle with local <= t.
    """
    X = sorted({x for x, _ in mu}, key=repr)
    Y = sorted({y for _, y in mu}, key=repr)
    loc = _local_costs(pt, mu, f, params, X, Y, kind)
    thresholds = sorted({c[0] for cs in loc.values() for c in cs})
    I = float(params.I)
    best = (math.inf, None)
    for t in thresholds:
        W = 0
        choice = {}
        realized = -math.inf
        for m, cs in loc.items():
            top = None
            for c in cs:
                if c[0] <= t and (top is None or c[1] > top[1]):
                    top = c
            if top is not None:
                W += top[1]
                choice[m] = (top[2], top[3])
                realized = max(realized, top[0])
        if W == 0:
            continue
        val = -I * math.log2(W) + realized
        if val < best[0] - 1e-12:
            best = (val, RectSet(choice))
    return best


def _refine(q, pt, mu, f, params, kind, steps=200):
    """Coordinate-wise x2 and /2 moves on A and B, kept when the float cost drops."""
    A, B = dict(q.A), dict(q.B)
    coords = [("A", k) for k in sorted(A, key=repr)] + [("B", k) for k in sorted(B, key=repr)]
    if not coords:
        return q
    cur = cost_float(q.table(), pt, mu, f, params, kind)
    used = 0
    i = 0
    while used < steps:
        side, k = coords[i % len(coords)]
        i += 1
        for factor in (Fraction(2), Fraction(1, 2)):
            used += 1
            A2, B2 = dict(A), dict(B)
            (A2 if side == "A" else B2)[k] *= factor
            tt = RectDist(mu, A2, B2, check=False).table()
            z = total(tt)
            c = cost_float({kk: v / z for kk, v in tt.items()}, pt, mu, f, params, kind)
            if c < cur - 1e-12:
                cur, A, B = c, A2, B2
                break
            if used >= steps:
                break
    z = total(RectDist(mu, A, B, check=False).table())
    return RectDist(mu, {k: v / z for k, v in A.items()}, B)


def witness_search(p, f, params, kind="marginal", refine_steps=200, greedy_seed=0):
    """Certified upper bound on the infimum cost: the best explicit q found.

    Candidates: q = p; q = p(.|R) for the optimal rectangular R (exact
    per-message decomposition, or randomized greedy beyond the cap); then
    multiplicative refinement of the winner's weights.
    """
    pt = p.table()
    mu = p.mu
    costfn = marginal_cost if kind == "marginal" else external_cost
    cands = []
    qp = RectDist.from_table(pt, mu)
    cands.append(("q=p", qp))
    X = sorted({x for x, _ in mu}, key=repr)
    Y = sorted({y for _, y in mu}, key=repr)
    try:
        val, R = best_conditioning(pt, mu, f, params, kind)
    except CapExceeded:
        val, R = _greedy_conditioning(pt, mu, f, params, kind, random.Random(greedy_seed))
    if R is not None:
        cands.append(("q=p|R", RectDist.from_table(condition_on_set(pt, R), mu)))
    best = None
    for name, q in cands:
        rep = costfn(q, p, f, params)
        if best is None or rep.value < best[2].value:
            best = (name, q, rep)
    if refine_steps and best[2].value.is_finite:
        q2 = _refine(best[1], pt, mu, f, params, kind, refine_steps)
        rep2 = costfn(q2, p, f, params)
        if rep2.value < best[2].value:
            best = ("refined", q2, rep2)
    return best[1], best[2], best[0]


def _greedy_conditioning(pt, mu, f, params, kind, rng, restarts=20):
    """Random single-message rectangle trims, keeping improvements."""
    best = (cost_float(pt, pt, mu, f, params, kind), RectSet.full(pt))
    for _ in range(restarts):
        R = RectSet.full(pt)
        cur = best[0]
        for _ in range(50):
            m = rng.choice(sorted(R.slices, key=repr))
            a, b = R.slices[m]
            sl = dict(R.slices)
            if rng.random() < 0.5 and len(a) > 1:
                a = a - {rng.choice(sorted(a, key=repr))}
            elif len(b) > 1:
                b = b - {rng.choice(sorted(b, key=repr))}
            sl[m] = (a, b)
            R2 = RectSet(sl)
            sub = R2.restrict(pt)
            if not sub:
                continue
            z = total(sub)
            c = cost_float({k: v / z for k, v in sub.items()}, pt, mu, f, params, kind)
            if c < cur:
                cur, R = c, R2
        if cur < best[0]:
            best = (cur, R)
    return best
