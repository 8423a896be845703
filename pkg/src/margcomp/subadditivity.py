"""Splitting a two-copy rectangular witness into a single-copy one.

Inputs are pairs x = (x1, x2), y = (y1, y2) with p(x1y1x2y2) = p(x1y1) p(x2y2).
For a transcript m, w = (x1, y2, m); the copy-1 transcript is
m1 = (m0, (y2, m1), m2, ...) and the copy-2 transcript is m2 = ((m0, x1), m1, ...).
"""

import math
from fractions import Fraction

from .prob import Certificate, LogExpr, ceil_log2, lmax, marginal, total
from .protocol import ProtocolDist, ShapeMismatch, pad_rounds, xor_combine
from .construction import restrict_rect
from .rectangular import RectDist, RectSet, check_multiplicativity, m_one, m_two, marginal_cost
from .sets import build_G_per_m, maximize_R, trim, trim_certificates


class IdentityViolation(AssertionError):
    """A product identity failed: this is a bug, never an input condition."""


class EmptyAfterPruning(ValueError):
    def __init__(self, stage, msg=""):
        super().__init__("%s emptied%s" % (stage, ": " + msg if msg else ""))
        self.stage = stage


def _key(v):
    return repr(v)


def copy_laws(mu):
    """(mu1, mu2) with mu = mu1 x mu2, or ValueError."""
    mu1 = marginal(mu, lambda k: (k[0][0], k[1][0]))
    mu2 = marginal(mu, lambda k: (k[0][1], k[1][1]))
    for ((x1, x2), (y1, y2)), v in mu.items():
        if v != mu1[(x1, y1)] * mu2[(x2, y2)]:
            raise ValueError("input law is not a product across copies")
    if total(mu) != sum(a * b for a in mu1.values() for b in mu2.values()):
        raise ValueError("input law is not a product across copies")
    return mu1, mu2


def _build(X, Y, mu, alphabets, p0, cond, name):
    """ProtocolDist with tables cond(i, inp, prefix) on every reachable state."""
    C = len(alphabets) - 1
    tables = [dict() for _ in range(C)]
    for (x, y) in sorted(mu, key=_key):
        stack = [(s,) for s, v in p0.items() if v]
        while stack:
            pre = stack.pop()
            i = len(pre)
            if i == C + 1:
                continue
            inp = x if i % 2 else y
            t = tables[i - 1]
            if (inp, pre) not in t:
                t[(inp, pre)] = cond(i, inp, pre)
            for s, v in t[(inp, pre)].items():
                if v:
                    stack.append(pre + (s,))
    return ProtocolDist(X, Y, mu, alphabets, p0, tables, name=name)


def _uniform(alph):
    return {s: Fraction(1, len(alph)) for s in alph}


def _sorted_labels(vals):
    return tuple(sorted(set(vals), key=_key))


def w_of(key):
    (x1, _), (_, y2), m = key
    return (x1, y2, m)


class ChildPair:
    """Children of a two-copy instance and, after split(), the chosen witness."""

    def __init__(self, **kw):
        self.chosen_side = None
        self.r_final = None
        self.child = None
        self.certificates = []
        self.__dict__.update(kw)

    @property
    def ok(self):
        return all(self.certificates)

    def side(self, c):
        """(protocol, witness, function) of copy c."""
        return (self.p1, self.q1, self.f) if c == 1 else (self.p2, self.q2, self.g)

    def record(self):
        out = {
            "identities": {k: {"holds": v[0], "points": v[1]} for k, v in sorted(self.identities.items())},
            "certificates": [c.record() for c in self.certificates],
        }
        if self.chosen_side is not None:
            out.update(self.trace)
            out["chosen_side"] = self.chosen_side
        return out


def build_children(p, q, f, g):
    """Children p1, q1, p2, q2 of (p, q) with all identities checked exactly.

    q may be a RectDist or a joint table over two-copy inputs.  Raises
    IdentityViolation if any identity fails at any support point.
    """
    if p.C == 0:
        p = pad_rounds(p, 1)
    pt = p.table()
    qt = q.table() if hasattr(q, "table") else q
    qt = {k: v for k, v in qt.items() if v}
    mu1, mu2 = copy_laws(p.mu)
    X1 = _sorted_labels(x[0] for x in p.X)
    X2 = _sorted_labels(x[1] for x in p.X)
    Y1 = _sorted_labels(y[0] for y in p.Y)
    Y2 = _sorted_labels(y[1] for y in p.Y)
    C = p.C

    mult = check_multiplicativity(qt)
    if not all(h for h, _ in mult.values()):
        raise IdentityViolation("q fails the product identities: %r" % mult)

    # q(x1 y2 m_{<=i}) for i = 0..C
    pre = [marginal(qt, lambda k, i=i: (k[0][0], k[1][1], k[2][:i + 1])) for i in range(C + 1)]
    qx1m0 = marginal(qt, lambda k: (k[0][0], k[2][:1]))
    qm0x1 = marginal(qt, lambda k: (k[2][0], k[0][0]))

    def qstep(i, x1, y2, m_le_i):
        """q(m_i | x1 y2 m_{<i}) at the realized symbol."""
        den = pre[i - 1].get((x1, y2, m_le_i[:i]), 0)
        return pre[i].get((x1, y2, m_le_i), 0) / den if den else None

    def pcond_or_uniform(i, inp, prefix):
        try:
            return p.cond(i, inp, prefix)
        except ShapeMismatch:
            return _uniform(p.alphabets[i])

    alph1 = [p.alphabets[0], tuple((y2, s) for y2 in Y2 for s in p.alphabets[1])] + list(p.alphabets[2:])

    def cond1(i, inp, prefix):
        if i == 1:
            x1, m0 = inp, prefix
            den = qx1m0.get((x1, m0), 0)
            if not den:
                return _uniform(alph1[1])
            out = {}
            for (y2, s) in alph1[1]:
                v = pre[1].get((x1, y2, m0 + (s,)), 0) / den
                if v:
                    out[(y2, s)] = v
            return out
        y2 = prefix[1][0]
        m = (prefix[0], prefix[1][1]) + tuple(prefix[2:])
        if i % 2 == 0:
            return pcond_or_uniform(i, (inp, y2), m)
        out = {}
        for s in alph1[i]:
            v = qstep(i, inp, y2, m + (s,))
            if v is None:
                return _uniform(alph1[i])
            if v:
                out[s] = v
        return out

    p1 = _build(X1, Y1, mu1, alph1, dict(p.p0), cond1, name="copy1(%s)" % p.name)

    alph2 = [tuple((m0, x1) for m0 in p.alphabets[0] for x1 in X1)] + list(p.alphabets[1:])
    p0_2 = {k: v for k, v in qm0x1.items() if v}

    def cond2(i, inp, prefix):
        x1 = prefix[0][1]
        m = (prefix[0][0],) + tuple(prefix[1:])
        if i % 2 == 1:
            return pcond_or_uniform(i, (x1, inp), m)
        out = {}
        for s in alph2[i]:
            v = qstep(i, x1, inp, m + (s,))
            if v is None:
                return _uniform(alph2[i])
            if v:
                out[s] = v
        return out

    p2 = _build(X2, Y2, mu2, alph2, p0_2, cond2, name="copy2(%s)" % p.name)

    q1t, q2t = {}, {}
    for ((x1, x2), (y1, y2), m), v in qt.items():
        k1 = (x1, y1, m_one(m, y2))
        k2 = (x2, y2, m_two(m, x1))
        q1t[k1] = q1t.get(k1, 0) + v
        q2t[k2] = q2t.get(k2, 0) + v
    q1 = RectDist.from_table(q1t, mu1)
    q2 = RectDist.from_table(q2t, mu2)

    ids = _check_identities(pt, qt, p.mu, p1.table(), p2.table(), q1t, q2t, mu1, mu2, f, g)
    bad = [k for k, (h, _) in ids.items() if not h]
    if bad:
        raise IdentityViolation("identities failed: %s" % ", ".join(bad))
    ids.update({"prod." + k: v for k, v in mult.items()})
    return ChildPair(p=p, q=q, qt=qt, f=f, g=g, p1=p1, p2=p2, q1=q1, q2=q2,
                     mu1=mu1, mu2=mu2, identities=ids)


def _check_identities(pt, qt, mu, p1t, p2t, q1t, q2t, mu1, mu2, f, g):
    qym = marginal(qt, lambda k: (k[1], k[2]))
    qxm = marginal(qt, lambda k: (k[0], k[2]))
    qw = marginal(qt, w_of)
    muy = marginal(mu, lambda k: k[1])
    mux = marginal(mu, lambda k: k[0])
    q1y = marginal(q1t, lambda k: (k[1], k[2]))
    q1x = marginal(q1t, lambda k: (k[0], k[2]))
    q2y = marginal(q2t, lambda k: (k[1], k[2]))
    q2x = marginal(q2t, lambda k: (k[0], k[2]))
    mu1x = marginal(mu1, lambda k: k[0])
    mu1y = marginal(mu1, lambda k: k[1])
    mu2x = marginal(mu2, lambda k: k[0])
    mu2y = marginal(mu2, lambda k: k[1])

    # signed w-advantages: q1 given (x1, m1), q2 given (y2, m2), q given w
    s1, s2, s = {}, {}, {}
    for (x1, y1, m1), v in q1t.items():
        k = (x1, m1)
        s1[k] = s1.get(k, 0) + (v if f(x1, y1) == 0 else -v)
    for (x2, y2, m2), v in q2t.items():
        k = (y2, m2)
        s2[k] = s2.get(k, 0) + (v if g(x2, y2) == 0 else -v)
    for key, v in qt.items():
        (x1, x2), (y1, y2), m = key
        s[w_of(key)] = s.get(w_of(key), 0) + (v if f(x1, y1) ^ g(x2, y2) == 0 else -v)

    ok = {"p1p2_feature": True, "rectsub": True, "1infosub": True, "2infosub": True, "advsub": True}
    for key, qv in qt.items():
        (x1, x2), (y1, y2), m = key
        w = w_of(key)
        m1, m2 = m_one(m, y2), m_two(m, x1)
        k1, k2 = (x1, y1, m1), (x2, y2, m2)
        pv = pt.get(key, 0)
        a1, a2 = p1t.get(k1, 0), p2t.get(k2, 0)
        if a1 * a2 != pv * qw[w]:
            ok["p1p2_feature"] = False
        if not a1 or not a2 or not pv:
            ok["rectsub"] = False
            continue
        if (q1t[k1] / a1) * (q2t[k2] / a2) != qv / pv:
            ok["rectsub"] = False
        lhs = (q1t[k1] / q1y[(y1, m1)]) / (mu1[(x1, y1)] / mu1y[y1]) * \
              (q2t[k2] / q2y[(y2, m2)]) / (mu2[(x2, y2)] / mu2y[y2])
        if lhs != (qv / qym[(key[1], m)]) / (mu[key[:2]] / muy[key[1]]):
            ok["1infosub"] = False
        lhs = (q1t[k1] / q1x[(x1, m1)]) / (mu1[(x1, y1)] / mu1x[x1]) * \
              (q2t[k2] / q2x[(x2, m2)]) / (mu2[(x2, y2)] / mu2x[x2])
        if lhs != (qv / qxm[(key[0], m)]) / (mu[key[:2]] / mux[key[0]]):
            ok["2infosub"] = False
        # q1(x1 m1) = q(w) = q2(y2 m2)
        if abs(s1[(x1, m1)]) * abs(s2[(y2, m2)]) != abs(s[w]) * qw[w]:
            ok["advsub"] = False
    n = len(qt)
    return {k: (v, n) for k, v in ok.items()}


# ---------------------------------------------------------------------------
# the split pipeline


class _Side:
    """Views of one child: its table, the w/m maps and which input is summed.

    Side 1 points are (x1, y1, m1) with the summed input y1 and the kept one
    x1; side 2 points are (x2, y2, m2) with summed x2 and kept y2.
    """

    def __init__(self, cp, c):
        self.c = c
        self.proto, q, self.fn = cp.side(c)
        self.qt = q.table()
        self.pt = self.proto.table()
        self.mu = cp.mu1 if c == 1 else cp.mu2
        self.keep = 0 if c == 1 else 1
        self.summ = 1 - self.keep

    def m_of(self, mc):
        if self.c == 1:
            return (mc[0], mc[1][1]) + tuple(mc[2:])
        return (mc[0][0],) + tuple(mc[1:])

    def w_of(self, k):
        a, b, mc = k
        if self.c == 1:
            return (a, mc[1][0], self.m_of(mc))
        return (mc[0][1], b, self.m_of(mc))

    def sign(self, k):
        return 1 if self.fn(k[0], k[1]) == 0 else -1


def _factors(sd, E, I):
    """log2 of the per-w factor
        |adv_w|^-E * sup_s (q/p)^I * q(a|b mc)/mu(a|b) * q(b|a mc)/mu(b|a)
    over the summed input s, for every w of this child."""
    qt, pt, mu = sd.qt, sd.pt, sd.mu
    qb = marginal(qt, lambda k: (k[1], k[2]))
    qa = marginal(qt, lambda k: (k[0], k[2]))
    mua = marginal(mu, lambda k: k[0])
    mub = marginal(mu, lambda k: k[1])
    wm = {}
    sw = {}
    pts = {}
    for k, v in qt.items():
        w = sd.w_of(k)
        wm[w] = wm.get(w, 0) + v
        sw[w] = sw.get(w, 0) + sd.sign(k) * v
        pts.setdefault(w, []).append(k)
    out = {}
    adv = {}
    for w in sorted(pts, key=_key):
        a = abs(sw[w]) / wm[w]
        adv[w] = sw[w] / wm[w]
        vals = []
        for k in sorted(pts[w], key=_key):
            a_, b_, mc = k
            v = qt[k]
            t = LogExpr.product((v / pt[k], I),
                                ((v / qb[(b_, mc)]) / (mu[(a_, b_)] / mub[b_]), 1),
                                ((v / qa[(a_, mc)]) / (mu[(a_, b_)] / mua[a_]), 1))
            vals.append(t)
        best, _ = lmax(vals)
        out[w] = (LogExpr.inf(1) if a == 0 else LogExpr({a: -E})) + best
    return out, adv, wm


def split(cp, params, gamma=Fraction(1, 2), force_side=None):
    """Run the full pipeline on a ChildPair from build_children.

    Fills cp.chosen_side, cp.r_final (the single-copy witness r1), cp.child
    (its protocol and function), cp.certificates and cp.trace.
    """
    gamma = Fraction(gamma)
    if not Fraction(1, 3) <= gamma <= Fraction(2, 3):
        raise ValueError("gamma must lie in [1/3, 2/3]")
    delta = Fraction(params.delta)
    I = Fraction(params.I)
    E = params.exponent
    qt, pt = cp.qt, cp.p.table()
    fg = xor_combine(cp.f, cp.g)
    certs = []

    M = marginal_cost(cp.qt, cp.p, fg, params).value
    if not M.is_finite:
        raise ValueError("witness has infinite cost")

    G, gcerts = build_G_per_m(qt, cp.f, cp.g, delta)
    certs.extend(gcerts)
    qm = marginal(qt, lambda k: k[2])
    qw = marginal(qt, w_of)
    qG = {m: sum((qw[(x1, y2, m)] for (x1, y2) in G[m]), Fraction(0)) / qm[m] for m in G}
    inG = {(x1, y2, m) for m in G for (x1, y2) in G[m]}

    sides = {1: _Side(cp, 1), 2: _Side(cp, 2)}
    F = {}
    adv = {}
    wmass = {}
    for c in (1, 2):
        F[c], adv[c], wmass[c] = _factors(sides[c], E, I)

    def P_log(m):
        return M + LogExpr.product((1 - delta, -E), (qG[m], 12 * I))

    for w in sorted(inG, key=_key):
        certs.append(Certificate("split.subadd1", F[1][w] + F[2][w], "<=", P_log(w[2]),
                                 "per-w product of the two child factors", domain="log2"))

    L = {w for w in inG if (F[1][w] * (1 - gamma)).cmp(F[2][w] * gamma) <= 0}

    def Uset(Lc):
        out = set()
        for m in G:
            inside = sum((qw[w] for w in Lc if w[2] == m), Fraction(0))
            if inside / (qG[m] * qm[m]) >= Fraction(1, 2):
                out.add(m)
        return out

    L_by = {1: L, 2: inG - L}
    U_by = {1: Uset(L_by[1]), 2: Uset(L_by[2])}
    qU = {c: sum((qm[m] for m in U_by[c]), Fraction(0)) for c in (1, 2)}
    c = force_side or (1 if qU[1] >= qU[2] else 2)
    gam = gamma if c == 1 else 1 - gamma
    Lc, Uc = L_by[c], U_by[c]
    certs.append(Certificate("split.U_mass", qU[c], ">=", Fraction(1, 2), "q(U) >= 1/2 on chosen side"))
    for w in sorted(Lc, key=_key):
        if w[2] in Uc:
            certs.append(Certificate("split.subadd2", F[c][w], "<=", P_log(w[2]).scale(gam),
                                     "chosen-side factor at most the gamma share", domain="log2"))

    sd = sides[c]
    cq, cpt = sd.qt, sd.pt
    pm = marginal(cpt, lambda k: sd.m_of(k[2]))
    pw = marginal(cpt, sd.w_of)

    # Urule
    Up = {m for m in Uc if qm[m] / pm[m] > Fraction(1, 4)}
    qUp = sum((qm[m] for m in Up), Fraction(0))
    certs.append(Certificate("split.Uprime_mass", qUp, ">=", Fraction(1, 4), "q(U') >= 1/4"))
    if not Up:
        raise EmptyAfterPruning("U'")

    # Lrule1, Lrule2
    qb = marginal(cq, lambda k: (k[sd.summ], k[2]))
    mus = marginal(sd.mu, lambda k: k[sd.summ])
    by_w = {}
    for k in cq:
        by_w.setdefault(sd.w_of(k), []).append(k)
    Lp = set()
    for w in sorted(Lc, key=_key):
        m = w[2]
        if m not in Up:
            continue
        thr = qG[m] / 8
        r1 = (qw[w] / qm[m]) / (pw[w] / pm[m])
        if r1 < thr:
            continue
        e = LogExpr()
        for k in by_w[w]:
            kept, summed = k[sd.keep], k[sd.summ]
            ratio = (cq[k] / qb[(summed, k[2])]) / (sd.mu[(k[0], k[1])] / mus[summed])
            e = e + LogExpr.log2(ratio, cq[k] / qw[w])
        if e < LogExpr.log2(thr):
            continue
        Lp.add(w)
    if not Lp:
        raise EmptyAfterPruning("L'")
    logalpha = (M.scale(gam * delta / (12 * I)) + LogExpr({1 - delta: -gam})
                + LogExpr.const((5 * I + 3) * delta / (12 * I)))
    for m in sorted(Up, key=_key):
        inside = sum((qw[w] for w in Lp if w[2] == m), Fraction(0))
        certs.append(Certificate("split.Lprime_mass", inside / (qG[m] * qm[m]), ">=", Fraction(1, 4),
                                 "q(L'|mG) >= 1/4"))
    for w in sorted(Lp, key=_key):
        certs.append(Certificate("split.large_adv", LogExpr.log2(abs(adv[c][w])), ">=", -logalpha,
                                 "per-w advantage at least 1/alpha", domain="log2"))

    # buckets per child transcript
    mc_of_w = {}
    for w in Lp:
        for k in by_w[w]:
            mc_of_w[w] = k[2]
    per_mc = {}
    for w in sorted(Lp, key=_key):
        per_mc.setdefault(mc_of_w[w], []).append(w)
    B = set()
    nbuckets = {}
    for mc in sorted(per_mc, key=_key):
        buckets = {}
        for w in per_mc[mc]:
            a = adv[c][w]
            key = (1 if a > 0 else -1, ceil_log2(abs(a)))
            buckets.setdefault(key, []).append(w)
        nbuckets[mc] = len(buckets)
        best = None
        for key in sorted(buckets):
            mass = sum((wmass[c][w] for w in buckets[key]), Fraction(0))
            if best is None or mass > best[0]:
                best = (mass, key)
        chosen = buckets[best[1]]
        B.update(chosen)
        tot = sum((wmass[c][w] for w in per_mc[mc]), Fraction(0))
        certs.append(Certificate("split.bucket_density", best[0] / tot, ">=",
                                 Fraction(1, len(buckets)), "heaviest bucket share"))
        sB = sum((adv[c][w] * wmass[c][w] for w in chosen), Fraction(0))
        advB = abs(sB) / best[0]
        for w in chosen:
            certs.append(Certificate("split.bucket_adv", advB, ">=", abs(adv[c][w]) / 2,
                                     "bucket advantage within factor 1/2 of each w"))

    # R per child transcript, inside B
    inB = {k: v for k, v in cq.items() if sd.w_of(k) in B}
    slices = {}
    objs = {}
    for mc in sorted(per_mc, key=_key):
        v = {k: x for k, x in inB.items() if k[2] == mc}
        if not v:
            continue
        R, W, S = maximize_R(v, sd.fn, delta)
        slices.update(R.slices)
        objs[mc] = (total(v), W, S)
    Rset = RectSet(slices)

    # r = q(m|U') q(hid|m L') q(ab|mc R)
    inLp = {k: v for k, v in cq.items() if sd.w_of(k) in Lp}
    qLp_m = marginal(inLp, lambda k: sd.m_of(k[2]))
    qLp_mc = marginal(inLp, lambda k: k[2])
    qR = Rset.restrict(cq)
    qR_mc = marginal(qR, lambda k: k[2])
    r = {}
    alt_ok = True
    for k, v in sorted(qR.items(), key=_key):
        m = sd.m_of(k[2])
        if m not in Up:
            continue
        val = (qm[m] / qUp) * (qLp_mc[k[2]] / qLp_m[m]) * (v / qR_mc[k[2]])
        alt = v / (qUp * (qLp_m[m] / qm[m]) * (qR_mc[k[2]] / qLp_mc[k[2]]))
        alt_ok = alt_ok and alt == val
        r[k] = val
    certs.append(Certificate("split.r_forms_agree", int(alt_ok), "==", 1,
                             "two expressions of r coincide"))
    certs.append(Certificate("split.r_normalized", total(r), "==", Fraction(1), "r sums to 1"))
    rd = RectDist.from_table(r, sd.mu)

    tr = trim(r, cq, Fraction(1, 6))
    certs.extend(trim_certificates(r, cq, tr, prefix="split.trim"))
    inT = tr.T.restrict(r)
    rT = total(inT)
    if rT == 0:
        raise EmptyAfterPruning("T")
    r1t = {k: v / rT for k, v in inT.items()}
    r1 = RectDist.from_table(r1t, sd.mu)
    certs.append(Certificate("split.r1_normalized", total(r1.table()), "==", Fraction(1),
                             "r1 sums to 1"))

    # qtbound and final advantage per child transcript
    r1_mc = marginal(r1t, lambda k: k[2])
    sr1 = {}
    for k, v in r1t.items():
        sr1[k[2]] = sr1.get(k[2], 0) + sd.sign(k) * v
    qRT = marginal(tr.T.restrict(qR), lambda k: k[2])
    for mc in sorted(r1_mc, key=_key):
        qt_ratio = qRT[mc] / qR_mc[mc]
        certs.append(Certificate("split.qtbound", qt_ratio, ">=", Fraction(1, 12),
                                 "q(T|mc R) >= 1/12"))
        vB, W, S = objs[mc]
        sB = sum((sd.sign(k) * x for k, x in inB.items() if k[2] == mc), Fraction(0))
        advB = abs(sB) / vB
        coef = 1 - delta ** 2 - delta / qt_ratio
        lhs = abs(sr1[mc]) / r1_mc[mc]
        if coef <= 0:
            certs.append(Certificate("split.final_adv", lhs, ">=", Fraction(0),
                                     "final per-transcript advantage", note="vacuous"))
        else:
            rhs = LogExpr.product((coef, 1), (W / vB, -delta), (advB, 1))
            certs.append(Certificate("split.final_adv", LogExpr.log2(lhs), ">=", rhs,
                                     "final per-transcript advantage", domain="log2"))

    cost = marginal_cost(r1, sd.proto, sd.fn, params)
    Mf = float(M)
    target = float(gam) * Mf + (3 * float(I) * math.log2(Mf / float(I)) if Mf > 0 else 0.0)
    c_real = (float(cost.value) - target) / float(I)

    cp.chosen_side = c
    cp.r_final = r1
    cp.child = (sd.proto, sd.fn)
    cp.certificates = certs
    cp.trace = {
        "gamma": str(gamma),
        "M_parent": Mf,
        "M_child": float(cost.value),
        "gamma_share": float(gam) * Mf,
        "c_realized": c_real,
        "q_U": {str(k): str(v) for k, v in qU.items()},
        "sizes": {"G": len(inG), "L": len(Lc), "U": len(Uc), "U'": len(Up), "L'": len(Lp),
                  "B": len(B), "R": len(qR), "T": len(inT)},
        "buckets": {repr(k): v for k, v in sorted(nbuckets.items(), key=_key)},
        "alpha_log2": float(logalpha),
        "trim_log": tr.record()["deleted"],
        "cost": cost.record(),
    }
    cp.child_cost = cost
    return cp


def nonzero_advantage_witness(p, f):
    """p conditioned on the transcripts whose advantage is nonzero."""
    pt = p.table()
    s = {}
    for (x, y, m), v in pt.items():
        s[m] = s.get(m, 0) + (v if f(x, y) == 0 else -v)
    keep = {m for m, v in s.items() if v}
    if not keep:
        raise ValueError("every transcript has advantage 0")
    X = sorted(p.X, key=_key)
    Y = sorted(p.Y, key=_key)
    return restrict_rect(p, RectSet({m: (set(X), set(Y)) for m in keep}))


def halve_driver(p, q, f, n, params):
    """Split f^{xor n} down to one copy, n in {2, 4}.

    For n = 2 the inputs of p are pairs; for n = 4 they are pairs of pairs,
    ((x1, x2), (x3, x4)).  Each level calls split with gamma = ceil(l/2)/l.
    Returns (leaf protocol, leaf witness, leaf function, trace).
    """
    if n not in (2, 4):
        raise ValueError("n must be 2 or 4")
    trace = []
    rounds = p.C
    cur_p, cur_q = p, q
    fn_half = f if n == 2 else xor_combine(f, f)
    ell = n
    while ell > 1:
        gamma = Fraction(-(-ell // 2), ell)
        cp = build_children(cur_p, cur_q, fn_half, fn_half)
        split(cp, params, gamma)
        child_p, child_f = cp.child
        level = {"ell": ell, "gamma": str(gamma), "side": cp.chosen_side,
                 "M_parent": cp.trace["M_parent"], "M_child": cp.trace["M_child"],
                 "c_realized": cp.trace["c_realized"], "certificates_ok": cp.ok,
                 "rounds": child_p.C}
        trace.append(level)
        cur_p, cur_q = child_p, cp.r_final
        ell //= 2
        fn_half = f
    if cur_p.C != max(rounds, 1):
        raise AssertionError("leaf changed the number of messages")
    return cur_p, cur_q, f, trace
