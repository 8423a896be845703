"""Explicit rectangular witness for a bounded-communication protocol:
maximize, Markov-filter, trim, keep high-advantage messages, condition."""

import math
from fractions import Fraction

from .prob import Certificate, LogExpr, marginal, total
from .rectangular import RectDist, RectSet, marginal_cost, protocol_factors
from .sets import maximize_R, trim, trim_certificates, verify_adv_preserving


class DegenerateAdvantage(ValueError):
    """E_{p(m)}|adv| = 0: no finite-cost witness arises from this route."""


def restrict_rect(p, Z):
    """p(.|Z) as a RectDist, keeping p's own Alice/Bob factors up to 1/p(Z)."""
    alpha, beta = protocol_factors(p)
    pt = p.table()
    z = Z.mass(pt)
    A = {}
    B = {}
    for (x, y, m) in Z.restrict(pt):
        A[(x, m)] = alpha[(x, m)] / z
        B[(y, m)] = beta[(y, m)]
    return RectDist(p.mu, A, B)


def c_explicit(I, delta, C):
    """Right side of the final bound, minus the -(I + 12I/delta) log A term.

    Chain used (rho = p(R), c = 1 - delta^2 - 4 delta, A = E_p|adv|):
      info ratios      <= (96 2^C / rho^2)^2
      density ratio    <= 4 / (rho p(Q|T)),  p(Q|T) >= c A / (2 rho^delta)
      message adv      >= c A / (2 rho^delta)
    The rho exponent, 12I + I(delta - 1) - 4, is positive for I >= 1, so the
    rho factors are dropped.  What remains is

      2C + 2 log 96 + 3I + 12I/delta - (I + 12I/delta) log c.

    Returned as a LogExpr in bits; for delta = 1/15 the I-coefficient is
    183 + 181 log(225/164).
    """
    I = Fraction(I)
    delta = Fraction(delta)
    E = 12 * I / delta
    c = 1 - delta ** 2 - 4 * delta
    return LogExpr.const(2 * C + 3 * I + E) + LogExpr.product((96, 2), (c, -(I + E)))


class ConstructionTrace:
    def __init__(self, **kw):
        self.__dict__.update(kw)

    @property
    def ok(self):
        return all(self.certificates)

    def record(self):
        pt = self.p.table()

        def mem(S):
            return [repr(k) for k in S.members(pt)]
        return {
            "instance": self.p.name,
            "C_used": self.C,
            "sets": {"R": mem(self.R), "G": mem(self.G), "T": mem(self.T), "Q": mem(self.Q)},
            "masses": {"R": str(self.pR), "G|R": str(self.pG_R), "T|G": str(self.pT_G),
                       "Q|T": str(self.pQ_T)},
            "trim_log": self.trim.record()["deleted"],
            "cost": self.cost.record(),
            "bound_bits": float(self.bound),
            "c_realized": self.c_realized,
            "certificates": [c.record() for c in self.certificates],
        }


def construct_witness(p, f, params, C=None):
    """Build q = p(.|Q) and certify every intermediate inequality.

    C defaults to the bit length of the transcript set (public symbol
    included), which is what bounds sum_{ym} p(y) <= 2^C.
    """
    pt = p.table()
    delta = params.delta
    I = params.I
    if C is None:
        C = p.transcript_count_bits()
    adv = {}
    for (x, y, m), v in pt.items():
        adv[m] = adv.get(m, 0) + (v if f(x, y) == 0 else -v)
    A0 = sum((abs(s) for s in adv.values()), Fraction(0))
    if A0 == 0:
        raise DegenerateAdvantage("average advantage is 0")

    R, WR, SR = maximize_R(pt, f, delta)
    pR = R.mass(pt)
    certs = []

    # (i) Markov filter on 1/p(m|x), 1/p(m|y)
    px = marginal(pt, lambda k: k[0])
    py = marginal(pt, lambda k: k[1])
    pxm = marginal(pt, lambda k: (k[0], k[2]))
    pym = marginal(pt, lambda k: (k[1], k[2]))
    thr = 4 * Fraction(2) ** C / pR
    sl = {}
    for m, (a, b) in R.slices.items():
        # 1/p(m|x) = p(x)/p(xm)
        ga = {x for x in a if pxm.get((x, m)) and px[x] / pxm[(x, m)] <= thr}
        gb = {y for y in b if pym.get((y, m)) and py[y] / pym[(y, m)] <= thr}
        sl[m] = (ga, gb)
    G = RectSet(sl)
    pG = G.mass(pt)
    certs.append(Certificate("construct.G_given_R", pG / pR, ">=", Fraction(1, 2),
                             "Markov filter keeps half of R"))
    if pG == 0:
        raise DegenerateAdvantage("Markov filter emptied R")

    # (ii) trim p(.|G) against p with kappa = 1/6
    a = {k: v / pG for k, v in G.restrict(pt).items()}
    tr = trim(a, pt, Fraction(1, 6))
    T = tr.T.intersect(G)
    pT = T.mass(pt)
    certs.extend(trim_certificates(a, pt, tr, prefix="construct.trim"))
    certs.append(Certificate("construct.T_given_G", pT / pG, ">=", Fraction(1, 2),
                             "trimming keeps half of G"))
    certs.append(Certificate("construct.T_given_R", pT / pR, ">=", Fraction(1, 4),
                             "p(T|R) >= 1/4"))

    # (iii) density ratio on T
    dens = Fraction(1) / pT
    certs.append(Certificate("construct.density", dens, "<=", 4 / pR,
                             "p(xym|T)/p(xym) <= 4/p(R)"))

    # (iv) conditional ratios on T
    inside = T.restrict(pt)
    tym = marginal(inside, lambda k: (k[1], k[2]))
    txm = marginal(inside, lambda k: (k[0], k[2]))
    mux = marginal(p.mu, lambda k: k[0])
    muy = marginal(p.mu, lambda k: k[1])
    rx = max(v / tym[(y, m)] / (p.mu[(x, y)] / muy[y]) for (x, y, m), v in inside.items())
    ry = max(v / txm[(x, m)] / (p.mu[(x, y)] / mux[x]) for (x, y, m), v in inside.items())
    lim = 96 * Fraction(2) ** C / pR ** 2
    certs.append(Certificate("construct.info_x", rx, "<=", lim, "p(x|ymT)/p(x|y) <= 96 2^C/p(R)^2"))
    certs.append(Certificate("construct.info_y", ry, "<=", lim, "p(y|xmT)/p(y|x) <= 96 2^C/p(R)^2"))

    # (v) advantage on T
    advT_m = {}
    for (x, y, m), v in inside.items():
        advT_m[m] = advT_m.get(m, 0) + (v if f(x, y) == 0 else -v)
    advT = sum((abs(s) for s in advT_m.values()), Fraction(0)) / pT
    cconst = 1 - delta ** 2 - 4 * delta
    certs.append(Certificate("construct.adv_T", LogExpr.log2(advT), ">=",
                             LogExpr.product((cconst, 1), (pR, -delta), (A0, 1)),
                             "adv(T) >= (1-d^2-4d) p(R)^-d E|adv|", domain="log2"))
    certs.append(verify_adv_preserving(pt, f, delta, R, T))

    # (vi) keep messages with at least half the average advantage
    mT = marginal(inside, lambda k: k[2])
    keep = {m for m in advT_m if abs(advT_m[m]) / mT[m] >= advT / 2}
    Q = RectSet({m: T.slices[m] for m in keep})
    pQ = Q.mass(pt)
    certs.append(Certificate("construct.Q_given_T", pQ / pT, ">=", advT / 2,
                             "p(Q|T) >= adv(T)/2"))
    q = restrict_rect(p, Q)
    cost = marginal_cost(q, p, f, params)
    bound = c_explicit(I, delta, C) + LogExpr.log2(A0, -(I + 12 * I / delta))
    certs.append(Certificate("construct.final_cost", cost.value, "<=", bound,
                             "M(q) <= 2C - (1+12/d) I log E|adv| + explicit constant"))
    c_real = (float(cost.value) - 2 * C + float(I + 12 * I / delta) * math.log2(A0)) / float(I)
    return ConstructionTrace(p=p, f=f, C=C, R=R, G=G, T=T, Q=Q, trim=tr, q=q, cost=cost,
                             bound=bound, c_realized=c_real, certificates=certs,
                             pR=pR, pG_R=pG / pR, pT_G=pT / pG, pQ_T=pQ / pT, adv0=A0)
