"""Exact and floating probability primitives.

Probabilities are ``fractions.Fraction`` in EXACT mode and base-2 log-weights
in LOGFLOAT mode.  Quantities of the form sum_i e_i * log2(r_i) with rational
e_i and r_i are carried by :class:`LogExpr`, which compares exactly.
"""

import math
import os
from fractions import Fraction
from math import gcd

EXACT = "EXACT"
LOGFLOAT = "LOGFLOAT"

NEG_INF = float("-inf")


def default_mode():
    mode = os.environ.get("MARGCOMP_NUMERIC", EXACT).upper()
    if mode not in (EXACT, LOGFLOAT):
        raise ValueError("MARGCOMP_NUMERIC must be EXACT or LOGFLOAT, got %r" % mode)
    return mode


class ZeroMassEvent(ValueError):
    """Conditioning on an event of probability zero."""


def as_fraction(v):
    """Parse an int, Fraction or "p/q" string into a Fraction."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        raise TypeError("floats are not accepted as exact probabilities: %r" % v)
    raise TypeError("cannot read %r as a rational" % (v,))


def frac_str(v):
    v = as_fraction(v)
    return "%d/%d" % (v.numerator, v.denominator)


# ---------------------------------------------------------------------------
# exact logs


def _coprime_basis(nums):
    """Pairwise coprime integers > 1 that multiplicatively generate ``nums``."""
    basis = []
    for n in nums:
        pending = [n]
        while pending:
            a = pending.pop()
            if a == 1:
                continue
            for i, b in enumerate(basis):
                g = gcd(a, b)
                if g > 1:
                    del basis[i]
                    pending.extend([g, a // g, b // g])
                    break
            else:
                basis.append(a)
        # drop duplicates introduced by the splitting
        basis = sorted(set(basis))
    return basis


def _valuation(n, b):
    k = 0
    while n % b == 0:
        n //= b
        k += 1
    return k, n


def _in_basis(n, basis):
    """Exponent vector of the positive integer n over a coprime basis."""
    out = {}
    for b in basis:
        if n == 1:
            break
        k, n = _valuation(n, b)
        if k:
            out[b] = k
    if n != 1:
        raise ArithmeticError("integer %d not generated by basis" % n)
    return out


class LogExpr:
    """sum_r e_r * log2(r) for positive rationals r and rational coefficients e.

    An ``infinite`` flag of +1/-1 stands for +inf/-inf.  Equality is decided
    exactly: bases are rewritten over a pairwise coprime integer basis, whose
    logs are linearly independent over the rationals.  Signs of nonzero values
    are decided in floating point with a margin, widening to mpmath when the
    margin is too thin.
    """

    __slots__ = ("terms", "infinite")

    def __init__(self, terms=None, infinite=0):
        self.infinite = infinite
        clean = {}
        if not infinite and terms:
            for r, e in terms.items():
                r = as_fraction(r)
                e = as_fraction(e)
                if r <= 0:
                    raise ValueError("log of non-positive %s" % r)
                if r == 1 or e == 0:
                    continue
                clean[r] = clean.get(r, Fraction(0)) + e
                if clean[r] == 0:
                    del clean[r]
        self.terms = clean

    # constructors
    @classmethod
    def log2(cls, r, coef=1):
        r = as_fraction(r)
        if r == 0:
            return cls(infinite=-1) if coef > 0 else cls(infinite=1)
        return cls({r: coef})

    @classmethod
    def product(cls, *pairs):
        """Sum of coef*log2(r) over (r, coef) pairs; repeated bases add up."""
        out = cls()
        for r, coef in pairs:
            out = out + cls.log2(r, coef)
        return out

    @classmethod
    def const(cls, c):
        """The rational number c itself, written as c*log2(2)."""
        return cls({Fraction(2): as_fraction(c)})

    @classmethod
    def inf(cls, sign=1):
        return cls(infinite=sign)

    @property
    def is_finite(self):
        return self.infinite == 0

    def __add__(self, other):
        if not isinstance(other, LogExpr):
            other = LogExpr.const(other)
        if self.infinite or other.infinite:
            if self.infinite and other.infinite and self.infinite != other.infinite:
                raise ArithmeticError("inf - inf")
            return LogExpr(infinite=self.infinite or other.infinite)
        t = dict(self.terms)
        for r, e in other.terms.items():
            t[r] = t.get(r, Fraction(0)) + e
        return LogExpr(t)

    __radd__ = __add__

    def __neg__(self):
        if self.infinite:
            return LogExpr(infinite=-self.infinite)
        return LogExpr({r: -e for r, e in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, LogExpr):
            other = LogExpr.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return LogExpr.const(other) - self

    def scale(self, c):
        c = as_fraction(c)
        if self.infinite:
            if c == 0:
                return LogExpr()
            return LogExpr(infinite=self.infinite * (1 if c > 0 else -1))
        return LogExpr({r: e * c for r, e in self.terms.items()})

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __float__(self):
        if self.infinite:
            return math.inf * self.infinite
        return float(sum(float(e) * (math.log2(r.numerator) - math.log2(r.denominator))
                         for r, e in self.terms.items()))

    def _canonical(self):
        """Coefficients over a coprime integer basis; zero iff value is 0."""
        ints = set()
        for r in self.terms:
            ints.add(r.numerator)
            ints.add(r.denominator)
        basis = _coprime_basis(sorted(ints))
        coef = {}
        for r, e in self.terms.items():
            for b, k in _in_basis(r.numerator, basis).items():
                coef[b] = coef.get(b, Fraction(0)) + e * k
            for b, k in _in_basis(r.denominator, basis).items():
                coef[b] = coef.get(b, Fraction(0)) - e * k
        return {b: c for b, c in coef.items() if c != 0}

    def sign(self):
        if self.infinite:
            return self.infinite
        if not self.terms:
            return 0
        v = 0.0
        scale = 0.0
        for r, e in self.terms.items():
            t = float(e) * (math.log2(r.numerator) - math.log2(r.denominator))
            v += t
            scale += abs(t)
        if abs(v) > 1e-9 * (1.0 + scale):
            return 1 if v > 0 else -1
        coef = self._canonical()
        if not coef:
            return 0
        import mpmath
        for dps in (50, 200, 1000):
            with mpmath.workdps(dps):
                val = mpmath.fsum(mpmath.mpf(c.numerator) / c.denominator * mpmath.log(b, 2)
                                  for b, c in coef.items())
                if abs(val) > mpmath.mpf(10) ** (-(dps - 10)):
                    return 1 if val > 0 else -1
        raise ArithmeticError("cannot resolve sign of a nonzero log form")

    def cmp(self, other):
        if not isinstance(other, LogExpr):
            other = LogExpr.const(other)
        if self.infinite and self.infinite == other.infinite:
            return 0
        return (self - other).sign()

    def __lt__(self, other):
        return self.cmp(other) < 0

    def __le__(self, other):
        return self.cmp(other) <= 0

    def __gt__(self, other):
        return self.cmp(other) > 0

    def __ge__(self, other):
        return self.cmp(other) >= 0

    def __eq__(self, other):
        if not isinstance(other, (LogExpr, int, Fraction)):
            return NotImplemented
        return self.cmp(other) == 0

    def __hash__(self):
        return hash(round(float(self), 9)) if self.is_finite else hash(self.infinite)

    def __repr__(self):
        if self.infinite:
            return "LogExpr(%sinf)" % ("+" if self.infinite > 0 else "-")
        return "LogExpr(%.6f)" % float(self)

    def to_record(self):
        if self.infinite:
            return "+inf" if self.infinite > 0 else "-inf"
        return {frac_str(r): frac_str(e) for r, e in sorted(self.terms.items())}


def lmax(values):
    """Maximum of LogExprs together with its index (first one on ties)."""
    best, arg = None, None
    for i, v in enumerate(values):
        if best is None or v > best:
            best, arg = v, i
    return best, arg


def ceil_log2(g):
    """The integer k with 2**(k-1) < g <= 2**k, for a positive rational g."""
    g = as_fraction(g)
    if g <= 0:
        raise ValueError("ceil_log2 of non-positive value")
    k = g.numerator.bit_length() - g.denominator.bit_length()
    while Fraction(2) ** k < g:
        k += 1
    while Fraction(2) ** (k - 1) >= g:
        k -= 1
    return k


def pow2(k):
    return Fraction(2) ** k


# ---------------------------------------------------------------------------
# distributions


class FiniteDist:
    """Probability table over an ordered finite set of outcome labels."""

    def __init__(self, mass, mode=None, support=None, check=True):
        self.mode = mode or default_mode()
        if self.mode == EXACT:
            m = {k: as_fraction(v) for k, v in dict(mass).items()}
            if check:
                if any(v < 0 for v in m.values()):
                    raise ValueError("negative mass")
                if sum(m.values()) != 1:
                    raise ValueError("total mass %s != 1" % sum(m.values()))
        else:
            m = {k: float(v) for k, v in dict(mass).items()}
            if check:
                tot = sum(2.0 ** v for v in m.values())
                if abs(tot - 1.0) > 2.0 ** -40 * max(1.0, len(m)):
                    raise ValueError("log-weights do not sum to 1 (total %r)" % tot)
        self.mass = m
        self.support = list(support) if support is not None else sorted(m, key=repr)

    @classmethod
    def uniform(cls, outcomes, mode=None):
        outcomes = list(outcomes)
        mode = mode or default_mode()
        if mode == EXACT:
            return cls({o: Fraction(1, len(outcomes)) for o in outcomes}, mode, outcomes)
        w = -math.log2(len(outcomes))
        return cls({o: w for o in outcomes}, mode, outcomes)

    @classmethod
    def point(cls, outcome, outcomes=None, mode=None):
        outcomes = list(outcomes) if outcomes is not None else [outcome]
        mode = mode or default_mode()
        one, zero = (Fraction(1), Fraction(0)) if mode == EXACT else (0.0, NEG_INF)
        return cls({o: (one if o == outcome else zero) for o in outcomes}, mode, outcomes)

    def prob(self, outcome):
        """Probability of an outcome (a float in LOGFLOAT mode)."""
        if self.mode == EXACT:
            return self.mass.get(outcome, Fraction(0))
        return 2.0 ** self.mass.get(outcome, NEG_INF)

    def positive(self):
        if self.mode == EXACT:
            return [o for o in self.support if self.mass.get(o, 0) > 0]
        return [o for o in self.support if self.mass.get(o, NEG_INF) > NEG_INF]

    def outcomes(self):
        return list(self.support)

    def to_exact(self):
        if self.mode == EXACT:
            return self
        raise TypeError("LOGFLOAT distributions cannot be made exact")

    def to_logfloat(self):
        if self.mode == LOGFLOAT:
            return self
        m = {k: (math.log2(v) if v > 0 else NEG_INF) for k, v in self.mass.items()}
        return FiniteDist(m, LOGFLOAT, self.support, check=False)

    def __repr__(self):
        items = ", ".join("%r: %s" % (o, self.mass.get(o)) for o in self.support)
        return "FiniteDist({%s})" % items


def condition(d, event):
    """Restrict d to an event (a predicate or a collection) and renormalize."""
    pred = event if callable(event) else (lambda o, s=set(event): o in s)
    keep = [o for o in d.support if pred(o)]
    if d.mode == EXACT:
        tot = sum((d.mass.get(o, Fraction(0)) for o in keep), Fraction(0))
        if tot == 0:
            raise ZeroMassEvent("event has zero mass")
        return FiniteDist({o: d.mass.get(o, Fraction(0)) / tot for o in keep}, EXACT, keep)
    ws = [d.mass.get(o, NEG_INF) for o in keep]
    top = max(ws, default=NEG_INF)
    if top == NEG_INF:
        raise ZeroMassEvent("event has zero mass")
    lt = top + math.log2(sum(2.0 ** (w - top) for w in ws))
    return FiniteDist({o: w - lt for o, w in zip(keep, ws)}, LOGFLOAT, keep)


def _aligned(a, b):
    outs = list(a.support)
    outs += [o for o in b.support if o not in set(outs)]
    return outs


def kl_divergence_expr(a, b):
    """KL(a||b) in bits as an exact LogExpr (EXACT mode only)."""
    terms = LogExpr()
    for o in _aligned(a, b):
        pa = a.prob(o)
        if pa == 0:
            continue
        pb = b.prob(o)
        if pb == 0:
            return LogExpr.inf(1)
        terms = terms + LogExpr({pa / pb: pa})
    return terms


def kl_divergence(a, b):
    """KL(a||b) in bits; +inf when a is not absolutely continuous wrt b."""
    if a.mode == EXACT and b.mode == EXACT:
        return float(kl_divergence_expr(a, b))
    total = 0.0
    for o in _aligned(a, b):
        pa = a.prob(o)
        if pa == 0:
            continue
        pb = b.prob(o)
        if pb == 0:
            return math.inf
        total += pa * (math.log2(pa) - math.log2(pb))
    return total


def l1_distance(a, b):
    return sum((abs(a.prob(o) - b.prob(o)) for o in _aligned(a, b)),
               Fraction(0) if a.mode == EXACT else 0.0)


def signed_expectation(d, s):
    """sum_u d(u) * s(u) for a +-1 valued function s."""
    total = Fraction(0) if d.mode == EXACT else 0.0
    for o in d.support:
        w = d.prob(o)
        if w:
            v = s(o)
            if v not in (1, -1):
                raise ValueError("sign function returned %r" % (v,))
            total += w * v
    return total


# ---------------------------------------------------------------------------
# joint tables: dict key -> Fraction, used everywhere for p(xym) and q(xym)


def marginal(table, key):
    out = {}
    for k, v in table.items():
        kk = key(k)
        out[kk] = out.get(kk, 0) + v
    return out


def total(table, pred=None):
    if pred is None:
        return sum(table.values(), Fraction(0))
    return sum((v for k, v in table.items() if pred(k)), Fraction(0))


def restrict(table, pred):
    return {k: v for k, v in table.items() if pred(k)}


def normalize(table):
    t = total(table)
    if t == 0:
        raise ZeroMassEvent("cannot normalize a zero table")
    return {k: v / t for k, v in table.items()}


def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    ph = successes / trials
    den = 1 + z * z / trials
    centre = (ph + z * z / (2 * trials)) / den
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def tv_distance(emp, exact):
    """Total variation between an empirical count dict and exact probabilities."""
    n = sum(emp.values())
    keys = set(emp) | set(exact)
    return 0.5 * sum(abs(emp.get(k, 0) / n - float(exact.get(k, 0))) for k in keys)


# ---------------------------------------------------------------------------
# certificates


class Certificate:
    """One checked inequality  lhs REL rhs.

    In the "value" domain both sides are numbers: Fractions, or LogExprs
    standing for the real number they evaluate to (a cost in bits, say).
    In the "log2" domain the stated quantities are compared through their
    base-2 logs: LogExpr sides are already logs, Fraction sides are
    quantities and get converted.  ``anchor`` is a short neutral label.
    """

    REL = ("<=", ">=", "==", "<", ">")

    def __init__(self, name, lhs, rel, rhs, anchor="", note="", domain="value"):
        if rel not in self.REL:
            raise ValueError("bad relation %r" % rel)
        if domain not in ("value", "log2"):
            raise ValueError("bad domain %r" % domain)
        self.name = name
        self.lhs = lhs
        self.rel = rel
        self.rhs = rhs
        self.anchor = anchor
        self.note = note
        self.domain = domain
        self.passed = self.evaluate()

    def _side(self, v):
        if isinstance(v, LogExpr):
            return v
        return LogExpr.log2(v) if self.domain == "log2" else LogExpr.const(v)

    def evaluate(self):
        a, b = self.lhs, self.rhs
        if self.domain == "log2" or isinstance(a, LogExpr) or isinstance(b, LogExpr):
            c = self._side(a).cmp(self._side(b))
        else:
            c = (a > b) - (a < b)
        return {"<=": c <= 0, ">=": c >= 0, "==": c == 0, "<": c < 0, ">": c > 0}[self.rel]

    def slack(self):
        """rhs - lhs for <= (lhs - rhs for >=) in the certificate's domain, as a float."""
        d = float(self._side(self.rhs)) - float(self._side(self.lhs))
        if self.domain == "value" and not isinstance(self.lhs, LogExpr) \
                and not isinstance(self.rhs, LogExpr):
            d = float(self.rhs - self.lhs)
        return -d if self.rel in (">=", ">") else d

    def record(self):
        def enc(v):
            if isinstance(v, LogExpr):
                fl = float(v)
                return {"log2_terms" if self.domain == "log2" else "terms": v.to_record(),
                        "float": fl if math.isfinite(fl) else repr(fl)}
            if isinstance(v, Fraction):
                return frac_str(v)
            return v
        exact = None
        if self.domain == "value" and isinstance(self.lhs, Fraction) \
                and isinstance(self.rhs, Fraction):
            d = self.rhs - self.lhs
            exact = frac_str(-d if self.rel in (">=", ">") else d)
        sl = exact if exact is not None else self.slack()
        if isinstance(sl, float) and math.isinf(sl):
            sl = "+inf" if sl > 0 else "-inf"
        return {"name": self.name, "anchor": self.anchor, "domain": self.domain,
                "lhs": enc(self.lhs), "rel": self.rel, "rhs": enc(self.rhs),
                "slack": sl,
                "pass": self.evaluate(), "note": self.note}

    def __bool__(self):
        return bool(self.passed)

    def __repr__(self):
        return "Certificate(%s %s -> %s)" % (self.name, self.rel, "ok" if self.passed else "FAIL")
