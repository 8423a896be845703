"""Protocol distributions, Boolean functions, lifts and brute-force oracles.

A transcript is a tuple ``(m0, m1, ..., mC)``.  ``m0`` is public randomness,
odd rounds are sent by Alice (conditioned on x), even rounds >= 2 by Bob
(conditioned on y).  Joint tables are dicts ``(x, y, m) -> Fraction`` holding
only the support.
"""

import itertools
import json
import math
import random
from fractions import Fraction
from functools import lru_cache

from .prob import FiniteDist, as_fraction, frac_str, marginal, LogExpr

SCHEMA_VERSION = 1

# exhaustive-operation caps
MAX_INPUTS = 4
MAX_TRANSCRIPTS = 16


class ShapeMismatch(ValueError):
    pass


class CapExceeded(RuntimeError):
    pass


class NotProtocol(ValueError):
    """A joint table does not factor as a protocol distribution."""


class NotBinaryRounds(ValueError):
    pass


class InstanceError(ValueError):
    """Malformed instance file."""


class BoolFn:
    """Total Boolean function on X x Y."""

    def __init__(self, table, name=None):
        self.table = {k: int(v) for k, v in dict(table).items()}
        if any(v not in (0, 1) for v in self.table.values()):
            raise ValueError("Boolean function values must be 0 or 1")
        self.name = name

    @classmethod
    def from_callable(cls, X, Y, fn, name=None):
        return cls({(x, y): fn(x, y) for x in X for y in Y}, name)

    def __call__(self, x, y):
        return self.table[(x, y)]

    def sign(self, x, y):
        return -1 if self.table[(x, y)] else 1

    def is_constant(self):
        return len(set(self.table.values())) <= 1

    def __repr__(self):
        return "BoolFn(%s)" % (self.name or len(self.table))


def AND(X=(0, 1), Y=(0, 1)):
    return BoolFn.from_callable(X, Y, lambda x, y: x & y, "AND")


def XOR(X=(0, 1), Y=(0, 1)):
    return BoolFn.from_callable(X, Y, lambda x, y: x ^ y, "XOR")


def CONST(X=(0, 1), Y=(0, 1), v=0):
    return BoolFn.from_callable(X, Y, lambda x, y: v, "CONST%d" % v)


def xor_combine(f, g):
    """(f xor g) on pairs: ((x1, x2), (y1, y2)) -> f(x1 y1) + g(x2 y2) mod 2."""
    X1 = sorted({x for x, _ in f.table}, key=repr)
    Y1 = sorted({y for _, y in f.table}, key=repr)
    X2 = sorted({x for x, _ in g.table}, key=repr)
    Y2 = sorted({y for _, y in g.table}, key=repr)
    t = {}
    for x1, x2, y1, y2 in itertools.product(X1, X2, Y1, Y2):
        t[((x1, x2), (y1, y2))] = f(x1, y1) ^ g(x2, y2)
    return BoolFn(t, "(%s^%s)" % (f.name, g.name))


def xor_lift(f, n, cap=None):
    """f^{xor n} on X^n x Y^n, inputs as n-tuples."""
    if n < 1:
        raise ValueError("n >= 1 required")
    X = sorted({x for x, _ in f.table}, key=repr)
    Y = sorted({y for _, y in f.table}, key=repr)
    if n == 1:
        return f
    cap = MAX_INPUTS ** 2 if cap is None else cap
    if len(X) ** n > cap or len(Y) ** n > cap:
        raise CapExceeded("lifted space %d x %d exceeds cap %d" % (len(X) ** n, len(Y) ** n, cap))
    t = {}
    for xs in itertools.product(X, repeat=n):
        for ys in itertools.product(Y, repeat=n):
            v = 0
            for a, b in zip(xs, ys):
                v ^= f(a, b)
            t[(xs, ys)] = v
    return BoolFn(t, "%s^%d" % (f.name, n))


def tensor_mu(mu, n):
    """Product input law: mu^n((x_1..x_n), (y_1..y_n)) = prod mu(x_j y_j)."""
    if n == 1:
        return dict(mu)
    out = {}
    for combo in itertools.product(sorted(mu.items(), key=repr), repeat=n):
        xs = tuple(k[0] for k, _ in combo)
        ys = tuple(k[1] for k, _ in combo)
        pr = Fraction(1)
        for _, v in combo:
            pr *= v
        out[(xs, ys)] = out.get((xs, ys), 0) + pr
    return out


def product_mu(mu1, mu2):
    out = {}
    for (x1, y1), a in mu1.items():
        for (x2, y2), b in mu2.items():
            out[((x1, x2), (y1, y2))] = a * b
    return out


def is_product(mu):
    px = marginal(mu, lambda k: k[0])
    py = marginal(mu, lambda k: k[1])
    return all(mu.get((x, y), 0) == px[x] * py[y] for x in px for y in py)


class ProtocolDist:
    """Factored protocol distribution p(xym).

    ``tables[i]`` (i = 1..C) maps ``(input, prefix)`` to a dict over the round
    alphabet, where ``input`` is x for odd i and y for even i, and ``prefix``
    is ``(m0, ..., m_{i-1})``.
    """

    def __init__(self, X, Y, mu, alphabets, p0, tables, name=None, check=True):
        self.X = tuple(X)
        self.Y = tuple(Y)
        self.mu = {k: as_fraction(v) for k, v in dict(mu).items() if as_fraction(v) != 0}
        self.alphabets = [tuple(a) for a in alphabets]
        self.p0 = {k: as_fraction(v) for k, v in dict(p0).items()}
        self.tables = [None] + [
            {key: {s: as_fraction(v) for s, v in d.items()} for key, d in t.items()}
            for t in tables
        ]
        self.name = name
        if len(self.tables) != len(self.alphabets):
            raise ShapeMismatch("need one table per round after m0")
        self._table = None
        if check:
            self._validate()

    @property
    def C(self):
        return len(self.alphabets) - 1

    @staticmethod
    def owner(i):
        if i == 0:
            return "public"
        return "alice" if i % 2 == 1 else "bob"

    def _validate(self):
        if sum(self.mu.values()) != 1:
            raise ValueError("mu does not sum to 1")
        for (x, y) in self.mu:
            if x not in self.X or y not in self.Y:
                raise ValueError("mu support outside X x Y")
        if sum(self.p0.values()) != 1 or any(s not in self.alphabets[0] for s in self.p0):
            raise ValueError("bad public-coin table")
        for i in range(1, self.C + 1):
            for key, d in self.tables[i].items():
                if any(v < 0 for v in d.values()) or sum(d.values()) != 1:
                    raise ValueError("round %d table at %r not normalized" % (i, key))
                if any(s not in self.alphabets[i] for s in d):
                    raise ValueError("round %d symbol outside alphabet" % i)
        # every reachable prefix must have a table
        self.table()

    def cond(self, i, inp, prefix):
        """p(m_i | input, m_{<i}) as a dict over the alphabet."""
        try:
            return self.tables[i][(inp, tuple(prefix))]
        except KeyError:
            raise ShapeMismatch("no round-%d table for %r" % (i, (inp, prefix)))

    def msg_prob(self, i, x, y, prefix, sym):
        if i == 0:
            return self.p0.get(sym, Fraction(0))
        inp = x if i % 2 == 1 else y
        return self.cond(i, inp, prefix).get(sym, Fraction(0))

    def joint(self, x, y, m):
        m = tuple(m)
        if len(m) != self.C + 1:
            raise ShapeMismatch("transcript length %d, expected %d" % (len(m), self.C + 1))
        for i, s in enumerate(m):
            if s not in self.alphabets[i]:
                raise ShapeMismatch("symbol %r not in round-%d alphabet" % (s, i))
        pr = self.mu.get((x, y), Fraction(0))
        for i in range(self.C + 1):
            if pr == 0:
                return pr
            pr *= self.msg_prob(i, x, y, m[:i], m[i])
        return pr

    def table(self):
        """Full joint support as a dict (x, y, m) -> Fraction."""
        if self._table is None:
            out = {}
            for (x, y), w in sorted(self.mu.items(), key=repr):
                stack = [((), w)]
                while stack:
                    pre, pr = stack.pop()
                    i = len(pre)
                    if i == self.C + 1:
                        out[(x, y, pre)] = pr
                        continue
                    d = self.p0 if i == 0 else self.cond(i, x if i % 2 else y, pre)
                    for s in self.alphabets[i]:
                        v = d.get(s, 0)
                        if v:
                            stack.append((pre + (s,), pr * v))
            self._table = out
        return self._table

    def transcripts(self):
        return sorted({m for (_, _, m) in self.table()}, key=repr)

    def comm_bits(self):
        """Bits of m1..mC, with |m_i| = ceil(log2 |alphabet_i|)."""
        return sum(_bits(len(a)) for a in self.alphabets[1:])

    def public_bits(self):
        return _bits(len(self.alphabets[0]))

    def transcript_count_bits(self):
        """ceil(log2) of the number of syntactic transcripts, m0 included."""
        return self.comm_bits() + self.public_bits()

    def mu_dist(self):
        return FiniteDist(self.mu)

    def binary_after_first(self):
        return all(len(a) <= 2 for a in self.alphabets[2:])

    def __repr__(self):
        return "ProtocolDist(%s, C=%d)" % (self.name or "?", self.C)


def _bits(n):
    return 0 if n <= 1 else (n - 1).bit_length()


def from_joint(table, X, Y, alphabets, name=None):
    """Recover the factored form of a joint table, verifying the factorization."""
    C = len(alphabets) - 1
    mu = marginal(table, lambda k: (k[0], k[1]))
    p0 = marginal(table, lambda k: k[2][0])
    tables = []
    for i in range(1, C + 1):
        side = 0 if i % 2 == 1 else 1
        num = marginal(table, lambda k: (k[side], k[2][:i + 1]))
        den = marginal(table, lambda k: (k[side], k[2][:i]))
        t = {}
        for (inp, pre), v in num.items():
            t.setdefault((inp, pre[:i]), {})[pre[i]] = v / den[(inp, pre[:i])]
        tables.append(t)
    p = ProtocolDist(X, Y, mu, alphabets, p0, tables, name=name)
    got = p.table()
    want = {k: v for k, v in table.items() if v}
    if got != want:
        raise NotProtocol("joint table does not factor across rounds")
    return p


# ---------------------------------------------------------------------------
# canonical instances


def uniform_bits_mu():
    return {(x, y): Fraction(1, 4) for x in (0, 1) for y in (0, 1)}


def correlated_bits_mu():
    return {(0, 0): Fraction(3, 8), (0, 1): Fraction(1, 8),
            (1, 0): Fraction(1, 8), (1, 1): Fraction(3, 8)}


def zero_comm(mu=None, X=(0, 1), Y=(0, 1)):
    """P0: a single public symbol and no messages."""
    mu = uniform_bits_mu() if mu is None else mu
    return ProtocolDist(X, Y, mu, [(0,)], {0: Fraction(1)}, [], name="P0")


def send_x(mu=None, X=(0, 1), Y=(0, 1)):
    """Alice sends her input as m1."""
    mu = uniform_bits_mu() if mu is None else mu
    t = {(x, (0,)): {x: Fraction(1)} for x in X}
    return ProtocolDist(X, Y, mu, [(0,), tuple(X)], {0: Fraction(1)}, [t], name="send-x")


def pad_rounds(p, C):
    """Append one-symbol dummy rounds until p has C messages."""
    if p.C > C:
        raise ValueError("protocol already has more than %d rounds" % C)
    alph = list(p.alphabets)
    tables = [dict(t) for t in p.tables[1:]]
    ts = p.transcripts()
    for i in range(p.C + 1, C + 1):
        alph.append((0,))
        pad = (0,) * (i - p.C - 1)
        side = p.X if i % 2 == 1 else p.Y
        tables.append({(inp, m + pad): {0: Fraction(1)} for inp in side for m in ts})
    return ProtocolDist(p.X, p.Y, p.mu, alph, p.p0, tables, name=p.name)


def tensor_protocol(p1, p2, name=None):
    """Two independent copies run in parallel; round i sends the pair of symbols."""
    C = max(p1.C, p2.C)
    a, b = pad_rounds(p1, C), pad_rounds(p2, C)
    X = tuple(itertools.product(a.X, b.X))
    Y = tuple(itertools.product(a.Y, b.Y))
    mu = product_mu(a.mu, b.mu)
    alph = [tuple(itertools.product(a.alphabets[i], b.alphabets[i])) for i in range(C + 1)]
    p0 = {(s, t): u * v for s, u in a.p0.items() for t, v in b.p0.items()}
    tables = []
    for i in range(1, C + 1):
        t = {}
        for (ia, pa), da in a.tables[i].items():
            for (ib, pb), db in b.tables[i].items():
                pre = tuple(zip(pa, pb))
                t[((ia, ib), pre)] = {(s, u): v * w for s, v in da.items() for u, w in db.items()}
        tables.append(t)
    return ProtocolDist(X, Y, mu, alph, p0, tables,
                        name=name or "(%s x %s)" % (a.name, b.name))


def random_mu(rng, X, Y, denom=12, product=False):
    """Random rational input law with full support."""
    if product:
        ax = [rng.randint(1, denom) for _ in X]
        ay = [rng.randint(1, denom) for _ in Y]
        sx, sy = sum(ax), sum(ay)
        return {(x, y): Fraction(a, sx) * Fraction(b, sy)
                for x, a in zip(X, ax) for y, b in zip(Y, ay)}
    w = {(x, y): rng.randint(1, denom) for x in X for y in Y}
    s = sum(w.values())
    return {k: Fraction(v, s) for k, v in w.items()}


def _random_cond(rng, alphabet, denom, allow_zero=True):
    w = [rng.randint(0 if allow_zero else 1, denom) for _ in alphabet]
    if sum(w) == 0:
        w[rng.randrange(len(w))] = 1
    s = sum(w)
    return {a: Fraction(v, s) for a, v in zip(alphabet, w) if v}


def random_protocol(rng, X=(0, 1), Y=(0, 1), sizes=(1, 2, 2), denom=6, mu=None,
                    product=False, allow_zero=True, name=None):
    """Random protocol with rational conditionals; sizes[i] = |alphabet_i|."""
    mu = random_mu(rng, X, Y, product=product) if mu is None else mu
    alph = [tuple(range(s)) for s in sizes]
    p0 = _random_cond(rng, alph[0], denom, allow_zero=False)
    tables = []
    prefixes = [(s,) for s in p0]
    for i in range(1, len(sizes)):
        side = X if i % 2 == 1 else Y
        t = {}
        for inp in side:
            for pre in prefixes:
                t[(inp, pre)] = _random_cond(rng, alph[i], denom, allow_zero)
        tables.append(t)
        prefixes = [pre + (s,) for pre in prefixes for s in alph[i]]
    return ProtocolDist(X, Y, mu, alph, p0, tables, name=name or "random")


def random_smooth_protocol(rng, C, beta, X=(0, 1), Y=(0, 1), first=2, mu=None, grid=8):
    """Random protocol whose bits m2..mC have conditional bias within beta of 1/2."""
    mu = random_mu(rng, X, Y) if mu is None else mu
    beta = as_fraction(beta)
    alph = [(0,), tuple(range(first))] + [(0, 1)] * (C - 1)
    tables = []
    prefixes = [(0,)]
    for i in range(1, C + 1):
        side = X if i % 2 == 1 else Y
        t = {}
        for inp in side:
            for pre in prefixes:
                if i == 1:
                    t[(inp, pre)] = _random_cond(rng, alph[1], 4, allow_zero=False)
                else:
                    k = rng.randint(-grid, grid)
                    b = Fraction(1, 2) + beta * Fraction(k, grid)
                    t[(inp, pre)] = {0: 1 - b, 1: b}
        tables.append(t)
        prefixes = [pre + (s,) for pre in prefixes for s in alph[i]]
    return ProtocolDist(X, Y, mu, alph, {0: Fraction(1)}, tables, name="smooth")


# ---------------------------------------------------------------------------
# advantage


def advantage_by_m(table, f):
    """m -> (mass of m, signed advantage E_{xy|m}[(-1)^f])."""
    acc = {}
    for (x, y, m), w in table.items():
        s, t = acc.get(m, (Fraction(0), Fraction(0)))
        acc[m] = (s + w, t + (w if f(x, y) == 0 else -w))
    return {m: (s, t / s) for m, (s, t) in acc.items() if s}


def advantage_profile(p, f):
    """Signed advantage per transcript and the average absolute advantage."""
    prof = advantage_by_m(p.table(), f)
    avg = sum((s * abs(a) for s, a in prof.values()), Fraction(0))
    return {m: a for m, (s, a) in prof.items()}, avg


def average_abs_advantage(table, f):
    prof = advantage_by_m(table, f)
    tot = sum(s for s, _ in prof.values())
    return sum((s * abs(a) for s, a in prof.values()), Fraction(0)) / tot


def optimal_advantage_oracle(mu, f, C, max_inputs=MAX_INPUTS, max_C=3):
    """Best E_mu[(-1)^{pi(xy) + f(xy)}] over deterministic C-bit protocols.

    The output is a public function of the transcript, so a leaf rectangle
    contributes |sum of mu * (-1)^f| over it.  Owners at each node are free.
    """
    X = sorted({x for x, _ in mu}, key=repr)
    Y = sorted({y for _, y in mu}, key=repr)
    if len(X) > max_inputs or len(Y) > max_inputs or C > max_C:
        raise CapExceeded("oracle caps: |X|,|Y| <= %d, C <= %d" % (max_inputs, max_C))
    w = {}
    for x in X:
        for y in Y:
            v = mu.get((x, y), Fraction(0))
            w[(x, y)] = v if f(x, y) == 0 else -v

    @lru_cache(maxsize=None)
    def best(rows, cols, c):
        leaf = abs(sum((w[(X[i], Y[j])] for i in _bits_of(rows) for j in _bits_of(cols)),
                       Fraction(0)))
        if c == 0:
            return leaf
        out = leaf
        for sub in _proper_splits(rows):
            out = max(out, best(sub, cols, c - 1) + best(rows & ~sub, cols, c - 1))
        for sub in _proper_splits(cols):
            out = max(out, best(rows, sub, c - 1) + best(rows, cols & ~sub, c - 1))
        return out

    return best((1 << len(X)) - 1, (1 << len(Y)) - 1, C)


def _bits_of(mask):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def _proper_splits(mask):
    """Nonempty proper submasks containing the lowest set bit (one per split)."""
    low = mask & -mask
    sub = (mask - 1) & mask
    while sub:
        if sub & low and sub != mask:
            yield sub
        sub = (sub - 1) & mask


# ---------------------------------------------------------------------------
# smoothness and divergence costs


def prior_cond(p, i, prefix):
    """p(m_i | m_{<i}) as a dict."""
    tab = p.table()
    num, den = {}, Fraction(0)
    for (x, y, m), w in tab.items():
        if m[:i] == tuple(prefix):
            num[m[i]] = num.get(m[i], 0) + w
            den += w
    return {s: v / den for s, v in num.items()}


class DivergenceLedger:
    """Divergence costs d^A_j, d^B_j and d_j along one (x, y, m), j = 2..C."""

    def __init__(self, dA, dB):
        self.dA = dA
        self.dB = dB
        self.d = {j: dA[j] + dB[j] for j in dA}

    def increments(self):
        js = sorted(self.d)
        return [self.d[j] - (self.d[j - 1] if j - 1 in self.d else 0) for j in js]


def _round_kl(cond, prior):
    """KL in bits between two dicts, as a float."""
    tot = 0.0
    for s, a in cond.items():
        if a:
            b = prior.get(s, 0)
            if not b:
                return math.inf
            tot += float(a) * (math.log2(a) - math.log2(b))
    return tot


def divergence_costs(p, x, y, m, priors=None):
    """Ledger of divergence costs for j = 2..C along the transcript m."""
    m = tuple(m)
    dA, dB = {}, {}
    a = b = 0.0
    for j in range(2, p.C + 1):
        pre = m[:j]
        prior = priors[pre] if priors is not None else prior_cond(p, j, pre)
        if j % 2 == 1:
            a += _round_kl(p.cond(j, x, pre), prior)
        else:
            b += _round_kl(p.cond(j, y, pre), prior)
        dA[j], dB[j] = a, b
    return DivergenceLedger(dA, dB)


def all_priors(p):
    """p(m_i | m_{<i}) for every reachable prefix, keyed by the prefix."""
    tab = p.table()
    acc = {}
    for (x, y, m), w in tab.items():
        for i in range(1, p.C + 1):
            d = acc.setdefault(m[:i], {})
            d[m[i]] = d.get(m[i], 0) + w
    out = {}
    for pre, d in acc.items():
        s = sum(d.values())
        out[pre] = {k: v / s for k, v in d.items()}
    return out


def check_smooth(p, beta):
    """True iff every bit of rounds 2..C has conditional bias within beta of 1/2."""
    if not p.binary_after_first():
        raise NotBinaryRounds("rounds 2..C must be binary")
    beta = as_fraction(beta)
    half = Fraction(1, 2)
    for i in range(2, p.C + 1):
        for key, d in p.tables[i].items():
            for s in p.alphabets[i]:
                if abs(d.get(s, Fraction(0)) - half) > beta:
                    # unreachable prefixes do not matter
                    if _reachable(p, i, key):
                        return False
    return True


def _reachable(p, i, key):
    inp, pre = key
    side = 0 if i % 2 == 1 else 1
    return any(k[side] == inp and k[2][:i] == pre for k in p.table())


def is_frontier(stop, transcripts):
    """stop: dict m -> index.  Checks the exactly-one-prefix property."""
    ts = list(transcripts)
    for m in ts:
        hits = {m[:stop[mm] + 1] for mm in ts if m[:stop[mm] + 1] == mm[:stop[mm] + 1]}
        if len(hits) != 1 or m[:stop[m] + 1] not in hits:
            return False
    return True


def threshold_frontier(p, x, y, thresh, priors=None):
    """r(xym) = min{j : d_j(xym) > thresh}, else C."""
    out = {}
    for (xx, yy, m) in p.table():
        if (xx, yy) != (x, y):
            continue
        led = divergence_costs(p, x, y, m, priors)
        r = p.C
        for j in sorted(led.d):
            if led.d[j] > thresh:
                r = j
                break
        out[m] = r
    return out


# ---------------------------------------------------------------------------
# instance files


def _enc(label):
    if isinstance(label, tuple):
        return [_enc(v) for v in label]
    return label


def _dec(v):
    if isinstance(v, list):
        return tuple(_dec(u) for u in v)
    return v


def dump_instance(p, f=None):
    """Serialize a protocol (and optional function) to a JSON-compatible dict."""
    rec = {
        "schema": SCHEMA_VERSION,
        "name": p.name,
        "X": [_enc(x) for x in p.X],
        "Y": [_enc(y) for y in p.Y],
        "mu": [[_enc(x), _enc(y), frac_str(v)] for (x, y), v in sorted(p.mu.items(), key=repr)],
        "alphabets": [[_enc(s) for s in a] for a in p.alphabets],
        "p0": [[_enc(s), frac_str(v)] for s, v in sorted(p.p0.items(), key=repr)],
        "rounds": [],
    }
    for i in range(1, p.C + 1):
        rows = []
        for (inp, pre), d in sorted(p.tables[i].items(), key=repr):
            rows.append({"input": _enc(inp), "prefix": _enc(pre),
                         "dist": [[_enc(s), frac_str(v)] for s, v in sorted(d.items(), key=repr)]})
        rec["rounds"].append(rows)
    if f is not None:
        rec["function"] = [[_enc(x), _enc(y), v] for (x, y), v in sorted(f.table.items(), key=repr)]
    return rec


def load_instance(rec):
    """Inverse of dump_instance; returns (ProtocolDist, BoolFn or None)."""
    try:
        if rec.get("schema") != SCHEMA_VERSION:
            raise InstanceError("unsupported schema %r" % rec.get("schema"))
        X = [_dec(x) for x in rec["X"]]
        Y = [_dec(y) for y in rec["Y"]]
        mu = {(_dec(x), _dec(y)): as_fraction(v) for x, y, v in rec["mu"]}
        alph = [[_dec(s) for s in a] for a in rec["alphabets"]]
        p0 = {_dec(s): as_fraction(v) for s, v in rec["p0"]}
        tables = []
        for rows in rec["rounds"]:
            tables.append({(_dec(r["input"]), _dec(r["prefix"])):
                           {_dec(s): as_fraction(v) for s, v in r["dist"]} for r in rows})
        p = ProtocolDist(X, Y, mu, alph, p0, tables, name=rec.get("name"))
        f = None
        if "function" in rec:
            f = BoolFn({(_dec(x), _dec(y)): v for x, y, v in rec["function"]})
        return p, f
    except InstanceError:
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise InstanceError("malformed instance: %s" % e)


def read_instance(path):
    try:
        with open(path) as fh:
            rec = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceError("cannot read instance %s: %s" % (path, e))
    if not isinstance(rec, dict):
        raise InstanceError("instance must be a JSON object")
    return load_instance(rec)


def write_instance(path, p, f=None):
    with open(path, "w") as fh:
        json.dump(dump_instance(p, f), fh, indent=1, sort_keys=True)
        fh.write("\n")


def canonical_instances():
    """Named (protocol, function) pairs used by tests and the CLI."""
    rng = random.Random(20240611)
    return {
        "send-x/AND": (send_x(), AND()),
        "P0/AND": (zero_comm(), AND()),
        "send-x/AND-correlated": (send_x(correlated_bits_mu()), AND()),
        "random/AND": (random_protocol(rng, sizes=(2, 2, 2), allow_zero=False), AND()),
    }


def two_copy_instances():
    sx = send_x()
    return {
        "2x send-x/AND": (tensor_protocol(sx, sx), AND(), AND()),
        "2x P0 send-x/AND": (tensor_protocol(zero_comm(), sx), AND(), AND()),
    }
