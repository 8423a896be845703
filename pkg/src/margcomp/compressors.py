"""Executable compression protocols, the smoothing transform, and advantage
estimation.

Each compressor returns an ExecProtocol whose ``run(x, y, sr)`` plays both
parties.  Alice's steps only read x, the shared generator and messages she has
received; Bob's steps likewise.  Every message goes through a CommLedger whose
budget is the protocol's declared budget, so a run can never overspend.

All four compressors end the same way (class _Final): Alice sends a hash of
ceil(log g1) if eta^A passes her threshold, Bob looks for the unique integer z
within 3M/I of -log g2 carrying that hash and then tests eta^B; on success he
sends the sign of the q-advantage at his transcript.  Hash values live in
1 .. 2^k - 1 so the all-zero codeword can stand for an abort.  An abort makes
both parties output one shared random bit; Bob's last message is then that bit.
"""

import math
from fractions import Fraction
from math import comb

from .prob import Certificate, LogExpr, as_fraction, ceil_log2, tv_distance, wilson_interval
from .protocol import (NotBinaryRounds, ProtocolDist, advantage_by_m, all_priors,
                       check_smooth, _round_kl)
from .rectangular import RectDist, external_cost, marginal_cost, point_terms
from .samplers import (BudgetExceeded, CommLedger, HashFn, ScanHorizonExceeded, _log_inv,
                       first_difference, label_stream, one_round_sample, psi_budget, tau_budget)
from .sets import GFactorization, _PMarg

NonBinaryRounds = NotBinaryRounds
LOOP_CAP = 1 << 20          # hard ceiling on correction-loop iterations
HOP_CAP_BITS = 1 << 24      # hard ceiling on the external compressor's step-3 bits


class InfiniteCost(ValueError):
    pass


class RoundMismatch(ValueError):
    pass


class NotSmooth(ValueError):
    pass


# ---------------------------------------------------------------------------
# small exact helpers


def lceil(v):
    """Exact ceiling of a finite LogExpr (or rational)."""
    if not isinstance(v, LogExpr):
        return math.ceil(as_fraction(v))
    if not v.is_finite:
        raise ValueError("ceiling of an infinite value")
    k = math.ceil(float(v))
    while LogExpr.const(k - 1) >= v:
        k -= 1
    while LogExpr.const(k) < v:
        k += 1
    return k


def lfloor(v):
    return -lceil(-v) if isinstance(v, LogExpr) else math.floor(as_fraction(v))


def _draw(dist, u):
    """Inverse-CDF sample from a rational dict using a uniform u in [0, 1)."""
    acc = Fraction(0)
    last = None
    for s, w in sorted(dist.items(), key=lambda kv: repr(kv[0])):
        if not w:
            continue
        acc += w
        last = s
        if u < acc:
            return s
    return last


def _bit(alph, d, rho):
    """Threshold rule on a binary round: the second symbol iff rho < its probability."""
    if len(alph) == 1:
        return alph[0]
    return alph[1] if rho < d.get(alph[1], 0) else alph[0]


def _flip(alph, s):
    return alph[1] if s == alph[0] else alph[0]


def _rect(q, p):
    if isinstance(q, RectDist):
        return q
    return RectDist.from_table(q, p.mu)


def _coin(sr, stream):
    return sr.below(label_stream(stream, "coin"), 0, 2)


class _Views:
    """p(m_i | x m_<i) and p(m_i | y m_<i) for every round, owner's or not.

    Prefixes a party should never hold (possible only after a hash failure)
    fall back to the uniform law on the round's alphabet.
    """

    def __init__(self, p):
        self.p = p
        self.pm = _PMarg(p)
        self.priors = all_priors(p)

    def _fallback(self, i):
        a = self.p.alphabets[i]
        return {s: Fraction(1, len(a)) for s in a}

    def alice(self, i, x, pre):
        pre = tuple(pre)
        try:
            if i % 2 == 1:
                return self.p.tables[i][(x, pre)]
            return self.pm.dist_given_x(i, x, pre)
        except (KeyError, ZeroDivisionError):
            return self._fallback(i)

    def bob(self, i, y, pre):
        pre = tuple(pre)
        try:
            if i % 2 == 0:
                return self.p.tables[i][(y, pre)]
            return self.pm.dist_given_y(i, y, pre)
        except (KeyError, ZeroDivisionError):
            return self._fallback(i)

    def true(self, i, x, y, pre):
        """The owner's conditional, i.e. p(m_i | xy m_<i)."""
        return self.alice(i, x, pre) if i % 2 == 1 else self.bob(i, y, pre)

    def prior(self, i, pre):
        return self.priors.get(tuple(pre)) or self._fallback(i)


# ---------------------------------------------------------------------------
# runs and protocols


class RunResult:
    def __init__(self, output, sign, aborted, tracked, ledger, info=None):
        self.output = output
        self.sign = sign
        self.aborted = aborted
        self.tracked = tracked
        self.ledger = ledger
        self.info = info or {}

    def record(self):
        return {"output": self.output, "sign": self.sign, "aborted": self.aborted,
                "tracked": None if self.tracked is None else repr(self.tracked),
                "ledger": self.ledger.record(), "log": [list(e) for e in self.ledger.log],
                "info": {k: repr(v) for k, v in sorted(self.info.items())}}


class ExecProtocol:
    """A two-party procedure with a declared bit budget.

    ``run`` is deterministic given (x, y, seed).  A message that would pass
    the budget is refused by the ledger and the run ends as an abort with
    reason "budget"; the tests require that this never happens.
    """

    def __init__(self, name, budget, runner, p, f, meta=None, certificates=()):
        self.name = name
        self.budget = int(budget)
        self._runner = runner
        self.p = p
        self.f = f
        self.meta = dict(meta or {})
        self.certificates = list(certificates)

    def run(self, x, y, sr):
        led = CommLedger(budget=self.budget)
        try:
            res = self._runner(x, y, sr, led)
        except BudgetExceeded:
            res = RunResult(_coin(sr, "budget"), None, "budget", None, led)
        assert led.total <= self.budget
        return res

    def record(self):
        return {"name": self.name, "budget": self.budget,
                "meta": {k: (v if isinstance(v, (int, float, str)) else repr(v))
                         for k, v in sorted(self.meta.items())},
                "certificates": [c.record() for c in self.certificates]}


class _Final:
    """Hash-and-threshold acceptance step and the closing sign message."""

    def __init__(self, q, p, f, M, I, eps):
        self.T = M.scale(Fraction(3) / I)
        self.k = max(2, _log_inv(eps))
        gf = GFactorization(q, p)
        self.gf = gf
        self.alice_tab = {}
        for (x, m), g in gf.g1.items():
            if g > 0:
                c = ceil_log2(g)
                self.alice_tab[(x, m)] = (c, g / Fraction(2) ** c)
        self.bob_tab = {}
        for (y, m), g in gf.g2.items():
            if g > 0:
                lg = LogExpr.log2(g)
                lo, hi = lceil(-self.T - lg), lfloor(self.T - lg)
                self.bob_tab[(y, m)] = [(z, lg + z - self.T) for z in range(lo, hi + 1)]
        adv = advantage_by_m(q.table(), f)
        self.sign = {m: (1 if a >= 0 else -1) for m, (_, a) in adv.items()}

    def tag(self, hf, z):
        return 1 + hf(z) % ((1 << self.k) - 1)

    def alice(self, x, m, eta, hf):
        e = self.alice_tab.get((x, tuple(m)))
        if e is None or eta > e[1]:
            return 0
        return self.tag(hf, e[0])

    def bob(self, y, m, eta, hf, msg):
        """Bob's sign, or None for an abort."""
        m = tuple(m)
        if msg == 0:
            return None
        hits = [(z, thr) for z, thr in self.bob_tab.get((y, m), ()) if self.tag(hf, z) == msg]
        if len(hits) != 1:
            return None
        thr = hits[0][1]
        if eta != 0 and LogExpr.log2(eta) > thr:
            return None
        return self.sign.get(m, 1)

    def certificates(self, q, p, prefix):
        """On S, Alice's threshold times Bob's (at z = ceil log g1) equals
        (q/p) 2^(-3M/I), and Bob's threshold is at most 1."""
        out = []
        pt = p.table()
        for (x, y, m), v in sorted(q.table().items(), key=repr):
            c, a = self.alice_tab[(x, m)]
            lg2 = LogExpr.log2(self.gf.g2[(y, m)])
            s = lg2 + c
            if not (s <= self.T and -self.T <= s):
                continue
            b = lg2 + c - self.T
            out.append(Certificate(prefix + ".accept_region", LogExpr.log2(a) + b, "==",
                                   LogExpr.log2(v / pt[(x, y, m)]) - self.T,
                                   "eta tests pass with probability (q/p) 2^(-3M/I)",
                                   note=repr((x, y, m)), domain="log2"))
            out.append(Certificate(prefix + ".bob_threshold", b, "<=", LogExpr(),
                                   "Bob's threshold is a probability", note=repr((x, y, m)),
                                   domain="log2"))
        return out

    def finish(self, x, y, mA, mB, etaA, etaB, hf, led, sr, stream):
        msg = self.alice(x, mA, etaA, hf)
        led.send("A", self.k, "final-hash")
        s = self.bob(y, mB, etaB, hf, msg)
        led.send("B", 1, "final-sign")
        if s is None:
            return _coin(sr, stream), None, "final"
        return (0 if s > 0 else 1), s, None


def _cost_level(kind, q, p, f, params):
    rep = (marginal_cost if kind == "marginal" else external_cost)(q, p, f, params)
    if not rep.value.is_finite:
        raise InfiniteCost("%s cost of q is infinite" % kind)
    return rep.value, rep.value + params.K * params.I


def _streams(tag):
    return {k: label_stream(tag, k) for k in ("m0", "eta", "rho", "h", "t", "psi", "tau", "hop")}


# ---------------------------------------------------------------------------
# general compressor


def compress_general(p, q, f, params, eps=None):
    """Round-one correlated sampling, threshold rules for the binary rounds,
    first-difference corrections, then the shared acceptance step."""
    if not p.binary_after_first():
        raise NonBinaryRounds("rounds 2..C must be binary")
    q = _rect(q, p)
    cost, M = _cost_level("marginal", q, p, f, params)
    I = params.I
    eps = as_fraction(eps if eps is not None else params.eps)
    C = p.C
    Lc = lceil(M.scale(6))
    fin = _Final(q, p, f, M, I, eps)
    views = _Views(p)
    loops = 2.0 ** min(60.0, 7 * float(M) / float(I)) * math.sqrt(max(C, 1) * float(M))
    N = max(1, min(LOOP_CAP, int(loops)))
    budget = (psi_budget(Lc, eps) + 1 if C >= 1 else 0) \
        + (N + 1) * tau_budget(max(C, 1), eps) + fin.k + 1
    st = _streams("general")

    def rules(m, start, side, inp):
        for i in range(start, C + 1):
            d = views.alice(i, inp, m[:i]) if side == "A" else views.bob(i, inp, m[:i])
            m[i] = _bit(p.alphabets[i], d, rho[i])

    def runner(x, y, sr, led):
        nonlocal rho
        m0 = _draw(p.p0, sr.uniform(st["m0"], 0))
        etaA, etaB = sr.uniform(st["eta"], 0), sr.uniform(st["eta"], 1)
        rho = [None] + [sr.uniform(st["rho"], i) for i in range(1, C + 1)]
        hf = HashFn(sr, st["h"], bits=fin.k)
        info = {}
        if C == 0:
            mA, mB, tr = [m0], [m0], [m0]
        else:
            u = views.alice(1, x, (m0,))
            v = views.bob(1, y, (m0,))
            ps = one_round_sample(u, v, Lc, eps, sr, stream=st["psi"], outcomes=p.alphabets[1])
            led.absorb(ps.ledger)
            led.send("B", 1, "psi-status")
            tr = [m0, ps.a] + [None] * (C - 1)
            for i in range(2, C + 1):
                tr[i] = _bit(p.alphabets[i], views.true(i, x, y, tr[:i]), rho[i])
            if ps.b is None:
                return RunResult(_coin(sr, "general"), None, "psi", (x, y, tuple(tr)), led)
            mA = [m0, ps.a] + [None] * (C - 1)
            mB = [m0, ps.b] + [None] * (C - 1)
            rules(mA, 2, "A", x)
            rules(mB, 2, "B", y)
            it = 0
            while True:
                td = first_difference(mA[1:], mB[1:], eps, sr, stream=(st["tau"], it))
                led.absorb(td.ledger)
                if td.equal:
                    break
                j = td.index
                if it == N or j == 1:
                    return RunResult(_coin(sr, "general"), None, "loop" if it == N else "psi-mismatch",
                                     (x, y, tuple(tr)), led, {"corrections": it})
                if j % 2 == 0:
                    mA[j] = _flip(p.alphabets[j], mA[j])
                    rules(mA, j + 1, "A", x)
                else:
                    mB[j] = _flip(p.alphabets[j], mB[j])
                    rules(mB, j + 1, "B", y)
                it += 1
            info["corrections"] = it
        out, s, ab = fin.finish(x, y, mA, mB, etaA, etaB, hf, led, sr, "general")
        info["agree"] = tuple(mA) == tuple(mB)
        return RunResult(out, s, ab, (x, y, tuple(tr)), led, info)

    rho = None
    meta = {"M": float(M), "cost": float(cost), "L": Lc, "eps": str(eps), "loop_cap": N,
            "hash_bits": fin.k, "I": str(I), "K": str(params.K)}
    return ExecProtocol("general", budget, runner, p, f, meta,
                        fin.certificates(q, p, "general"))


# ---------------------------------------------------------------------------
# smoothing


def majority_prob(L, beta):
    """P(Bin(L, 1/2 + beta) >= (L+1)/2), exactly."""
    hi = Fraction(1, 2) + as_fraction(beta)
    lo = 1 - hi
    return sum((comb(L, k) * hi ** k * lo ** (L - k) for k in range((L + 1) // 2, L + 1)),
               Fraction(0))


def block_law(a, L, beta):
    """s_a on {0,1}^L: L independent bits, each equal to a w.p. 1/2 + beta."""
    hi = Fraction(1, 2) + as_fraction(beta)
    out = {}
    for n in range(1 << L):
        r = tuple((n >> (L - 1 - j)) & 1 for j in range(L))
        k = sum(1 for b in r if b == a)
        out[r] = hi ** k * (1 - hi) ** (L - k)
    return out


def block_decode_error(L, beta):
    """Chance that a block carrying a fixed symbol decodes to the other one,
    summed over the 2^L strings of the block law."""
    law = block_law(1, L, beta)
    return sum((v for r, v in law.items() if majority(r) != 1), Fraction(0))


def majority(bits):
    return 1 if 2 * sum(bits) > len(bits) else 0


class SmoothedPair:
    """Block-encoded protocol p' and witness q'.

    Every round i >= 2 of p becomes a block of L owner bits interleaved with
    L - 1 fair bits from the other party, so rounds keep alternating.  The
    owner draws the hidden symbol m_i from p and sends L bits each equal to
    it with probability 1/2 + beta; the block decodes by majority.
    q'(xym') = q(xyD(m')) times, per block, s_d conditioned on majority d,
    times 1/2 per filler bit.
    """

    def __init__(self, p, q, f, beta, L):
        if L < 1 or L % 2 == 0:
            raise ValueError("block length must be odd")
        self.p = p
        self.q = q
        self.f = f
        self.beta = as_fraction(beta)
        self.L = L
        self.p_maj = majority_prob(L, self.beta)
        self.rho = (Fraction(1, 2) - self.beta) / (Fraction(1, 2) + self.beta)
        self.starts = {}
        j = 2
        for i in range(2, p.C + 1):
            self.starts[i] = j
            j += 2 * L - 1
        self.C_prime = j - 1 if p.C >= 1 else 0
        self._pq = None

    # decoding ---------------------------------------------------------
    def symbol(self, i, a):
        alph = self.p.alphabets[i]
        return alph[a] if a < len(alph) else alph[-1]

    def index(self, i, s):
        return self.p.alphabets[i].index(s)

    def owner_bits(self, mp, i):
        st = self.starts[i]
        return tuple(mp[st + 2 * t] for t in range(self.L))

    def decode(self, mp):
        out = list(mp[:2])
        for i in range(2, self.p.C + 1):
            out.append(self.symbol(i, majority(self.owner_bits(mp, i))))
        return tuple(out)

    # exact quantities ---------------------------------------------------
    def decode_error(self):
        return block_decode_error(self.L, self.beta)

    def _cond_weights(self, i, inp, dec_pre):
        d = self.p.tables[i].get((inp, tuple(dec_pre)))
        if d is None:
            a = self.p.alphabets[i]
            d = {s: Fraction(1, len(a)) for s in a}
        return {self.index(i, s): w for s, w in d.items() if w}

    def _bit_one(self, w, ones, n):
        """P(next owner bit = 1 | weights w over hidden bits, ones among n sent)."""
        hi = Fraction(1, 2) + self.beta
        lo = 1 - hi
        num = den = Fraction(0)
        for a, wa in w.items():
            eq = ones if a == 1 else n - ones
            lik = wa * hi ** eq * lo ** (n - eq)
            den += lik
            num += lik * (hi if a == 1 else lo)
        return num / den

    def max_bias(self):
        """Largest |P(bit) - 1/2| over every reachable owner-bit state; filler
        bits are fair.  Computed from sufficient statistics, so any L works."""
        worst = Fraction(0)
        for i in range(2, self.p.C + 1):
            for (inp, pre), d in self.p.tables[i].items():
                w = {self.index(i, s): v for s, v in d.items() if v}
                for n in range(self.L):
                    for ones in range(n + 1):
                        b = self._bit_one(w, ones, n)
                        worst = max(worst, abs(b - Fraction(1, 2)))
        return worst

    def ratio_max(self, i, inp, m):
        """sup over block strings of  p(m_i|..) t_d(r) / sum_a p(a|..) s_a(r)."""
        w = self._cond_weights(i, inp, m[:i])
        d = self.index(i, m[i])
        other = sum((v for a, v in w.items() if a != d), Fraction(0))
        c = other / w[d]
        return 1 / (self.p_maj * (1 + c * self.rho ** self.L))

    def external_cost(self, params):
        """Exact external cost of (q', p') from the unencoded pair.

        The information and advantage factors depend on m' only through
        D(m'); the density ratio is (q/p)(xyD) times one factor per block,
        increasing in the number of bits agreeing with the decoded symbol,
        hence largest at the all-agree string.
        """
        qt, pt = self.q.table(), self.p.table()
        terms = point_terms(qt, pt, self.p.mu, self.f, params, "external")
        best = None
        for key in sorted(terms, key=repr):
            x, y, m = key
            tot = LogExpr()
            for v in terms[key].values():
                tot = tot + v
            for i in range(2, self.p.C + 1):
                inp = x if i % 2 == 1 else y
                tot = tot + LogExpr.log2(self.ratio_max(i, inp, m), params.I)
            if best is None or tot > best:
                best = tot
        return best if best is not None else LogExpr.inf(-1)

    def cost_certificate(self, params):
        base = external_cost(self.q, self.p, self.f, params).value
        return Certificate("smooth.external_cost", self.external_cost(params), "<=", base + 1,
                           "block encoding raises the external cost by at most 1")

    def smooth_certificate(self):
        return Certificate("smooth.bias", self.max_bias(), "<=", self.beta,
                           "every sent bit has bias within beta of fair")

    # explicit tables (small L only) -----------------------------------
    def materialize(self, cap=1 << 14):
        """(p', q') as a ProtocolDist and a RectDist; refuses above cap transcripts."""
        if self._pq is not None:
            return self._pq
        p = self.p
        n_pre = len(p.alphabets[0]) * (len(p.alphabets[1]) if p.C >= 1 else 1)
        if n_pre * 2 ** self.C_prime // 2 ** min(1, p.C) > cap and p.C >= 2:
            raise ValueError("encoded protocol too large to tabulate")
        L = self.L
        where = {}
        for i, st in self.starts.items():
            for t in range(2 * L - 1):
                where[st + t] = (i, t)
        alph = [p.alphabets[0]] + ([p.alphabets[1]] if p.C >= 1 else []) + \
            [(0, 1)] * (self.C_prime - 1 if p.C >= 1 else 0)
        tables = []
        if p.C >= 1:
            tables.append(dict(p.tables[1]))
        prefixes = {(a, b) for (a, b) in {m[:2] for m in p.transcripts()}} if p.C >= 1 else set()
        prefixes = sorted(prefixes, key=repr)
        for j in range(2, self.C_prime + 1):
            i, t = where[j]
            side = p.X if j % 2 == 1 else p.Y
            tab = {}
            nxt = set()
            for pre in prefixes:
                for inp in side:
                    if t % 2 == 1:
                        d = {0: Fraction(1, 2), 1: Fraction(1, 2)}
                    else:
                        dec = self._decode_prefix(pre, i)
                        w = self._cond_weights(i, inp, dec)
                        st = self.starts[i]
                        sent = [pre[st + 2 * s] for s in range(t // 2)]
                        b1 = self._bit_one(w, sum(sent), len(sent))
                        d = {0: 1 - b1, 1: b1}
                    tab[(inp, pre)] = {s: v for s, v in d.items() if v}
                    nxt.update(pre + (s,) for s, v in d.items() if v)
            tables.append(tab)
            prefixes = sorted(nxt, key=repr)
        pp = ProtocolDist(p.X, p.Y, p.mu, alph, p.p0, tables, name=(p.name or "p") + "-smooth")
        A, B = {}, {}
        for m in {m for (_, _, m) in self.q.table()}:
            for mp in self._encodings(m):
                fac = Fraction(1)
                for i in range(2, p.C + 1):
                    r = self.owner_bits(mp, i)
                    k = sum(1 for b in r if b == self.index(i, m[i]))
                    hi = Fraction(1, 2) + self.beta
                    fac *= hi ** k * (1 - hi) ** (L - k) / self.p_maj
                    fac *= Fraction(1, 2) ** (L - 1)
                for (x, mm), a in self.q.A.items():
                    if mm == m:
                        A[(x, mp)] = a * fac
                for (y, mm), b in self.q.B.items():
                    if mm == m:
                        B[(y, mp)] = b
        qq = RectDist(p.mu, A, B)
        self._pq = (pp, qq)
        return self._pq

    def _decode_prefix(self, pre, i):
        out = list(pre[:2])
        for k in range(2, i):
            out.append(self.symbol(k, majority(self.owner_bits(pre, k))))
        return tuple(out)

    def _encodings(self, m):
        """All m' with D(m') = m."""
        L = self.L
        outs = [tuple(m[:2])]
        for i in range(2, self.p.C + 1):
            d = self.index(i, m[i])
            blocks = [r for r in block_law(d, L, self.beta) if majority(r) == d]
            new = []
            for o in outs:
                for r in blocks:
                    for n in range(1 << (L - 1)):
                        fill = [(n >> s) & 1 for s in range(L - 1)]
                        seg = []
                        for t in range(L):
                            seg.append(r[t])
                            if t < L - 1:
                                seg.append(fill[t])
                        new.append(o + tuple(seg))
            outs = new
        return outs


def choose_block_length(C, I, beta, L_min=1):
    """Smallest odd L >= L_min with I (C-1) log2(1/P(majority)) <= 1."""
    L = L_min if L_min % 2 == 1 else L_min + 1
    need = max(0, C - 1) * as_fraction(I)
    while need and LogExpr.log2(majority_prob(L, beta), -need) > LogExpr.const(1):
        L += 2
    return L


def smooth(p, q, f, beta, I=1, L=None):
    """Block-encode p and q; see SmoothedPair."""
    if not p.binary_after_first():
        raise NonBinaryRounds("rounds 2..C must be binary")
    beta = as_fraction(beta)
    if not 0 < beta <= Fraction(1, 4):
        raise ValueError("beta must lie in (0, 1/4]")
    if L is None:
        L = choose_block_length(p.C, I, beta)
    return SmoothedPair(p, _rect(q, p), f, beta, L)


def binomial_tail_oracle(L, beta):
    """Float P(Bin(L, 1/2 - beta) >= (L+1)/2): the chance a block decodes wrongly."""
    b = 0.5 - float(beta)
    return math.fsum(math.comb(L, k) * b ** k * (1 - b) ** (L - k)
                     for k in range((L + 1) // 2, L + 1))


# ---------------------------------------------------------------------------
# divergence concentration


def concentration_constant(beta):
    """c with p(F_{r,alpha}) <= 2 exp(-c alpha^2 / tau) for beta-smooth p.

    Per round the log-ratio z_i ranges over an interval of length at most
    |a - b| / (ln 2 (1/4 - beta^2)), a and b the true and prior bit laws;
    Pinsker gives |a - b|^2 <= (ln 2 / 2) KL_bits, so the squared ranges sum
    to at most tau / (2 ln 2 (1/4 - beta^2)^2).  Azuma-Hoeffding with
    predictable ranges then yields c = 4 ln 2 (1/4 - beta^2)^2.
    """
    b = float(beta)
    return 4 * math.log(2) * (0.25 - b * b) ** 2


def frontier_deviation_masses(p, thresh, alpha, priors=None):
    """Exact p(F), p(F^A), p(F^B) for the threshold frontier, and tau = max d_r.

    Walks the protocol tree once per input pair, carrying the running
    log-ratio sums and divergence costs; a branch stops as soon as the
    total divergence passes thresh or the transcript ends.
    """
    priors = priors or all_priors(p)
    kl = {}
    FA = FB = F = Fraction(0)
    tau = 0.0
    for (x, y), w in p.mu.items():
        stack = []
        for m0, a0 in p.p0.items():
            if not a0:
                continue
            for s, a1 in (p.cond(1, x, (m0,)).items() if p.C >= 1 else [(None, 1)]):
                if a1:
                    pre = (m0,) if s is None else (m0, s)
                    stack.append((pre, w * a0 * a1, 0.0, 0.0, 0.0, 0.0))
        while stack:
            pre, pr, sA, sB, dA, dB = stack.pop()
            j = len(pre)
            if j > p.C or dA + dB > thresh:
                tau = max(tau, dA + dB)
                if abs(sA + sB - dA - dB) >= alpha:
                    F += pr
                if abs(sA - dA) >= alpha:
                    FA += pr
                if abs(sB - dB) >= alpha:
                    FB += pr
                continue
            inp = x if j % 2 else y
            cond = p.cond(j, inp, pre)
            prior = priors[pre]
            key = (j, inp, pre)
            if key not in kl:
                kl[key] = _round_kl(cond, prior)
            for s, c in cond.items():
                if not c:
                    continue
                z = math.log2(c) - math.log2(prior[s])
                if j % 2:
                    stack.append((pre + (s,), pr * c, sA + z, sB, dA + kl[key], dB))
                else:
                    stack.append((pre + (s,), pr * c, sA, sB + z, dA, dB + kl[key]))
    return {"F": F, "F_A": FA, "F_B": FB, "tau": tau}


def concentration_check(p, beta, thresh, alphas):
    """Rows comparing the exact deviation masses with 2 exp(-c alpha^2 / tau)."""
    c = concentration_constant(beta)
    rows = []
    priors = all_priors(p)
    for a in alphas:
        r = frontier_deviation_masses(p, thresh, a, priors)
        tau = r["tau"]
        bound = 2 * math.exp(-c * a * a / tau) if tau > 0 else 0.0
        worst = max(float(r["F"]), float(r["F_A"]), float(r["F_B"]))
        rows.append({"alpha": a, "tau": tau, "bound": bound, "F": float(r["F"]),
                     "F_A": float(r["F_A"]), "F_B": float(r["F_B"]),
                     "pass": worst <= bound or (tau == 0 and worst == 0)})
    return rows


# ---------------------------------------------------------------------------
# external compressor


class _Divergence:
    """Cumulative divergence costs along a transcript, per party."""

    def __init__(self, p, views):
        self.p = p
        self.v = views
        self.cache = {}

    def costs(self, side, inp, m):
        key = (side, inp, tuple(m))
        got = self.cache.get(key)
        if got is None:
            d = [0.0] * (self.p.C + 1)
            acc = 0.0
            par = 1 if side == "A" else 0
            for j in range(2, self.p.C + 1):
                if j % 2 == par:
                    cond = self.v.alice(j, inp, m[:j]) if side == "A" else self.v.bob(j, inp, m[:j])
                    acc += _round_kl(cond, self.v.prior(j, m[:j]))
                d[j] = acc
            got = self.cache[key] = d
        return got

    def stop(self, side, inp, m, ell, beta):
        d = self.costs(side, inp, m)
        lim = 20 * float(beta) + d[ell]
        for j in range(ell + 1, self.p.C + 1):
            if d[j] > lim:
                return j
        return self.p.C


def _index_bits(C):
    return max(1, (C).bit_length())


def external_hop(p, views, div, x, y, prefix, beta, sr, stream, led=None, cap=None):
    """One step-3 extension of an agreed prefix by rejection sampling.

    Returns (new prefix, attempts, bits) or (None, attempts, bits) if the
    step-3 cap would be exceeded.  Proposals come from the public prior
    p(m | m_<=l); Alice keeps them with probability (1/2) prod_odd of her
    likelihood ratios, Bob with (1/2) prod_even of his, over rounds l+1..k.
    """
    C = p.C
    ell = len(prefix) - 1
    nb = _index_bits(C)
    per = 2 * nb + 2
    attempts = 0
    used = 0
    while True:
        if cap is not None and used + per > cap:
            return None, attempts, used
        s = (stream, attempts)
        mt = list(prefix)
        for i in range(ell + 1, C + 1):
            mt.append(_draw(views.prior(i, mt), sr.uniform(label_stream(s, "m"), i)))
        kA = div.stop("A", x, mt, ell, beta)
        kB = div.stop("B", y, mt, ell, beta)
        k = min(kA, kB)
        ra = rb = Fraction(1, 2)
        for i in range(ell + 1, k + 1):
            pr = views.prior(i, mt[:i])[mt[i]]
            if i % 2 == 1:
                ra *= views.alice(i, x, mt[:i])[mt[i]] / pr
            else:
                rb *= views.bob(i, y, mt[:i]).get(mt[i], 0) / pr
        if led is not None:
            led.send("A", nb, "hop-rA")
            led.send("B", nb, "hop-rB")
        okA = sr.uniform(label_stream(s, "zA"), 0) <= ra
        okB = sr.uniform(label_stream(s, "zB"), 0) <= rb
        if led is not None:
            led.send("A", 1, "hop-accA")
            led.send("B", 1, "hop-accB")
        used += per
        attempts += 1
        if okA and okB:
            return tuple(mt[:k + 1]), attempts, used


def compress_external(p_smooth, q, f, params, eps=None):
    """Round-one correlated sampling against the public prior, rejection-sampled
    frontier hops, then the shared acceptance step at the external cost level."""
    p = p_smooth
    if not p.binary_after_first():
        raise NonBinaryRounds("rounds 2..C must be binary")
    if not check_smooth(p, params.beta):
        raise NotSmooth("protocol is not %s-smooth" % params.beta)
    q = _rect(q, p)
    cost, M = _cost_level("external", q, p, f, params)
    I = params.I
    eps = as_fraction(eps if eps is not None else params.eps)
    C = p.C
    Lc = lceil(M.scale(5))
    fin = _Final(q, p, f, M, I, eps)
    views = _Views(p)
    div = _Divergence(p, views)
    if C >= 2:
        capf = float(M) * 2.0 ** min(60.0, 15 * float(M) / float(I)) * math.log2(C) / float(params.beta)
        cap = int(min(HOP_CAP_BITS, capf))
    else:
        cap = 0
    budget = (psi_budget(Lc, eps) + 1 if C >= 1 else 0) + cap + fin.k + 1
    st = _streams("external")

    def runner(x, y, sr, led):
        m0 = _draw(p.p0, sr.uniform(st["m0"], 0))
        etaA, etaB = sr.uniform(st["eta"], 0), sr.uniform(st["eta"], 1)
        hf = HashFn(sr, st["h"], bits=fin.k)
        hops = []
        if C == 0:
            m = (m0,)
            mB = m
        else:
            u = views.alice(1, x, (m0,))
            v = views.prior(1, (m0,))
            ps = one_round_sample(u, v, Lc, eps, sr, stream=st["psi"], outcomes=p.alphabets[1])
            led.absorb(ps.ledger)
            led.send("B", 1, "psi-status")
            if ps.b is None:
                return RunResult(_coin(sr, "external"), None, "psi", None, led)
            m = (m0, ps.a)
            mB = (m0, ps.b)
            used = 0
            while len(m) < C + 1:
                nm, att, bits = external_hop(p, views, div, x, y, m, params.beta, sr,
                                             (st["hop"], len(hops)), led, cap - used)
                used += bits
                hops.append(att)
                if nm is None:
                    return RunResult(_coin(sr, "external"), None, "step3-cap", None, led,
                                     {"hops": hops})
                m = nm
                mB = (m0, ps.b) + m[2:]
        out, s, ab = fin.finish(x, y, m, mB, etaA, etaB, hf, led, sr, "external")
        return RunResult(out, s, ab, (x, y, m), led, {"hops": hops})

    meta = {"M_ext": float(M), "cost": float(cost), "L": Lc, "eps": str(eps),
            "step3_cap": cap, "hash_bits": fin.k, "I": str(I), "K": str(params.K)}
    return ExecProtocol("external", budget, runner, p, f, meta,
                        fin.certificates(q, p, "external"))


# ---------------------------------------------------------------------------
# bounded-round compressor


def _pad_pair(p, q):
    """Add one trivial Bob round so the last message is Bob's."""
    from .protocol import pad_rounds
    pp = pad_rounds(p, p.C + 1)
    A = {(x, m + (0,)): v for (x, m), v in q.A.items()}
    B = {(y, m + (0,)): v for (y, m), v in q.B.items()}
    return pp, RectDist(q.mu, A, B)


def compress_bounded_round(p, q, f, r, params):
    """One correlated-sampling round per message, then both candidate last
    bits hashed by Alice and the last bit drawn by Bob."""
    if p.C != r:
        raise RoundMismatch("protocol has %d rounds, expected %d" % (p.C, r))
    if r < 1 or len(p.alphabets[r]) > 2:
        raise RoundMismatch("the last message must be a single bit")
    q = _rect(q, p)
    cost, M = _cost_level("marginal", q, p, f, params)
    I = params.I
    orig_r = r
    if r % 2 == 1:
        p, q = _pad_pair(p, q)
        r += 1
    k_eps = lceil(M.scale(Fraction(4) / I) + LogExpr.log2(r + 1))
    eps = Fraction(1, 2 ** max(2, k_eps))
    Lc = lceil(M.scale(14) + LogExpr.log2(r + 1, 5))
    fin = _Final(q, p, f, M, I, eps)
    views = _Views(p)
    last = p.alphabets[r]
    budget = (r - 1) * (psi_budget(Lc, eps) + 1) + len(last) * fin.k + 1
    st = _streams("rounds")

    def runner(x, y, sr, led):
        m0 = _draw(p.p0, sr.uniform(st["m0"], 0))
        etaA = [sr.uniform(st["eta"], b) for b in range(len(last))]
        etaB = sr.uniform(st["eta"], len(last))
        hf = HashFn(sr, st["h"], bits=fin.k)
        mA, mB, tr = [m0], [m0], [m0]
        flag = 0
        for i in range(1, r):
            if i % 2 == 1:
                u, v = views.alice(i, x, mA), views.bob(i, y, mB)
                sender = "A"
            else:
                u, v = views.bob(i, y, mB), views.alice(i, x, mA)
                sender = "B"
            ps = one_round_sample(u, v, Lc, eps, sr, stream=(st["psi"], i),
                                  outcomes=p.alphabets[i])
            for party, bits, lab in ps.ledger.log:
                led.send(party, bits + flag, lab)
                flag = 0
            tr.append(ps.a)
            if ps.b is None:
                return RunResult(_coin(sr, "rounds"), None, "psi", None, led, {"round": i})
            if sender == "A":
                mA.append(ps.a)
                mB.append(ps.b)
            else:
                mB.append(ps.a)
                mA.append(ps.b)
            flag = 1      # the receiver's next message carries a continue bit
        # Alice: one hash per candidate last symbol
        msgs = []
        for b, s in enumerate(last):
            msgs.append(fin.alice(x, tuple(mA) + (s,), etaA[b], hf))
        led.send("A", len(last) * fin.k, "final-hashes")
        bsym = _draw(views.bob(r, y, mB), sr.uniform(st["t"], 0))
        tr.append(bsym)
        tr = tr[:orig_r + 1]
        s = fin.bob(y, tuple(mB) + (bsym,), etaB, hf, msgs[last.index(bsym)])
        led.send("B", 1, "final-sign")
        if s is None:
            return RunResult(_coin(sr, "rounds"), None, "final", (x, y, tuple(tr)), led)
        return RunResult(0 if s > 0 else 1, s, None, (x, y, tuple(tr)), led,
                         {"agree": mA == mB})

    meta = {"M": float(M), "cost": float(cost), "L": Lc, "eps": str(eps), "rounds": orig_r,
            "padded": r != orig_r, "hash_bits": fin.k, "I": str(I), "K": str(params.K)}
    return ExecProtocol("rounds", budget, runner, p, f, meta, fin.certificates(q, p, "rounds"))


# ---------------------------------------------------------------------------
# communication-free-of-C compressor


def compress_commfree(p, q, f, params, scan_factor=64):
    """Shared stream of uniform transcripts with two thresholds each; Alice
    and Bob pick their first acceptable index with slack 2^(6M) on the other
    party's factor; a hash of the index and the acceptance step follow."""
    q = _rect(q, p)
    cost, M = _cost_level("marginal", q, p, f, params)
    I = params.I
    k = max(2, lceil(M.scale(Fraction(6) / I) + M.scale(8)))
    eps = Fraction(1, 2 ** k)
    fin = _Final(q, p, f, M, I, eps)
    views = _Views(p)
    ts = p.transcripts()
    n = len(ts)
    horizon = scan_factor * n
    slack = M.scale(6)
    budget = 2 * fin.k + 1
    st = _streams("commfree")

    def factors(side, inp, m, true_y=None):
        """(odd product, even product incl. p(m0)) from one party's view."""
        odd, even = Fraction(1), p.p0.get(m[0], Fraction(0))
        for j in range(1, p.C + 1):
            if side == "A":
                d = views.alice(j, inp, m[:j])
            elif side == "B":
                d = views.bob(j, inp, m[:j])
            else:
                d = views.true(j, inp, true_y, m[:j])
            if j % 2:
                odd *= d.get(m[j], 0)
            else:
                even *= d.get(m[j], 0)
        return odd, even

    cache = {}

    def fac(side, inp, m, true_y=None):
        key = (side, inp, m, true_y)
        if key not in cache:
            cache[key] = factors(side, inp, m, true_y)
        return cache[key]

    def ok_slack(rho, v):
        if rho < v:
            return True
        if v == 0:
            return False
        return LogExpr.log2(rho) <= slack + LogExpr.log2(v) if rho > 0 else True

    def scan(sr, test):
        for i in range(1, horizon + 1):
            m = ts[sr.below(st["m0"], i, n)]
            rA, rB = sr.uniform(st["rho"], 2 * i), sr.uniform(st["rho"], 2 * i + 1)
            if test(m, rA, rB):
                return i, m
        raise ScanHorizonExceeded("no acceptance within %d candidates" % horizon)

    def runner(x, y, sr, led):
        etaA, etaB = sr.uniform(st["eta"], 0), sr.uniform(st["eta"], 1)
        hf = HashFn(sr, st["h"], bits=fin.k)
        tf = HashFn(sr, st["t"], bits=fin.k)

        def alice_test(m, rA, rB):
            o, e = fac("A", x, m)
            return rA < o and ok_slack(rB, e)

        def bob_test(m, rA, rB):
            o, e = fac("B", y, m)
            return ok_slack(rA, o) and rB < e

        def star_test(m, rA, rB):
            o, e = fac("T", x, m, y)
            return rA < o and rB < e

        istar, mstar = scan(sr, star_test)
        iA, mA = scan(sr, alice_test)
        msg = fin.alice(x, mA, etaA, hf)
        tA = 0 if msg == 0 else fin.tag(tf, iA)
        led.send("A", 2 * fin.k, "index-and-hash")
        iB, mB = scan(sr, bob_test)
        s = None
        if tA != 0 and fin.tag(tf, iB) == tA:
            s = fin.bob(y, mB, etaB, hf, msg)
        led.send("B", 1, "final-sign")
        info = {"i_A": iA, "i_B": iB, "i_star": istar}
        if s is None:
            return RunResult(_coin(sr, "commfree"), None, "final", (x, y, mstar), led, info)
        return RunResult(0 if s > 0 else 1, s, None, (x, y, mstar), led, info)

    meta = {"M": float(M), "cost": float(cost), "eps_log2": -k, "hash_bits": fin.k,
            "scan_horizon": horizon, "I": str(I), "K": str(params.K)}
    return ExecProtocol("commfree", budget, runner, p, f, meta,
                        fin.certificates(q, p, "commfree"))


# ---------------------------------------------------------------------------
# estimation


def _draw_input(mu, sr, t):
    return _draw(mu, sr.uniform(label_stream("inputs"), t))


class AdvantageEstimate:
    def __init__(self, protocol, instance, trials, wins, seed, aborts, tracked, max_bits,
                 budget, budget_aborts, horizon_hits=0):
        self.protocol = protocol
        self.instance = instance
        self.trials = trials
        self.wins = wins
        self.seed = seed
        self.aborts = aborts
        self.tracked = tracked
        self.max_bits = max_bits
        self.budget = budget
        self.budget_aborts = budget_aborts
        self.horizon_hits = horizon_hits
        lo, hi = wilson_interval(wins, trials)
        self.estimate = 2 * wins / trials - 1
        self.ci_low = 2 * lo - 1
        self.ci_high = 2 * hi - 1

    def record(self):
        return {"protocol": self.protocol, "instance": self.instance, "trials": self.trials,
                "estimate": self.estimate, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "seed": self.seed}

    def details(self):
        r = self.record()
        r.update({"aborts": dict(sorted(self.aborts.items())), "max_bits": self.max_bits,
                  "budget": self.budget, "budget_aborts": self.budget_aborts,
                  "horizon_hits": self.horizon_hits})
        return r

    def tracked_tv(self, p):
        """TV between the empirical tracked (x, y, m) law and p."""
        return tv_distance(self.tracked, p.table())


def estimate_advantage(ep, mu, f, trials, sr, instance=None, seed=None, keep_tracked=True):
    """Monte Carlo E[(-1)^(output + f)] with a Wilson 95% interval.

    Trial t draws (x, y) from mu and runs the protocol on sr.child("trial", t).
    A run that hits a scan horizon counts as an abort with a random output
    and is tallied separately.
    """
    if trials < 1000:
        raise ValueError("at least 1000 trials are needed for a meaningful interval")
    wins = 0
    aborts = {}
    tracked = {}
    max_bits = 0
    budget_aborts = 0
    horizon = 0
    for t in range(trials):
        x, y = _draw_input(mu, sr, t)
        rs = sr.child("trial", t)
        try:
            res = ep.run(x, y, rs)
        except ScanHorizonExceeded:
            horizon += 1
            out = _coin(rs, "horizon")
            wins += out == f(x, y)
            aborts["horizon"] = aborts.get("horizon", 0) + 1
            continue
        wins += res.output == f(x, y)
        if res.aborted:
            aborts[res.aborted] = aborts.get(res.aborted, 0) + 1
            if res.aborted == "budget":
                budget_aborts += 1
        max_bits = max(max_bits, res.ledger.total)
        if keep_tracked and res.tracked is not None:
            tracked[res.tracked] = tracked.get(res.tracked, 0) + 1
    return AdvantageEstimate(ep.name, instance or (ep.p.name or "?"), trials, wins,
                             seed, aborts, tracked, max_bits, ep.budget, budget_aborts, horizon)
