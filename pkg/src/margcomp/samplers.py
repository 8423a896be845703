"""Shared randomness, hash families, the one-round correlated sampler and the
first-difference search.

Randomness: word(stream, index) is the first 8 bytes (little endian) of
BLAKE2b(key = seed as 8 little-endian bytes, digest_size = 8) applied to
stream || index, each as 8 little-endian bytes.
"""

import hashlib
import math
from fractions import Fraction

from .prob import as_fraction

TWO64 = 1 << 64
MERSENNE61 = (1 << 61) - 1
CHUNK = 56


class ScanHorizonExceeded(RuntimeError):
    """A lazily generated shared sequence ran past its scan cap."""


class BudgetExceeded(RuntimeError):
    pass


def _u64(v):
    return (int(v) % TWO64).to_bytes(8, "little")


def label_stream(*labels):
    """A 64-bit stream id derived from arbitrary labels."""
    h = hashlib.blake2b(repr(labels).encode(), digest_size=8, person=b"margcomp-stream")
    return int.from_bytes(h.digest(), "little")


class SharedRandomness:
    """Counter-based keyed generator; read-only after seeding."""

    def __init__(self, seed):
        self.seed = int(seed) % TWO64
        self._key = _u64(self.seed)

    def word(self, stream, index):
        h = hashlib.blake2b(_u64(stream) + _u64(index), digest_size=8, key=self._key)
        return int.from_bytes(h.digest(), "little")

    def uniform(self, stream, index):
        """Dyadic rational word / 2^64 in [0, 1)."""
        return Fraction(self.word(stream, index), TWO64)

    def below(self, stream, index, n):
        """Integer in [0, n); bias at most n / 2^64."""
        return self.word(stream, index) % n

    def child(self, *labels):
        """Independent generator for a replica or sub-protocol."""
        return SharedRandomness(self.word(label_stream(*labels), 0))


def _encode(z):
    h = hashlib.blake2b(repr(z).encode(), digest_size=8, person=b"margcomp-point")
    return int.from_bytes(h.digest(), "little") % MERSENNE61


class HashFn:
    """Pairwise-uniform hash into range(size) or into `bits`-bit strings.

    Each 56-bit chunk is ((a z + b) mod (2^61 - 1)) mod 2^56 with a, b drawn
    from the shared stream; for a fixed pair of distinct points a chunk
    collides with probability at most 2 / 2^56 (and at most 2/size in range mode).
    """

    def __init__(self, sr, stream, size=None, bits=None):
        if (size is None) == (bits is None):
            raise ValueError("give exactly one of size, bits")
        self.size = size
        self.bits = bits
        n = 1 if size is not None else max(1, -(-bits // CHUNK))
        self._coef = []
        for j in range(n):
            a = 1 + sr.word(stream, 2 * j) % (MERSENNE61 - 1)
            b = sr.word(stream, 2 * j + 1) % MERSENNE61
            self._coef.append((a, b))

    def __call__(self, z):
        e = _encode(z)
        if self.size is not None:
            a, b = self._coef[0]
            return ((a * e + b) % MERSENNE61) % self.size
        out = 0
        for a, b in self._coef:
            out = (out << CHUNK) | (((a * e + b) % MERSENNE61) & ((1 << CHUNK) - 1))
        extra = len(self._coef) * CHUNK - self.bits
        return out >> extra


class CommLedger:
    """Bits sent by each party, in order."""

    def __init__(self, budget=None):
        self.bits_A = 0
        self.bits_B = 0
        self.round_count = 0
        self.log = []
        self.budget = budget
        self._last = None

    def send(self, party, bits, label=""):
        bits = int(bits)
        if bits < 0:
            raise ValueError("negative message length")
        if self.budget is not None and self.total + bits > self.budget:
            raise BudgetExceeded("message of %d bits would pass the budget %s at %d"
                                 % (bits, self.budget, self.total))
        if party == "A":
            self.bits_A += bits
        elif party == "B":
            self.bits_B += bits
        else:
            raise ValueError("party must be 'A' or 'B'")
        if party != self._last:
            self.round_count += 1
            self._last = party
        self.log.append((party, bits, label))

    @property
    def total(self):
        return self.bits_A + self.bits_B

    def absorb(self, other):
        for party, bits, label in other.log:
            self.send(party, bits, label)

    def record(self):
        return {"bits_A": self.bits_A, "bits_B": self.bits_B, "total": self.total,
                "rounds": self.round_count}


# ---------------------------------------------------------------------------
# one-round correlated sampling


def _dist(d):
    if hasattr(d, "mass"):
        d = d.mass
    return {k: as_fraction(v) for k, v in dict(d).items()}


def psi_bits(L, eps):
    """Bit length of the sampler's single message."""
    eps = as_fraction(eps)
    Lc = max(0, math.ceil(L))
    K = _blocks(eps)
    return _bits_for(K + 1) + Lc + _log_inv(eps) + 1


def psi_budget(L, eps):
    return L + 2 * _log_inv(eps) + 16


def _log_inv(eps):
    """ceil(log2(1/eps)) for a rational eps."""
    eps = as_fraction(eps)
    k = 0
    while Fraction(1, 2 ** k) > eps:
        k += 1
    return k


def _blocks(eps):
    """Number of n-candidate blocks Alice may use: ceil(ln(2/eps))."""
    eps = as_fraction(eps)
    # logs of the integer parts, so tiny eps does not underflow
    return max(1, math.ceil(math.log(2 * eps.denominator) - math.log(eps.numerator)))


def _bits_for(n):
    return 0 if n <= 1 else (n - 1).bit_length()


class PsiResult:
    def __init__(self, a, b, ledger, index, block, candidates):
        self.a = a
        self.b = b
        self.ledger = ledger
        self.index = index
        self.block = block
        self.candidates = candidates


def one_round_sample(u, v, L, eps, sr, stream=0, outcomes=None):
    """Alice holds u, Bob holds v; both end with a sample (Bob may say None).

    Shared stream: candidates z_i uniform over the outcome set, thresholds
    rho_i uniform dyadic.  Alice takes a = z_i for the first i with
    rho_i < u(z_i), and sends the block number ceil(i/n) (or an overflow
    symbol) plus a (ceil(L) + ceil(log 1/eps) + 1)-bit hash of i.  Bob
    looks in that block for the first j with rho_j < 2^ceil(L) v(z_j) whose
    hash matches and outputs z_j, or None.
    """
    u, v = _dist(u), _dist(v)
    eps = as_fraction(eps)
    if not 0 < eps <= Fraction(1, 4):
        raise ValueError("eps must lie in (0, 1/4]")
    Z = sorted(set(outcomes) if outcomes is not None else
               {k for k, w in u.items() if w} | {k for k, w in v.items() if w}, key=repr)
    n = len(Z)
    Lc = max(0, math.ceil(L))
    K = _blocks(eps)
    hbits = Lc + _log_inv(eps) + 1
    s_z, s_rho, s_h = label_stream(stream, "z"), label_stream(stream, "rho"), label_stream(stream, "h")
    horizon = 64 * n * K * (1 << min(Lc, 32))
    ledger = CommLedger()

    def cand(i):
        return Z[sr.below(s_z, i, n)], sr.uniform(s_rho, i)

    i = 0
    while True:
        i += 1
        if i > horizon:
            raise ScanHorizonExceeded("no acceptance in %d candidates" % horizon)
        z, rho = cand(i)
        if rho < u.get(z, 0):
            break
    a = z
    block = (i - 1) // n + 1
    h = HashFn(sr, s_h, bits=hbits)
    ledger.send("A", _bits_for(K + 1) + hbits, "psi")
    if block > K:
        return PsiResult(a, None, ledger, i, block, 0)
    tag = h(i)
    scale = Fraction(2) ** Lc
    seen = 0
    b = None
    for j in range((block - 1) * n + 1, block * n + 1):
        zj, rj = cand(j)
        if rj < scale * v.get(zj, 0):
            seen += 1
            if h(j) == tag:
                b = zj
                break
    return PsiResult(a, b, ledger, i, block, seen)


# ---------------------------------------------------------------------------
# first difference


TAU_CONSTANT = 12
TAU_MAX_C = 4096


def tau_levels(C):
    return 1 + max(0, math.ceil(math.log2(C))) if C > 1 else 1


def tau_hash_bits(C, eps):
    return _log_inv(Fraction(eps) / (2 * tau_levels(C)))


def tau_budget(C, eps):
    """TAU_CONSTANT * ceil(log2(C / eps))."""
    return TAU_CONSTANT * max(1, _log_inv(Fraction(eps) / max(C, 1)))


class TauResult:
    def __init__(self, index, ledger, comparisons):
        self.index = index
        self.ledger = ledger
        self.comparisons = comparisons

    @property
    def equal(self):
        return self.index is None


def first_difference(mA, mB, eps, sr, stream=0):
    """Index (1-based) of the first position where mA and mB differ, or None.

    First a hashed comparison of the full strings, then a binary search on
    prefix length; each comparison costs a k-bit hash from Alice and a
    one-bit verdict from Bob, with k = ceil(log2(2T/eps)) over T comparisons.
    """
    mA, mB = tuple(mA), tuple(mB)
    if len(mA) != len(mB):
        raise ValueError("strings must have equal length")
    C = len(mA)
    if C > TAU_MAX_C:
        raise ValueError("length %d beyond the supported %d" % (C, TAU_MAX_C))
    eps = as_fraction(eps)
    k = tau_hash_bits(C, eps)
    ledger = CommLedger()
    count = [0]

    def same(length):
        h = HashFn(sr, label_stream(stream, "tau", count[0]), bits=k)
        count[0] += 1
        ledger.send("A", k, "tau-hash")
        ledger.send("B", 1, "tau-verdict")
        return h((length, mA[:length])) == h((length, mB[:length]))

    if C == 0 or same(C):
        return TauResult(None, ledger, count[0])
    lo, hi = 0, C          # prefix lo looks equal, prefix hi differs
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if same(mid):
            lo = mid
        else:
            hi = mid
    if ledger.total > tau_budget(C, eps):
        raise BudgetExceeded("tau used %d bits" % ledger.total)
    return TauResult(hi, ledger, count[0])
