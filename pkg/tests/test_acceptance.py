"""The eleven acceptance criteria, each at its stated tolerance.

Every test records one line in conftest.ACCEPTANCE; the pytest terminal
summary prints them.  Running this file directly prints the same lines.
"""

import math
import random
import time
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE
from margcomp.compressors import (binomial_tail_oracle, block_decode_error, compress_bounded_round,
                                  compress_commfree, compress_external, compress_general,
                                  concentration_check, estimate_advantage, smooth)
from margcomp.construction import construct_witness, restrict_rect
from margcomp.prob import LogExpr, tv_distance, wilson_interval
from margcomp.protocol import (AND, XOR, canonical_instances, check_smooth,
                               optimal_advantage_oracle, random_protocol,
                               random_smooth_protocol, tensor_protocol, two_copy_instances,
                               uniform_bits_mu, xor_combine)
from margcomp.rectangular import CostParams, RectDist, RectSet, external_cost, marginal_cost
from margcomp.samplers import (SharedRandomness, first_difference, one_round_sample,
                               psi_budget, tau_budget)
from margcomp.sets import build_consequence_sets, check_expectation_bounds, trim, trim_certificates
from margcomp.subadditivity import build_children, nonzero_advantage_witness, split
from margcomp.cli import xor_experiment

MC_SEED = 20261014
TRIALS = 100000


def record(n, desc, ok, detail=""):
    ACCEPTANCE[n] = (desc, bool(ok), detail)
    assert ok, "criterion %d failed: %s" % (n, detail)


def _rand_dist(rng, n, lo=1, hi=9):
    w = [rng.randint(lo, hi) for _ in range(n)]
    s = sum(w)
    return {i: Fraction(v, s) for i, v in enumerate(w)}


def _random_rectset(rng, p, keep=0.7):
    """A random rectangular event with at least one support point."""
    pt = p.table()
    ms = sorted({m for (_, _, m) in pt}, key=repr)
    while True:
        sl = {}
        for m in ms:
            a = {x for x in p.X if rng.random() < keep}
            b = {y for y in p.Y if rng.random() < keep}
            if a and b:
                sl[m] = (a, b)
        R = RectSet(sl)
        if R.mass(pt) > 0:
            return R


def _nonzero_canonical():
    out = []
    for name, (p, f) in canonical_instances().items():
        t = p.table()
        adv = {}
        for (x, y, m), v in t.items():
            adv[m] = adv.get(m, 0) + (v if f(x, y) == 0 else -v)
        if any(adv.values()):
            out.append((name, p, f))
    return out


# ---------------------------------------------------------------------------


def test_criterion_01_exact_identities():
    t0 = time.time()
    rng = random.Random(101)
    cases = []
    for name, (p, f) in canonical_instances().items():
        base = p if p.C else random_protocol(rng, sizes=(1, 2))
        cases.append((name, tensor_protocol(base, base), f, f))
    for name, (p, f, g) in two_copy_instances().items():
        cases.append((name, p, f, g))
    for k in range(100):
        p1 = random_protocol(rng, sizes=(1, 2) if k % 2 else (1, 2, 2), allow_zero=False)
        p2 = random_protocol(rng, sizes=(1, 2), allow_zero=bool(k % 3))
        cases.append(("random-%d" % k, tensor_protocol(p1, p2), AND(), XOR()))
    bad = []
    points = 0
    for name, pp, f, g in cases:
        R = _random_rectset(rng, pp)
        for q in (RectDist.from_protocol(pp), restrict_rect(pp, R)):
            cp = build_children(pp, q, f, g)       # raises on any identity failure
            for k, (holds, n) in cp.identities.items():
                points += n
                if not holds:
                    bad.append((name, k))
    dt = time.time() - t0
    record(1, "product and subadditivity identities, exact", not bad and dt < 60,
           "%d instances, %d point checks, %d failures, %.1fs" % (len(cases), points, len(bad), dt))


def test_criterion_02_product_external_equals_marginal():
    rng = random.Random(202)
    params = CostParams()
    mism = 0
    for k in range(50):
        p = random_protocol(rng, sizes=(1, 2, 2), product=True, allow_zero=False)
        pt = p.table()
        A = {}
        B = {}
        for (x, y, m) in pt:
            A.setdefault((x, m), Fraction(rng.randint(1, 7), 7))
            B.setdefault((y, m), Fraction(rng.randint(1, 7), 7))
        z = sum(p.mu[(x, y)] * A[(x, m)] * B[(y, m)] for (x, y, m) in pt)
        A = {k2: v / z for k2, v in A.items()}
        f = AND() if k % 2 else XOR()
        q = RectDist(p.mu, A, B)
        if external_cost(q, p, f, params).value != marginal_cost(q, p, f, params).value:
            mism += 1
    record(2, "external cost equals marginal cost on product inputs", mism == 0,
           "50 instances, %d mismatches" % mism)


def test_criterion_03_trimming():
    rng = random.Random(303)
    kappa = Fraction(1, 6)
    fails = 0
    for k in range(200):
        p = random_protocol(rng, sizes=(1, 2, 2) if k % 2 else (2, 2), allow_zero=True)
        b = p.table()
        keys = sorted(b, key=repr)
        w = [rng.randint(0, 6) for _ in keys]
        if not any(w):
            w[0] = 1
        s = sum(w)
        a = {key: Fraction(v, s) for key, v in zip(keys, w) if v}
        res = trim(a, b, kappa)
        certs = trim_certificates(a, b, res)
        if not (res.T.mass(a) >= Fraction(1, 2) and all(certs) and len(certs) == 4):
            fails += 1
    record(3, "trimming keeps half the mass with all three ratio bounds", fails == 0,
           "200 instances, kappa=1/6, %d failures" % fails)


def test_criterion_04_construction():
    t0 = time.time()
    params = CostParams()
    bad = []
    n = 0
    for name, p, f in _nonzero_canonical():
        tr = construct_witness(p, f, params)
        n += len(tr.certificates)
        bad += [(name, c.name) for c in tr.certificates if not c]
    dt = time.time() - t0
    record(4, "witness construction certificates", not bad and dt < 300,
           "%d certificates, failures %s, %.1fs" % (n, bad, dt))


def test_criterion_05_split():
    params = CostParams()
    bad = []
    n = 0
    for name, (p, f, g) in two_copy_instances().items():
        q = nonzero_advantage_witness(p, xor_combine(f, g))
        cp = build_children(p, q, f, g)
        if not all(h for h, _ in cp.identities.values()):
            bad.append((name, "identities"))
        split(cp, params)
        names = {c.name for c in cp.certificates}
        for need in ("split.Uprime_mass", "split.Lprime_mass", "split.large_adv",
                     "split.bucket_adv", "split.qtbound", "split.r1_normalized"):
            if need not in names:
                bad.append((name, "missing " + need))
        n += len(cp.certificates)
        bad += [(name, c.name) for c in cp.certificates if not c]
        if sum(cp.r_final.table().values()) != 1:
            bad.append((name, "r1 mass"))
    record(5, "two-copy split certificates", not bad, "%d certificates, failures %s" % (n, bad))


def _pipeline_pairs(params):
    out = []
    for name, p, f in _nonzero_canonical():
        tr = construct_witness(p, f, params)
        out.append((name, tr.q, p, f))
    for name, (p, f, g) in two_copy_instances().items():
        cp = build_children(p, nonzero_advantage_witness(p, xor_combine(f, g)), f, g)
        split(cp, params)
        cproto, cf = cp.child
        out.append((name + " child", cp.r_final, cproto, cf))
    return out


def test_criterion_06_consequence_masses():
    params = CostParams(K=3)
    bad = []
    n = 0
    for name, q, p, f in _pipeline_pairs(params):
        cs = build_consequence_sets(q, p, f, params, K=3, K_ext=2)
        certs = list(cs.certificates) + check_expectation_bounds(q, p, f, params)
        n += len(certs)
        bad += [(name, c.name) for c in certs if not c]
        assert len(cs.certificates) == 6
    record(6, "consequence-set mass bounds, drift and advantage bounds", not bad,
           "%d certificates, failures %s" % (n, bad))


def test_criterion_07_samplers():
    rng = random.Random(707)
    sr = SharedRandomness(MC_SEED)
    eps = Fraction(1, 16)
    details = []
    ok = True
    u = _rand_dist(rng, 8)
    settings = [(u, u, 0), (u, _rand_dist(rng, 8), 2), (_rand_dist(rng, 8), _rand_dist(rng, 8, 0, 9), 1)]
    for s, (u, v, L) in enumerate(settings):
        counts = {}
        mism = 0
        worst = 0
        for t in range(TRIALS):
            r = one_round_sample(u, v, L, eps, sr, stream=("acc7", s, t), outcomes=range(8))
            counts[r.a] = counts.get(r.a, 0) + 1
            mism += r.b != r.a
            worst = max(worst, r.ledger.total)
        tv = tv_distance(counts, u)
        slack = sum((u[z] * max(0, 1 - Fraction(2) ** L * v.get(z, 0) / u[z]) for z in u),
                    Fraction(0))
        bound = float(eps + slack)
        rate = mism / TRIALS
        sig = math.sqrt(bound * (1 - bound) / TRIALS) if bound < 1 else 0.0
        this = tv <= 0.02 and rate <= bound + 3 * sig and worst <= psi_budget(L, eps)
        ok &= this
        details.append("psi[%d] tv=%.4f mism=%.4f<=%.4f bits=%d" % (s, tv, rate, bound + 3 * sig, worst))
    n_tau = 10000
    for C, pos in ((8, 3), (8, 1), (64, 40)):
        a = tuple(rng.randint(0, 1) for _ in range(C))
        b = list(a)
        b[pos - 1] ^= 1
        right = 0
        worst = 0
        for t in range(n_tau):
            r = first_difference(a, tuple(b), eps, sr, stream=("acc7t", C, pos, t))
            right += r.index == pos
            worst = max(worst, r.ledger.total)
        rate = right / n_tau
        lo = 1 - float(eps) - 3 * math.sqrt(float(eps) * (1 - float(eps)) / n_tau)
        this = rate >= lo and worst <= tau_budget(C, eps)
        ok &= this
        details.append("tau[C=%d,i=%d] %.4f>=%.4f bits=%d<=%d" % (C, pos, rate, lo, worst,
                                                                 tau_budget(C, eps)))
    record(7, "sampler law, mismatch rate and ledgers", ok, "; ".join(details))


def test_criterion_08_compressors():
    params = CostParams(I=8, K=0)
    eps = Fraction(1, 2 ** 20)
    inst = canonical_instances()
    p, f = inst["send-x/AND"]
    q = construct_witness(p, f, params).q
    ok = True
    details = []
    builders = {
        "general": lambda P, Q, F: compress_general(P, Q, F, params, eps=eps),
        "external": lambda P, Q, F: compress_external(P, Q, F, params, eps=eps),
        "rounds": lambda P, Q, F: compress_bounded_round(P, Q, F, P.C, params),
        "commfree": lambda P, Q, F: compress_commfree(P, Q, F, params),
    }
    for name, mk in builders.items():
        t0 = time.time()
        ep = mk(p, q, f)
        est = estimate_advantage(ep, p.mu, f, TRIALS, SharedRandomness(MC_SEED))
        dt = time.time() - t0
        this = est.ci_low > 0 and est.budget_aborts == 0 and est.max_bits <= ep.budget \
            and dt < 600 and all(ep.certificates)
        if name == "commfree":
            exact = ep.budget == 2 * ep.meta["hash_bits"] + 1 and est.max_bits == ep.budget
            this &= exact
        ok &= this
        details.append("%s adv=%.4f ci_low=%.4f bits<=%d/%d %.0fs" % (
            name, est.estimate, est.ci_low, est.max_bits, ep.budget, dt))
    # tracked transcript law on a larger instance
    p, f = inst["random/AND"]
    q = construct_witness(p, f, params).q
    assert len(p.transcripts()) <= 16
    for name in ("general", "commfree"):
        ep = builders[name](p, q, f)
        est = estimate_advantage(ep, p.mu, f, TRIALS, SharedRandomness(MC_SEED + 1))
        tv = est.tracked_tv(p)
        this = tv <= 0.02 and est.budget_aborts == 0 and est.max_bits <= ep.budget
        if name == "commfree":
            this &= est.max_bits == ep.budget
        ok &= this
        details.append("%s tracked tv=%.4f (random/AND, %d transcripts)" % (
            name, tv, len(p.transcripts())))
    record(8, "compressor advantage, tracked laws, budgets", ok, "; ".join(details))


def test_criterion_09_smoothing():
    beta = Fraction(1, 8)
    params = CostParams()
    ok = True
    details = []
    for name, p, f in _nonzero_canonical():
        q = construct_witness(p, f, params).q
        sp = smooth(p, q, f, beta, I=params.I)
        base = external_cost(q, p, f, params).value
        after = sp.external_cost(params)
        this = sp.max_bias() <= beta and after <= base + 1
        small = smooth(p, q, f, beta, I=params.I, L=3)
        pp, qq = small.materialize()
        brute = external_cost(qq, pp, f, params).value
        this &= check_smooth(pp, beta) and brute == small.external_cost(params) \
            and brute <= base + 1
        ok &= this
        details.append("%s %.3f->%.3f" % (name, float(base), float(after)))
    worst = 0.0
    for L in (1, 3, 7, 15):
        for b in (Fraction(1, 8), Fraction(1, 16), Fraction(1, 4)):
            worst = max(worst, abs(float(block_decode_error(L, b)) - binomial_tail_oracle(L, b)))
    ok &= worst <= 1e-12
    details.append("decode error vs binomial tail: max diff %.2e" % worst)
    record(9, "smoothing: bias, external cost +1, decode error", ok, "; ".join(details))


def test_criterion_10_concentration():
    rng = random.Random(1010)
    beta = Fraction(1, 8)
    viol = 0
    n = 0
    worst = 0.0
    for k in range(50):
        C = 2 + k % 11
        p = random_smooth_protocol(rng, C, beta)
        assert check_smooth(p, beta)
        thresh = rng.choice([0.05, 0.1, 0.3, 1.0])
        for row in concentration_check(p, beta, thresh, [0.05, 0.1, 0.2, 0.4, 0.8]):
            n += 1
            viol += not row["pass"]
            if row["bound"] > 0:
                worst = max(worst, max(row["F"], row["F_A"], row["F_B"]) / row["bound"])
    record(10, "divergence concentration bound", viol == 0,
           "50 instances, %d rows, %d violations, max mass/bound %.3f" % (n, viol, worst))


def test_criterion_11_oracle():
    ub = uniform_bits_mu()
    a1x = optimal_advantage_oracle(ub, XOR(), 1)
    a2x = optimal_advantage_oracle(ub, XOR(), 2)
    a1a = optimal_advantage_oracle(ub, AND(), 1)
    ok = a1x == 0 and a2x == 1 and a1a == Fraction(1, 2)
    mono = []
    for f in (XOR(), AND()):
        rows, m, sanity = xor_experiment(f, ub, 2, 3)
        mono.append(m and all(s["ok"] for s in sanity))
    ok &= all(mono)
    record(11, "oracle values and monotone XOR table", ok,
           "adv(1,XOR)=%s adv(2,XOR)=%s adv(1,AND)=%s monotone=%s" % (a1x, a2x, a1a, mono))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
