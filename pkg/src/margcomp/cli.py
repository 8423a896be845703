"""Batch experiment runner.

One subcommand per task.  Every task loads an instance (a canonical name or
a JSON instance file), runs its pipeline, re-evaluates every certificate and
writes a deterministic JSON report.  Exit codes: 0 when all checks pass, 1
when some check fails (the report is still written), 2 for a bad
configuration or a malformed instance (no report).
"""

import argparse
import json
import os
import sys
from fractions import Fraction

from . import __version__
from .compressors import (InfiniteCost, NotSmooth, RoundMismatch, binomial_tail_oracle,
                          compress_bounded_round, compress_commfree, compress_external,
                          compress_general, estimate_advantage, smooth)
from .construction import DegenerateAdvantage, construct_witness
from .prob import Certificate, as_fraction, default_mode, frac_str
from .protocol import (AND, CONST, XOR, CapExceeded, InstanceError, NotBinaryRounds,
                       ShapeMismatch, canonical_instances, check_smooth, is_product, pad_rounds,
                       optimal_advantage_oracle, read_instance, send_x, tensor_mu,
                       tensor_protocol, two_copy_instances, uniform_bits_mu, xor_combine, xor_lift,
                       zero_comm)
from .rectangular import CostParams, RectDist, external_cost, marginal_cost, witness_search
from .samplers import SharedRandomness
from .sets import build_consequence_sets, check_expectation_bounds
from .subadditivity import (EmptyAfterPruning, IdentityViolation, build_children,
                            nonzero_advantage_witness, split)

COMPRESSORS = ("general", "external", "rounds", "commfree")
TASKS = ("verify-identities", "witness", "construct", "subadd", "smooth", "compress",
         "xor-experiment", "oracle")
STOCHASTIC = ("compress",)
TWO_COPY_TASKS = ("verify-identities", "subadd")
TV_TRIALS = 100000
FUNCTIONS = {"AND": AND, "XOR": XOR, "CONST": CONST}


class ConfigError(ValueError):
    pass


def named_instances():
    """Every instance reachable by name: the canonical set, the two-copy set, extras."""
    out = {name: (p, f, None) for name, (p, f) in canonical_instances().items()}
    for name, (p, f, g) in two_copy_instances().items():
        out[name] = (p, f, g)
    out["P0/XOR"] = (zero_comm(), XOR(), None)
    out["send-x/XOR"] = (send_x(), XOR(), None)
    return out


# ---------------------------------------------------------------------------
# configuration


class ExperimentConfig:
    def __init__(self, task, instance, params, seed=None, trials=10000, report=None,
                 function=None, compressor=None, rounds=None, C=1, n_max=2, C_max=3,
                 block=None):
        self.task = task
        self.instance = instance
        self.params = params
        self.seed = seed
        self.trials = trials
        self.report = report
        self.function = function
        self.compressor = compressor
        self.rounds = rounds
        self.C = C
        self.n_max = n_max
        self.C_max = C_max
        self.block = block
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError("unknown task %r" % self.task)
        if self.task == "compress" and self.compressor not in COMPRESSORS:
            raise ConfigError("compress needs one of %s" % ", ".join(COMPRESSORS))
        if self.task in STOCHASTIC and self.seed is None:
            raise ConfigError("--seed is required for %s" % self.task)
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.trials < 1000:
            raise ConfigError("trials must be at least 1000")
        pr = self.params
        if pr.K < 0:
            raise ConfigError("K must be non-negative")
        if not 0 < pr.beta <= Fraction(1, 4):
            raise ConfigError("beta must lie in (0, 1/4]")
        if not 0 < pr.eps <= Fraction(1, 4):
            raise ConfigError("eps must lie in (0, 1/4]")
        if self.C < 0 or self.C_max < 0 or self.n_max < 1:
            raise ConfigError("budgets must be non-negative")
        if self.block is not None and (self.block < 1 or self.block % 2 == 0):
            raise ConfigError("block length must be a positive odd integer")
        if self.function is not None and self.function not in FUNCTIONS:
            raise ConfigError("function must be one of %s" % ", ".join(FUNCTIONS))

    def record(self):
        r = {"task": self.task, "instance": self.instance, "params": self.params.record(),
             "trials": self.trials}
        if self.compressor:
            r["compressor"] = self.compressor
        return r


def load(cfg):
    """(protocol, f, g) for the configured instance; g only for two-copy instances."""
    names = named_instances()
    if cfg.instance in names:
        p, f, g = names[cfg.instance]
    else:
        if not os.path.exists(cfg.instance):
            raise InstanceError("no instance named or stored at %r" % cfg.instance)
        p, f = read_instance(cfg.instance)
        g = None
    if cfg.function is not None:
        f = FUNCTIONS[cfg.function](p.X, p.Y) if g is None else f
    if f is None:
        raise InstanceError("instance has no function; pass --function")
    if g is not None and cfg.task not in TWO_COPY_TASKS:
        f, g = xor_combine(f, g), None
    return p, f, g


# ---------------------------------------------------------------------------
# tasks


def _identity_certs(ids, prefix):
    out = []
    for k, (holds, n) in sorted(ids.items()):
        out.append(Certificate("%s.%s" % (prefix, k), Fraction(int(bool(holds))), "==",
                               Fraction(1), "exact identity", note="%d points" % n))
    return out


def _two_copy(p, f, g):
    if g is not None:
        return p, f, g
    if p.C == 0:
        p = pad_rounds(p, 1)      # the split needs a first message to carry the other copy
    pp = tensor_protocol(p, p, name="%s x2" % (p.name or "p"))
    return pp, f, f


def task_verify_identities(cfg, p, f, g):
    pp, f1, f2 = _two_copy(p, f, g)
    certs = []
    witnesses = [("q=p", RectDist.from_protocol(pp))]
    try:
        witnesses.append(("q=p|adv!=0", nonzero_advantage_witness(pp, xor_combine(f1, f2))))
    except ValueError:
        pass
    for label, q in witnesses:
        cp = build_children(pp, q, f1, f2)
        certs.extend(_identity_certs(cp.identities, "identities[%s]" % label))
    return certs, {"two_copy": pp.name, "witnesses": [w for w, _ in witnesses]}


def task_witness(cfg, p, f, g):
    certs = []
    res = {}
    for kind in ("marginal", "external"):
        q, rep, how = witness_search(p, f, cfg.params, kind=kind)
        res[kind] = {"candidate": how, "cost": rep.record()}
        if kind == "marginal":
            qm = q
    if is_product(p.mu):
        mc = marginal_cost(qm, p, f, cfg.params).value
        ec = external_cost(qm, p, f, cfg.params).value
        certs.append(Certificate("witness.product_costs_agree", ec, "==", mc,
                                 "external cost equals marginal cost on product inputs"))
    return certs, res


def _witness(p, f, params):
    tr = construct_witness(p, f, params)
    return tr


def task_construct(cfg, p, f, g):
    tr = _witness(p, f, cfg.params)
    certs = list(tr.certificates)
    cs = build_consequence_sets(tr.q, p, f, cfg.params)
    certs.extend(cs.certificates)
    certs.extend(check_expectation_bounds(tr.q, p, f, cfg.params))
    res = tr.record()
    res.pop("certificates")
    res["consequence_sets"] = cs.record()
    res["consequence_sets"].pop("certificates")
    return certs, res


def task_subadd(cfg, p, f, g):
    pp, f1, f2 = _two_copy(p, f, g)
    try:
        q = nonzero_advantage_witness(pp, xor_combine(f1, f2))
    except ValueError as e:
        raise DegenerateAdvantage(str(e))
    cp = build_children(pp, q, f1, f2)
    certs = _identity_certs(cp.identities, "identities")
    split(cp, cfg.params)
    certs.extend(cp.certificates)
    res = cp.record()
    res.pop("certificates")
    return certs, res


def task_smooth(cfg, p, f, g):
    pr = cfg.params
    tr = _witness(p, f, pr)
    sp = smooth(p, tr.q, f, pr.beta, I=pr.I, L=cfg.block)
    certs = [sp.smooth_certificate(), sp.cost_certificate(pr)]
    err = sp.decode_error()
    oracle = binomial_tail_oracle(sp.L, pr.beta)
    certs.append(Certificate("smooth.decode_error", Fraction(abs(float(err) - oracle)), "<=",
                             Fraction(1, 10 ** 12),
                             "block decode error against a float binomial tail"))
    res = {"L": sp.L, "C_prime": sp.C_prime, "p_majority": frac_str(sp.p_maj),
           "decode_error": frac_str(err), "max_bias": frac_str(sp.max_bias()),
           "external_cost_before": float(external_cost(tr.q, p, f, pr).value),
           "external_cost_after": float(sp.external_cost(pr))}
    # tabulate a short-block version and compare the structural cost with brute force
    small = smooth(p, tr.q, f, pr.beta, I=pr.I, L=3)
    try:
        pp, qq = small.materialize()
    except ValueError:
        pp = None
    if pp is not None:
        brute = external_cost(qq, pp, f, pr).value
        certs.append(Certificate("smooth.structural_cost", small.external_cost(pr), "==", brute,
                                 "closed-form encoded cost equals enumeration, block length 3"))
        certs.append(Certificate("smooth.tabulated_smooth", Fraction(int(check_smooth(pp, pr.beta))),
                                 "==", Fraction(1), "tabulated encoding is beta-smooth"))
        res["tabulated_C"] = pp.C
    return certs, res


def build_compressor(name, p, f, q, params, rounds=None):
    if name == "general":
        return compress_general(p, q, f, params, eps=min(params.eps, Fraction(1, 2 ** 20)))
    if name == "external":
        return compress_external(p, q, f, params, eps=min(params.eps, Fraction(1, 2 ** 20)))
    if name == "rounds":
        return compress_bounded_round(p, q, f, p.C if rounds is None else rounds, params)
    return compress_commfree(p, q, f, params)


def task_compress(cfg, p, f, g):
    pr = cfg.params
    tr = _witness(p, f, pr)
    ep = build_compressor(cfg.compressor, p, f, tr.q, pr, cfg.rounds)
    sr = SharedRandomness(cfg.seed)
    est = estimate_advantage(ep, p.mu, f, cfg.trials, sr, instance=cfg.instance, seed=cfg.seed)
    certs = list(ep.certificates)
    certs.append(Certificate("compress.ci_low_positive", Fraction(est.ci_low), ">", Fraction(0),
                             "95% lower advantage bound is positive"))
    certs.append(Certificate("compress.within_budget", Fraction(est.max_bits), "<=",
                             Fraction(ep.budget), "no run exceeds the declared budget"))
    certs.append(Certificate("compress.budget_aborts", Fraction(est.budget_aborts), "==",
                             Fraction(0), "the ledger never refused a message"))
    res = {"estimate": est.details(), "protocol": ep.record()}
    res["protocol"].pop("certificates")
    if cfg.compressor in ("general", "commfree"):
        tv = est.tracked_tv(p)
        res["tracked_tv"] = tv
        if cfg.trials >= TV_TRIALS and len(p.transcripts()) <= 16:
            certs.append(Certificate("compress.tracked_tv", Fraction(tv), "<=", Fraction(1, 50),
                                     "tracked transcript law matches p"))
    if cfg.compressor == "commfree":
        certs.append(Certificate("compress.exact_length", Fraction(est.max_bits), "==",
                                 Fraction(ep.budget), "every run sends exactly 2k + 1 bits"))
    return certs, res


def xor_experiment(f, mu, n_max=2, C_max=3):
    """Oracle advantage of f^{xor n} under mu^n for n <= n_max and C <= C_max.

    Returns (rows, monotone, sanity) where monotone says that at every C
    the advantage does not grow with n, and sanity is the two-bit XOR row.
    """
    rows = []
    table = {}
    for n in range(1, n_max + 1):
        fn = xor_lift(f, n) if n > 1 else f
        mun = tensor_mu(mu, n) if n > 1 else mu
        for C in range(0, C_max + 1):
            v = optimal_advantage_oracle(mun, fn, C)
            table[(n, C)] = v
            rows.append({"n": n, "C": C, "adv": frac_str(v)})
    mono = all(table[(n + 1, C)] <= table[(n, C)]
               for n in range(1, n_max) for C in range(C_max + 1))
    sanity = []
    ub = uniform_bits_mu()
    for n in range(1, min(n_max, 2) + 1):
        xn = xor_lift(XOR(), n) if n > 1 else XOR()
        v = optimal_advantage_oracle(tensor_mu(ub, n) if n > 1 else ub, xn, 2)
        sanity.append({"n": n, "C": 2, "adv": frac_str(v), "ok": v == 1})
    return rows, mono, sanity


def task_xor(cfg, p, f, g):
    rows, mono, sanity = xor_experiment(f, p.mu, cfg.n_max, cfg.C_max)
    certs = [Certificate("xor.monotone", Fraction(int(mono)), "==", Fraction(1),
                         "oracle advantage is nonincreasing in n at fixed C")]
    for s in sanity:
        certs.append(Certificate("xor.two_bits_n%d" % s["n"], as_fraction(s["adv"]), "==",
                                 Fraction(1), "two bits compute the XOR of parities"))
    return certs, {"table": rows, "sanity": sanity}


def task_oracle(cfg, p, f, g):
    v = optimal_advantage_oracle(p.mu, f, cfg.C)
    return [], {"C": cfg.C, "value": frac_str(v)}


RUNNERS = {"verify-identities": task_verify_identities, "witness": task_witness,
           "construct": task_construct, "subadd": task_subadd, "smooth": task_smooth,
           "compress": task_compress, "xor-experiment": task_xor, "oracle": task_oracle}

PRECONDITION_ERRORS = (InstanceError, ShapeMismatch, CapExceeded, NotBinaryRounds, NotSmooth,
                       RoundMismatch, InfiniteCost, DegenerateAdvantage, EmptyAfterPruning)


def _json_default(v):
    if isinstance(v, Fraction):
        return frac_str(v)
    if isinstance(v, (set, frozenset, tuple)):
        return sorted(v, key=repr)
    return repr(v)


def run(cfg):
    """(report dict, exit code).  Raises ConfigError / precondition errors."""
    mode = default_mode()
    p, f, g = load(cfg)
    try:
        certs, result = RUNNERS[cfg.task](cfg, p, f, g)
    except IdentityViolation as e:
        certs = [Certificate("identities", Fraction(0), "==", Fraction(1), "exact identity",
                             note=str(e))]
        result = {}
    checks = [c.record() for c in certs]
    ok = all(c["pass"] for c in checks)
    report = {"config": cfg.record(),
              "environment": {"version": __version__, "seed": cfg.seed, "numeric_mode": mode},
              "checks": checks, "result": result, "pass": ok}
    return report, (0 if ok else 1)


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=1, default=_json_default) + "\n"


# ---------------------------------------------------------------------------
# command line


def _frac(s):
    try:
        return as_fraction(s)
    except (ValueError, ZeroDivisionError, TypeError):
        raise argparse.ArgumentTypeError("not a rational number: %r" % s)


def _common(sp):
    sp.add_argument("--instance", required=True,
                    help="canonical instance name or path to an instance JSON file")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--I", type=_frac, default=Fraction(1))
    sp.add_argument("--K", type=_frac, default=Fraction(3))
    sp.add_argument("--beta", type=_frac, default=Fraction(1, 8))
    sp.add_argument("--eps", type=_frac, default=Fraction(1, 64))
    sp.add_argument("--report", default=None, help="write the report here (default stdout)")
    sp.add_argument("--function", default=None, help="override: AND, XOR or CONST")


def parser():
    ap = argparse.ArgumentParser(prog="margcomp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="task", required=True)
    for t in TASKS:
        sp = sub.add_parser(t)
        if t == "compress":
            sp.add_argument("compressor", choices=COMPRESSORS)
            sp.add_argument("--rounds", type=int, default=None)
        if t == "oracle":
            sp.add_argument("--C", type=int, default=1)
        if t == "xor-experiment":
            sp.add_argument("--n-max", type=int, default=2)
            sp.add_argument("--C-max", type=int, default=3)
        if t == "smooth":
            sp.add_argument("--block", type=int, default=None, help="odd block length")
        _common(sp)
    bp = sub.add_parser("batch", help="run a JSON list of configurations")
    bp.add_argument("configs")
    return ap


def config_from_args(a):
    try:
        params = CostParams(I=a.I, K=a.K, beta=a.beta, eps=a.eps)
    except ValueError as e:
        raise ConfigError(str(e))
    return ExperimentConfig(a.task, a.instance, params, seed=a.seed, trials=a.trials,
                            report=a.report, function=a.function,
                            compressor=getattr(a, "compressor", None),
                            rounds=getattr(a, "rounds", None), C=getattr(a, "C", 1),
                            n_max=getattr(a, "n_max", 2), C_max=getattr(a, "C_max", 3),
                            block=getattr(a, "block", None))


def _execute(cfg, out=None):
    report, code = run(cfg)
    out = sys.stdout if out is None else out
    text = dumps(report)
    if cfg.report:
        with open(cfg.report, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    return code


def _batch(path):
    """Sequential run of a list of argument vectors; exit code is the worst one."""
    try:
        with open(path) as fh:
            items = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("cannot read batch file: %s" % e)
    if not isinstance(items, list):
        raise ConfigError("batch file must hold a list of argument lists")
    worst = 0
    for argv in items:
        worst = max(worst, main([str(v) for v in argv]))
    return worst


def main(argv=None):
    ap = parser()
    a = ap.parse_args(argv)
    try:
        if a.task == "batch":
            return _batch(a.configs)
        cfg = config_from_args(a)
        return _execute(cfg)
    except (ConfigError,) + PRECONDITION_ERRORS as e:
        sys.stderr.write("margcomp: %s\n" % e)
        return 2
    except ValueError as e:
        if str(e).startswith("MARGCOMP_NUMERIC"):
            sys.stderr.write("margcomp: %s\n" % e)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
