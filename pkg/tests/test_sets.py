import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from margcomp.protocol import AND, XOR, random_protocol, tensor_protocol, send_x
from margcomp.rectangular import RectDist, RectSet
from margcomp.sets import (G_as_predicate, GFactorization, _obj_cmp, all_rectsets,
                           average_advantage, build_G_per_m, check_trim, maximize_R,
                           maximize_R_pareto, objective, rect_objective, trim,
                           trim_certificates, verify_adv_preserving)

seeds = st.integers(min_value=0, max_value=10 ** 6)


def _pair(seed, sizes=(2, 2)):
    rng = random.Random(seed)
    p = random_protocol(rng, sizes=sizes, denom=4)
    q = random_protocol(rng, sizes=sizes, denom=4, mu=p.mu)
    return q.table(), p.table()


@given(seeds, st.sampled_from([Fraction(1, 10), Fraction(1, 6), Fraction(1, 4)]))
def test_trim_guarantees(seed, kappa):
    a, b = _pair(seed)
    res = trim(a, b, kappa)
    assert check_trim(a, b, res)
    assert all(trim_certificates(a, b, res))


def test_trim_rejects_bad_kappa():
    a, b = _pair(1)
    with pytest.raises(ValueError):
        trim(a, b, Fraction(1, 3))
    with pytest.raises(ValueError):
        trim(a, b, 0)


def test_trim_on_identical_tables_keeps_everything():
    a, _ = _pair(5)
    res = trim(a, a, Fraction(1, 100))
    assert res.mass == 1
    assert res.deleted_log == [] or all(w == 0 for _, _, w in res.deleted_log)


def test_obj_cmp_agrees_with_floats():
    rng = random.Random(0)
    for _ in range(300):
        W1, W2 = Fraction(rng.randint(1, 20), 20), Fraction(rng.randint(1, 20), 20)
        S1, S2 = W1 * Fraction(rng.randint(0, 10), 10), W2 * Fraction(rng.randint(0, 10), 10)
        d = Fraction(rng.randint(1, 9), 10)
        o1 = float(W1) ** float(d - 1) * float(S1)
        o2 = float(W2) ** float(d - 1) * float(S2)
        c = _obj_cmp(W1, S1, W2, S2, d)
        if abs(o1 - o2) > 1e-9:
            assert c == (1 if o1 > o2 else -1)
        if S1 and W1:
            assert abs(float(objective(W1, S1, d)) - __import__("math").log2(o1)) < 1e-9


@given(seeds, st.sampled_from([Fraction(1, 2), Fraction(1, 8), Fraction(9, 10)]))
def test_maximize_R_hull_equals_pareto(seed, delta):
    v, _ = _pair(seed)
    R1, W1, S1 = maximize_R(v, AND(), delta)
    R2, W2, S2 = maximize_R_pareto(v, AND(), delta)
    assert _obj_cmp(W1, S1, W2, S2, delta) == 0
    assert rect_objective(v, AND(), R1, delta) == (W1, S1)


@pytest.mark.parametrize("seed", range(6))
def test_maximize_R_beats_every_rectset(seed):
    rng = random.Random(seed)
    p = random_protocol(rng, sizes=(1, 2), denom=4)
    v = p.table()
    delta = Fraction(1, 2)
    _, W, S = maximize_R(v, XOR(), delta)
    for R in all_rectsets(v):
        W2, S2 = rect_objective(v, XOR(), R, delta)
        assert _obj_cmp(W, S, W2, S2, delta) >= 0


def test_average_advantage_full_set():
    p = send_x()
    W, adv = average_advantage(p.table(), AND())
    assert W == 1
    assert adv == Fraction(1, 2)


@given(seeds)
def test_adv_preserving_certificate(seed):
    v, _ = _pair(seed)
    _, adv0 = average_advantage(v, AND())
    if adv0 == 0:
        return
    delta = Fraction(1, 4)
    R, _, _ = maximize_R(v, AND(), delta)
    assert verify_adv_preserving(v, AND(), delta, R, R)


@given(seeds)
def test_G_pointwise_certificates(seed):
    rng = random.Random(seed)
    p1 = random_protocol(rng, sizes=(2,), denom=4)
    p2 = random_protocol(rng, sizes=(2,), denom=4)
    q = tensor_protocol(p1, p2)
    G, certs = build_G_per_m(q, AND(), XOR(), Fraction(1, 2))
    assert all(certs)
    inG = G_as_predicate(G)
    for key in q.table():
        assert inG(key) == ((key[0][0], key[1][1]) in G[key[2]])


@given(seeds)
def test_g_factorization_of_rectangular_q(seed):
    rng = random.Random(seed)
    p = random_protocol(rng, sizes=(2, 2), denom=4)
    pt = p.table()
    sl = {m: ({x for x in p.X if rng.random() < 0.8} or set(p.X),
              {y for y in p.Y if rng.random() < 0.8} or set(p.Y))
          for m in {k[2] for k in pt}}
    R = RectSet(sl)
    if R.mass(pt) == 0:
        return
    from margcomp.construction import restrict_rect
    q = restrict_rect(p, R)
    gf = GFactorization(q, p)
    assert gf.check(q, p)
