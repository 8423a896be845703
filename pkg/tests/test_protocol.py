import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from margcomp.protocol import (AND, CONST, XOR, CapExceeded, InstanceError, ShapeMismatch,
                               advantage_by_m, advantage_profile, all_priors, canonical_instances,
                               check_smooth, divergence_costs, dump_instance, is_frontier,
                               is_product, load_instance, optimal_advantage_oracle,
                               pad_rounds, prior_cond, random_protocol, random_smooth_protocol,
                               read_instance, send_x, tensor_mu, tensor_protocol,
                               threshold_frontier, uniform_bits_mu, write_instance, xor_combine,
                               xor_lift, zero_comm)

seeds = st.integers(min_value=0, max_value=10 ** 6)


@given(seeds)
def test_random_protocol_table_is_a_distribution(seed):
    p = random_protocol(random.Random(seed), sizes=(2, 2, 3))
    t = p.table()
    assert sum(t.values()) == 1
    for (x, y, m), v in t.items():
        assert p.joint(x, y, m) == v


@given(seeds)
def test_instance_roundtrip(seed):
    p = random_protocol(random.Random(seed), sizes=(1, 2, 2))
    q, f = load_instance(json.loads(json.dumps(dump_instance(p, AND()))))
    assert q.table() == p.table()
    assert f.table == AND().table


def test_instance_file_errors(tmp_path):
    path = tmp_path / "i.json"
    p, f = canonical_instances()["send-x/AND"]
    write_instance(str(path), p, f)
    assert read_instance(str(path))[0].table() == p.table()
    path.write_text("[1, 2]")
    with pytest.raises(InstanceError):
        read_instance(str(path))
    path.write_text('{"schema": 1, "X": [0]}')
    with pytest.raises(InstanceError):
        read_instance(str(path))
    with pytest.raises(InstanceError):
        read_instance(str(tmp_path / "missing.json"))


def test_send_x_and_zero_comm():
    p = send_x()
    assert p.C == 1 and p.comm_bits() == 1
    assert all(m[1] == x for (x, y, m) in p.table())
    assert zero_comm().C == 0
    with pytest.raises(ShapeMismatch):
        p.cond(1, 0, (1,))


def test_pad_rounds_keeps_table():
    p = send_x()
    q = pad_rounds(p, 3)
    assert q.C == 3
    assert {(x, y, m[:2]): v for (x, y, m), v in q.table().items()} == p.table()


def test_tensor_of_independent_copies():
    p = tensor_protocol(send_x(), send_x())
    t = p.table()
    assert len(t) == 16 and sum(t.values()) == 1
    assert is_product(tensor_mu(uniform_bits_mu(), 2))


def test_xor_lift_and_combine():
    f2 = xor_lift(XOR(), 2)
    assert f2((0, 1), (1, 1)) == 1
    g = xor_combine(AND(), XOR())
    assert g((1, 0), (1, 1)) == 0
    with pytest.raises(CapExceeded):
        xor_lift(AND(), 5)


def test_advantage_by_m_send_x():
    p = send_x()
    adv = advantage_by_m(p.table(), AND())
    assert adv[(0, 0)] == (Fraction(1, 2), Fraction(1))
    assert adv[(0, 1)] == (Fraction(1, 2), Fraction(0))
    prof, avg = advantage_profile(p, AND())
    assert avg == Fraction(1, 2)


def test_oracle_values():
    ub = uniform_bits_mu()
    assert optimal_advantage_oracle(ub, XOR(), 1) == 0
    assert optimal_advantage_oracle(ub, XOR(), 2) == 1
    assert optimal_advantage_oracle(ub, AND(), 0) == Fraction(1, 2)
    assert optimal_advantage_oracle(ub, AND(), 1) == Fraction(1, 2)
    assert optimal_advantage_oracle(ub, AND(), 2) == 1
    assert optimal_advantage_oracle(ub, CONST(), 0) == 1
    with pytest.raises(CapExceeded):
        optimal_advantage_oracle(ub, AND(), 4)


@given(seeds)
def test_priors_are_distributions(seed):
    p = random_protocol(random.Random(seed), sizes=(1, 2, 2, 2))
    for pre, d in all_priors(p).items():
        assert sum(d.values()) == 1
        assert d == prior_cond(p, len(pre), pre)


@given(seeds)
def test_smooth_generator_is_smooth(seed):
    p = random_smooth_protocol(random.Random(seed), 4, Fraction(1, 8))
    assert check_smooth(p, Fraction(1, 8))


def test_divergence_costs_monotone_and_frontier():
    p = random_smooth_protocol(random.Random(3), 5, Fraction(1, 8))
    pri = all_priors(p)
    for (x, y, m) in list(p.table())[:10]:
        led = divergence_costs(p, x, y, m, pri)
        js = sorted(led.d)
        assert all(led.d[a] <= led.d[b] + 1e-15 for a, b in zip(js, js[1:]))
    stop = threshold_frontier(p, 0, 0, 0.05, pri)
    assert is_frontier(stop, list(stop))
