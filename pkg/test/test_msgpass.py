from math import log

import numpy as np
import pytest

from bnpre.msgpass import (
    L_CLAMP, FactorGraph, InferenceParams, MarginalSet, UndefinedDistributionError, function_to_variable,
    function_to_variable_all, hard_decision, iterate_inference, llr_to_probs, output_distribution, probs_to_llr,
    run_inference, similarity, variable_update,
)
from bnpre.netgen import EnsembleConfig, example_network, random_function_type_a, random_network, random_unary_forest
from bnpre.network import (
    AND2, NOT, WIRE, XOR2, BooleanFunction, LengthMismatchError, Network, bit_matrix, constant, eval_function,
)
from test.utils import load

parametrize = pytest.mark.parametrize


def test_llr_conversions():
    assert llr_to_probs(0) == (0.5, 0.5)
    p0, p1 = llr_to_probs(log(3))
    assert p0 == pytest.approx(.75)
    assert p1 == pytest.approx(.25)
    assert probs_to_llr(1, 0) == L_CLAMP
    assert probs_to_llr(0, 1) == -L_CLAMP
    assert probs_to_llr(.25, .75) == pytest.approx(log(1 / 3))
    assert probs_to_llr(1, 3) == pytest.approx(log(1 / 3))
    assert probs_to_llr(1, 0, l_clamp=10) == 10
    with pytest.raises(UndefinedDistributionError):
        probs_to_llr(0, 0)


def test_inference_params():
    assert InferenceParams() == InferenceParams(14, 50.)
    with pytest.raises(ValueError):
        InferenceParams(t_max=0)
    with pytest.raises(ValueError):
        InferenceParams(l_clamp=float('inf'))
    with pytest.raises(ValueError):
        InferenceParams(l_clamp=0)


def brute_force_messages(f: BooleanFunction, incoming, lambda_j) -> list[float]:
    """Direct sum over assignments of the function→variable rule, in the probability domain."""
    probs = [ llr_to_probs(L) for L in incoming ]
    pj = llr_to_probs(lambda_j)
    msgs = []
    for i in range(f.arity):
        mu = [ 0., 0. ]
        for row in bit_matrix(f.arity).tolist():
            weight = 1.
            for l, a in enumerate(row):
                if l != i:
                    weight *= probs[l][a]
            flipped = list(row)
            flipped[i] ^= 1
            out = eval_function(f, row)
            xi = .5 if out == eval_function(f, flipped) else pj[out]
            mu[row[i]] += weight * xi
        msgs.append(float(np.clip(log(mu[0]) - log(mu[1]), -L_CLAMP, L_CLAMP)))
    return msgs


def test_and_message():
    """AND with output forced to 1, other input uniform: ``p(x=0) = 1/4``."""
    assert function_to_variable(AND2, 0, [ 0. ], -L_CLAMP) == pytest.approx(log(1 / 3), abs=1e-6)
    assert function_to_variable(AND2, 1, [ 0. ], -L_CLAMP) == pytest.approx(log(1 / 3), abs=1e-6)


@parametrize("lambda_j", [ -L_CLAMP, L_CLAMP, 0., 2.5 ])
def test_xor_message(lambda_j):
    assert function_to_variable(XOR2, 0, [ 0. ], lambda_j) == pytest.approx(0, abs=1e-9)


def test_constant_message():
    for value in [ 0, 1 ]:
        msgs = function_to_variable_all(constant(3, value), [ 1., -2., 3. ], -L_CLAMP)
        assert np.allclose(msgs, 0, atol=1e-12)


def test_messages_match_brute_force():
    rng = np.random.default_rng(10)
    for k in [ 1, 2, 3, 4, 5 ]:
        for _ in range(5):
            f = random_function_type_a(k, rng)
            incoming = rng.uniform(-5, 5, size=k)
            lambda_j = float(rng.uniform(-5, 5))
            actual = function_to_variable_all(f, incoming, lambda_j)
            assert actual.tolist() == pytest.approx(brute_force_messages(f, incoming, lambda_j), abs=1e-9)


def test_message_ignores_own_input():
    rng = np.random.default_rng(11)
    f = random_function_type_a(4, rng)
    base = function_to_variable_all(f, [ .3, -1., 2., 0. ], 1.5)
    moved = function_to_variable_all(f, [ 9., -1., 2., 0. ], 1.5)
    assert moved[0] == pytest.approx(base[0], abs=1e-12)


def test_uniform_messages_vanish():
    rng = np.random.default_rng(12)
    for k in range(1, 7):
        f = random_function_type_a(k, rng)
        assert np.allclose(function_to_variable_all(f, np.zeros(k), 0.), 0, atol=1e-9)


def test_message_length_mismatch():
    with pytest.raises(LengthMismatchError):
        function_to_variable(AND2, 0, [ 0., 0. ], 0.)
    with pytest.raises(LengthMismatchError):
        function_to_variable_all(AND2, [ 0. ], 0.)
    with pytest.raises(ValueError):
        function_to_variable(AND2, 2, [ 0. ], 0.)


def test_output_distribution():
    assert output_distribution(AND2, [ 0., 0. ]) == pytest.approx(log(3))
    assert output_distribution(XOR2, [ 0., 0. ]) == pytest.approx(0, abs=1e-12)
    assert output_distribution(NOT, [ L_CLAMP ]) == pytest.approx(-L_CLAMP)
    assert output_distribution(WIRE, [ -2. ]) == pytest.approx(-2.)
    assert output_distribution(constant(2, 0), [ 1., 1. ]) == L_CLAMP
    assert output_distribution(constant(2, 1), [ 1., 1. ]) == -L_CLAMP


@parametrize(
    "prev,msgs,expected",
    [
        (0., [], 0.),
        (1., [ 2., -.5 ], 2.5),
        (49., [ 10. ], 50.),
        (-49., [ -10. ], -50.),
    ],
)
def test_variable_update(prev, msgs, expected):
    assert variable_update(prev, msgs) == pytest.approx(expected)


def test_and_network():
    m = run_inference(load('and2.bn'), (1,), InferenceParams(t_max=1))
    assert m.t == 1
    assert m[0] == pytest.approx(log(1 / 3), abs=1e-6)
    assert m[1] == pytest.approx(log(1 / 3), abs=1e-6)
    assert m[2] == -L_CLAMP
    assert hard_decision(m, load('and2.bn')) == (1, 1)


@parametrize("y", [ (0,), (1,) ])
@parametrize("t_max", [ 1, 3 ])
def test_xor_network(y, t_max):
    m = run_inference(load('xor2.bn'), y, InferenceParams(t_max=t_max))
    assert m.inputs(load('xor2.bn')).tolist() == pytest.approx([ 0, 0 ], abs=1e-9)


def not_chain(d: int) -> Network:
    return Network.build([ None ] + [ (NOT, [ i ]) for i in range(d) ], [ d ])


@parametrize("d", [ 1, 2, 3, 4, 5, 6 ])
def test_not_chain(d):
    net = not_chain(d)
    m = run_inference(net, (1,), InferenceParams(t_max=2 * d))
    x = hard_decision(m, net)
    assert x == ((d + 1) % 2,)
    assert net.evaluate(x) == (1,)
    assert abs(m[0]) > 10


def test_unary_chains_recover_unique_preimage():
    rng = np.random.default_rng(13)
    for _ in range(100):
        net = random_unary_forest(int(rng.integers(1, 5)), int(rng.integers(1, 9)), rng)
        params = InferenceParams(t_max=2 * net.depth)
        for y in bit_matrix(net.M).tolist():
            x = hard_decision(run_inference(net, y, params), net)
            assert net.evaluate(x) == tuple(y)


def test_unary_trees_recover_consistent_targets():
    rng = np.random.default_rng(14)
    for _ in range(50):
        net = random_unary_forest(int(rng.integers(1, 5)), int(rng.integers(1, 7)), rng, max_children=3)
        params = InferenceParams(t_max=2 * net.depth)
        for x in rng.integers(0, 2, size=(5, net.N)).tolist():
            y = net.evaluate(x)
            assert net.evaluate(hard_decision(run_inference(net, y, params), net)) == y


def test_clamping_and_bounds():
    net = random_network(EnsembleConfig(n_total=60, n_in=8, n_out=30, depth=3, k_max=4, seed=15))
    y = net.evaluate(np.random.default_rng(15).integers(0, 2, size=net.N))
    clamp = [ L_CLAMP if v == 0 else -L_CLAMP for v in y ]
    ts = []
    for m in iterate_inference(net, y, InferenceParams(t_max=8)):
        ts.append(m.t)
        assert [ m[o] for o in net.out_nodes ] == clamp
        assert np.all(np.isfinite(m.llrs))
        assert np.all(np.abs(m.llrs) <= L_CLAMP)
    assert ts == list(range(1, 9))


def test_marginals_read_only():
    m = run_inference(load('and2.bn'), (1,))
    with pytest.raises(ValueError):
        m.llrs[0] = 1.


def test_deterministic():
    net = random_network(EnsembleConfig(n_total=80, n_in=10, n_out=40, depth=4, k_max=5, seed=16))
    y = net.evaluate(np.random.default_rng(16).integers(0, 2, size=net.N))
    assert np.array_equal(run_inference(net, y).llrs, run_inference(net, y).llrs)


def test_batch_matches_single():
    net = random_network(EnsembleConfig(n_total=80, n_in=10, n_out=40, depth=4, k_max=5, seed=17))
    X = np.random.default_rng(17).integers(0, 2, size=(6, net.N), dtype=np.uint8)
    Y = net.evaluate_batch(X)
    params = InferenceParams(t_max=6)
    final = list(FactorGraph(net).iterate(Y, params))[-1]
    for y, L in zip(Y.tolist(), final):
        assert np.allclose(run_inference(net, y, params).llrs, L, atol=1e-12)


def test_dual_network_negates_marginals():
    """Duals of every gate, with the complemented target, mirror every LLR."""
    rng = np.random.default_rng(18)
    net = example_network(lambda k: random_function_type_a(k, rng))
    dual = Network.build(
        [ None if node.function is None else (node.function.dual(), node.inputs) for node in net.nodes ],
        net.out_nodes,
    )
    params = InferenceParams(t_max=6)
    for x in bit_matrix(net.N).tolist():
        y = net.evaluate(x)
        y_dual = tuple(1 - v for v in y)
        assert dual.evaluate([ 1 - v for v in x ]) == y_dual
        m = run_inference(net, y, params)
        m_dual = run_inference(dual, y_dual, params)
        assert np.allclose(m_dual.llrs, -m.llrs, atol=1e-9)


def test_uniform_target_free_network():
    """A network whose outputs ignore its inputs leaves every in-node at 0."""
    net = Network.build([ None, None, (constant(2, 1), [ 0, 1 ]) ], [ 2 ])
    m = run_inference(net, (1,))
    assert m.inputs(net).tolist() == pytest.approx([ 0, 0 ], abs=1e-12)


def test_hard_decision():
    net = load('and2.bn')
    assert hard_decision(MarginalSet.for_inputs(net, [ 3.2, -.1 ]), net) == (0, 1)
    assert hard_decision(MarginalSet.for_inputs(net, [ 0., 0. ]), net) == (0, 0)
    assert hard_decision(MarginalSet.uniform(net), net) == (0, 0)
    with pytest.raises(LengthMismatchError):
        MarginalSet.for_inputs(net, [ 1. ])


def test_similarity():
    assert similarity((1, 0, 1), (1, 0, 1)) == 1.
    assert similarity((1, 0, 1, 1), (0, 0, 1, 0)) == .5
    with pytest.raises(LengthMismatchError):
        similarity((1,), (1, 0))


def test_run_inference_length_mismatch():
    with pytest.raises(LengthMismatchError):
        run_inference(load('and2.bn'), (1, 0))
