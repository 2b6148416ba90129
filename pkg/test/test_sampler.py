from math import log, sqrt

import numpy as np
import pytest

from bnpre.msgpass import L_CLAMP, InferenceParams, MarginalSet, run_inference
from bnpre.netgen import EnsembleConfig, random_network
from bnpre.oracle import enumerate_preimages
from bnpre.sampler import (
    PreimageReport, collect_preimages, decode, encode, input_probs, sample_input, sample_inputs, spawn_seeds,
    uniform_report,
)
from test.utils import load

parametrize = pytest.mark.parametrize


def within(observed: float, p: float, n: int, sigmas: float = 4) -> bool:
    return abs(observed - p) <= sigmas * sqrt(p * (1 - p) / n)


def test_clamped_marginals_sample_deterministically():
    net = load('example16.bn')
    rng = np.random.default_rng(0)
    X = sample_inputs(MarginalSet.for_inputs(net, [ L_CLAMP ] * 3), net, 1000, rng)
    assert not X.any()
    X = sample_inputs(MarginalSet.for_inputs(net, [ -L_CLAMP ] * 3), net, 1000, rng)
    assert X.all()


def test_uniform_marginals_unbiased():
    net = load('example16.bn')
    n = 100_000
    X = sample_inputs(MarginalSet.uniform(net), net, n, np.random.default_rng(1))
    for freq in X.mean(axis=0):
        assert within(freq, .5, n)


def test_biased_marginals():
    net = load('and2.bn')
    m = MarginalSet.for_inputs(net, [ log(3), 0. ])
    assert input_probs(m, net).tolist() == pytest.approx([ .75, .5 ])
    n = 100_000
    X = sample_inputs(m, net, n, np.random.default_rng(2))
    assert within((X[:, 0] == 0).mean(), .75, n)
    assert within((X[:, 1] == 0).mean(), .5, n)
    assert sample_input(m, net, np.random.default_rng(2)) in { (0, 0), (0, 1), (1, 0), (1, 1) }


def test_xor_uniform():
    net = load('xor2.bn')
    report = uniform_report(net, (1,), 1000, seed=3)
    assert report.samples_drawn == 1000
    assert within(report.valid_rate, .5, 1000)
    assert set(report.unique_preimages) == { (1, 0), (0, 1) }
    assert report.unique_preimages == ((1, 0), (0, 1))
    assert report.solved


def test_unsatisfiable():
    report = uniform_report(load('const0.bn'), (1,), 500, seed=4)
    assert report == PreimageReport(500, 0, ())
    assert not report.solved
    assert report.valid_rate == 0


def test_and_guided():
    net = load('and2.bn')
    m = run_inference(net, (1,), InferenceParams(t_max=1))
    report = collect_preimages(net, (1,), m, 1000, seed=5)
    assert within(report.valid_rate, .5625, 1000)
    assert report.unique_preimages == ((1, 1),)


def test_reports_consistent():
    net = random_network(EnsembleConfig(n_total=40, n_in=8, n_out=16, depth=3, k_max=3, seed=6))
    rng = np.random.default_rng(6)
    for _ in range(10):
        y = net.evaluate(rng.integers(0, 2, size=net.N))
        m = run_inference(net, y, InferenceParams(t_max=6))
        report = collect_preimages(net, y, m, 300, seed=int(rng.integers(1 << 30)))
        assert report.unique_count <= report.valid_count <= report.samples_drawn == 300
        for x in report.unique_preimages:
            assert net.evaluate(x) == y
        keys = [ int.from_bytes(encode(x), 'little') for x in report.unique_preimages ]
        assert keys == sorted(set(keys))


@parametrize("streams", [ 1, 4 ])
def test_deterministic(streams):
    net = load('example16.bn')
    y = (0, 0, 1, 0, 0)
    m = run_inference(net, y)
    first = collect_preimages(net, y, m, 500, seed=7, streams=streams)
    assert first == collect_preimages(net, y, m, 500, seed=7, streams=streams)
    assert first.samples_drawn == 500


def test_spawn_seeds_pure():
    seed = np.random.SeedSequence(8)
    first = [ s.generate_state(2).tolist() for s in spawn_seeds(seed, 3) ]
    second = [ s.generate_state(2).tolist() for s in spawn_seeds(seed, 5) ]
    assert second[:3] == first
    assert len({ tuple(s) for s in second }) == 5


def test_uniform_rate_matches_preimage_fraction():
    net = random_network(EnsembleConfig(n_total=30, n_in=6, n_out=10, depth=3, k_max=3, seed=9))
    y = net.evaluate((1, 0, 1, 1, 0, 0))
    p = enumerate_preimages(net, y).cardinality / (1 << net.N)
    n = 20_000
    assert within(uniform_report(net, y, n, seed=9).valid_rate, p, n)


def test_merge():
    a = PreimageReport(10, 2, ((1, 0), (0, 1)))
    b = PreimageReport(5, 1, ((1, 1),))
    c = PreimageReport(7, 3, ((0, 1),))
    assert a.merge(b).merge(c) == a.merge(b.merge(c)) == PreimageReport(22, 6, ((1, 0), (0, 1), (1, 1)))
    assert a.merge(PreimageReport(0, 0, ())) == a


def test_encode_decode():
    x = (1, 0, 1, 1, 0, 0, 0, 0, 1, 1)
    assert decode(encode(np.array(x)), len(x)) == x


def test_invalid_sample_count():
    net = load('and2.bn')
    with pytest.raises(ValueError):
        collect_preimages(net, (1,), MarginalSet.uniform(net), 0)
