"""Draw candidate inputs from a product of marginals and keep those that reproduce the target output."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from bnpre.msgpass import MarginalSet
from bnpre.network import Network, check_bits

N_SAMPLES = 1000

Preimage = tuple[int, ...]
Seed = int | np.random.SeedSequence


def make_rng(seed: Seed | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed: Seed, count: int) -> list[np.random.SeedSequence]:
    """Independent child streams; child ``i`` depends only on ``seed`` and ``i``."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [
        np.random.SeedSequence(seq.entropy, spawn_key=(*seq.spawn_key, i), pool_size=seq.pool_size)
        for i in range(count)
    ]


def encode(x: np.ndarray) -> bytes:
    """Canonical bytes of an input vector (bit ``i`` of the little-endian integer is ``x_i``)."""
    return np.packbits(np.asarray(x, dtype=np.uint8), bitorder='little').tobytes()


def decode(key: bytes, N: int) -> Preimage:
    bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8), bitorder='little')[:N]
    return tuple(int(b) for b in bits)


def canonical_order(key: bytes) -> int:
    return int.from_bytes(key, 'little')


@dataclass(frozen=True)
class PreimageReport:
    samples_drawn: int
    valid_count: int
    unique_preimages: tuple[Preimage, ...]

    @property
    def solved(self) -> bool:
        return bool(self.unique_preimages)

    @property
    def unique_count(self) -> int:
        return len(self.unique_preimages)

    @property
    def valid_rate(self) -> float:
        return self.valid_count / self.samples_drawn if self.samples_drawn else 0.

    def merge(self, other: PreimageReport) -> PreimageReport:
        N = len((self.unique_preimages or other.unique_preimages or ((),))[0])
        keys = { encode(x) for x in self.unique_preimages } | { encode(x) for x in other.unique_preimages }
        return PreimageReport(
            samples_drawn=self.samples_drawn + other.samples_drawn,
            valid_count=self.valid_count + other.valid_count,
            unique_preimages=tuple(decode(k, N) for k in sorted(keys, key=canonical_order)),
        )


def input_probs(m: MarginalSet, net: Network) -> np.ndarray:
    """``p(x_i=0)`` per in-node."""
    return expit(m.inputs(net))


def sample_inputs(m: MarginalSet, net: Network, count: int, rng: np.random.Generator) -> np.ndarray:
    """``(count, N)`` independent draws from the product of the in-node marginals."""
    p0 = input_probs(m, net)
    return (rng.random((count, net.N)) >= p0).astype(np.uint8)


def sample_input(m: MarginalSet, net: Network, rng: np.random.Generator) -> Preimage:
    return tuple(int(b) for b in sample_inputs(m, net, 1, rng)[0])


def _collect(net: Network, y: np.ndarray, m: MarginalSet, count: int, rng: np.random.Generator) -> PreimageReport:
    X = sample_inputs(m, net, count, rng)
    valid = np.all(net.evaluate_batch(X) == y, axis=1)
    keys = { encode(x) for x in X[valid] }
    return PreimageReport(
        samples_drawn=count,
        valid_count=int(valid.sum()),
        unique_preimages=tuple(decode(k, net.N) for k in sorted(keys, key=canonical_order)),
    )


def collect_preimages(
    net: Network,
    y: Sequence[int],
    m: MarginalSet,
    n_samples: int = N_SAMPLES,
    seed: Seed | np.random.Generator = 0,
    streams: int = 1,
) -> PreimageReport:
    """Draw ``n_samples`` inputs, keeping the ones with ``f(x) = y``.

    With ``streams > 1`` (and an integer or ``SeedSequence`` seed), draws are split over independent child
    streams whose reports merge in stream order; the result depends on ``(seed, streams)`` only.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be ≥ 1, got {n_samples}")
    y = np.asarray(check_bits(y, net.M, 'output vector'), dtype=np.uint8)
    if streams <= 1 or isinstance(seed, np.random.Generator):
        return _collect(net, y, m, n_samples, make_rng(seed))
    counts = [ n_samples // streams + (i < n_samples % streams) for i in range(streams) ]
    report = PreimageReport(0, 0, ())
    for count, child in zip(counts, spawn_seeds(seed, streams)):
        if count:
            report = report.merge(_collect(net, y, m, count, make_rng(child)))
    return report


def uniform_report(net: Network, y: Sequence[int], n_samples: int = N_SAMPLES, seed: Optional[Seed] = 0) -> PreimageReport:
    """Baseline: sample inputs uniformly, ignoring any marginal estimate."""
    return collect_preimages(net, y, MarginalSet.uniform(net), n_samples, seed)
