"""Exhaustive preimage enumeration and exact input marginals, for checking estimates on small networks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from bnpre.msgpass import MarginalSet
from bnpre.network import LengthMismatchError, Network, check_bits

ORACLE_MAX_N = 24
CHUNK = 1 << 16


class OracleLimitError(ValueError):
    def __init__(self, N: int, limit: int, n: int):
        self.N = N
        self.limit = limit
        self.cost = (1 << N) * n
        super().__init__(f"Refusing to enumerate 2^{N} inputs (limit 2^{limit}): ~{self.cost:,} gate evaluations")


class UndefinedMarginalsError(ValueError):
    pass


@dataclass(frozen=True)
class ExactPreimageSet:
    y: tuple[int, ...]
    members: tuple[tuple[int, ...], ...]

    @property
    def cardinality(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ExactMarginals:
    """``p(x_i=0)`` per in-node over the uniform distribution on a preimage set; ``None`` when it is empty."""
    p0: Optional[tuple[float, ...]]

    @property
    def defined(self) -> bool:
        return self.p0 is not None


def input_matrix(start: int, stop: int, N: int) -> np.ndarray:
    """Rows are the inputs encoded by ``start..stop-1`` (bit ``i`` is ``x_i``)."""
    m = np.arange(start, stop, dtype=np.int64)
    return ((m[:, None] >> np.arange(N)) & 1).astype(np.uint8)


def enumerate_preimages(net: Network, y: Sequence[int], limit_N: int = ORACLE_MAX_N) -> ExactPreimageSet:
    """All ``x`` with ``f(x) = y``, in ascending integer encoding."""
    y = check_bits(y, net.M, 'output vector')
    if net.N > limit_N:
        raise OracleLimitError(net.N, limit_N, net.n)
    target = np.asarray(y, dtype=np.uint8)
    members = []
    total = 1 << net.N
    for start in range(0, total, CHUNK):
        X = input_matrix(start, min(start + CHUNK, total), net.N)
        match = np.all(net.evaluate_batch(X) == target, axis=1)
        members.extend(tuple(int(b) for b in x) for x in X[match])
    return ExactPreimageSet(y, tuple(members))


def preimage_sizes(net: Network, limit_N: int = ORACLE_MAX_N) -> dict[tuple[int, ...], int]:
    """``|Ω_y|`` for every reachable ``y``."""
    if net.N > limit_N:
        raise OracleLimitError(net.N, limit_N, net.n)
    sizes: dict[tuple[int, ...], int] = {}
    total = 1 << net.N
    for start in range(0, total, CHUNK):
        Y = net.evaluate_batch(input_matrix(start, min(start + CHUNK, total), net.N))
        rows, counts = np.unique(Y, axis=0, return_counts=True)
        for row, count in zip(rows, counts):
            key = tuple(int(b) for b in row)
            sizes[key] = sizes.get(key, 0) + int(count)
    return sizes


def exact_marginals(s: ExactPreimageSet, N: int) -> ExactMarginals:
    if not s.cardinality:
        raise UndefinedMarginalsError(f"No preimages of {s.y}; marginals are undefined")
    members = np.asarray(s.members, dtype=np.uint8).reshape(s.cardinality, N)
    return ExactMarginals(tuple(float(p) for p in (members == 0).mean(axis=0)))


def marginal_distance(exact: ExactMarginals, estimated: MarginalSet, net: Network) -> float:
    """Mean over in-nodes of ``|p_i(0) − p̂_i(0)|``."""
    if not exact.defined:
        raise UndefinedMarginalsError("Exact marginals are undefined (empty preimage set)")
    if len(exact.p0) != net.N:
        raise LengthMismatchError(f"{len(exact.p0)} exact marginals for {net.N} in-nodes")
    estimated_p0 = expit(estimated.inputs(net))
    return float(np.mean(np.abs(np.asarray(exact.p0) - estimated_p0)))
