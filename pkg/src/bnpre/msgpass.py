"""LLR-domain message passing that estimates the input marginals of a preimage.

Every node is a binary variable and every gate ``f_j`` is a function node connected to ``j`` and its
inputs. Out-nodes are clamped to ``±l_clamp``; each iteration first computes all function→variable
messages from the previous iteration's state, then adds them onto the non-out nodes' LLRs.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import isfinite, log
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from bnpre.network import BooleanFunction, LengthMismatchError, Network, bit_matrix, check_bits

L_CLAMP = 50.0
T_MAX = 14
LOG_HALF = log(0.5)
# Upper bound on floats per temporary in the vectorized message kernel.
ELEMENT_BUDGET = 1 << 22


class UndefinedDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class InferenceParams:
    t_max: int = T_MAX
    l_clamp: float = L_CLAMP

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError(f"t_max must be ≥ 1, got {self.t_max}")
        if not (self.l_clamp > 0 and isfinite(self.l_clamp)):
            raise ValueError(f"l_clamp must be positive and finite, got {self.l_clamp}")


def llr_to_probs(L: float) -> tuple[float, float]:
    """``(p(x=0), p(x=1))`` for ``L = ln(p0/p1)``."""
    return float(expit(L)), float(expit(-L))


def probs_to_llr(p0: float, p1: float, l_clamp: float = L_CLAMP) -> float:
    """LLR of an (unnormalized) mass pair; a zero mass maps to the clamp."""
    if p0 < 0 or p1 < 0:
        raise ValueError(f"Negative mass: ({p0}, {p1})")
    if p0 == 0 and p1 == 0:
        raise UndefinedDistributionError("Both masses are zero")
    if p1 == 0:
        return l_clamp
    if p0 == 0:
        return -l_clamp
    return float(np.clip(log(p0) - log(p1), -l_clamp, l_clamp))


def log_masses_to_llr(log_p0: float, log_p1: float, l_clamp: float = L_CLAMP) -> float:
    if log_p0 == -np.inf and log_p1 == -np.inf:
        raise UndefinedDistributionError("Both masses are zero")
    return float(np.clip(log_p0 - log_p1, -l_clamp, l_clamp))


def log_probs(L: np.ndarray) -> np.ndarray:
    """``log p(x=0)``, ``log p(x=1)`` stacked on a new last axis."""
    L = np.asarray(L, dtype=np.float64)
    return np.stack([ -np.logaddexp(0, -L), -np.logaddexp(0, L) ], axis=-1)


@dataclass(frozen=True, eq=False)
class GateGroup:
    """Gates of one arity, stacked for vectorized message computation."""
    arity: int
    ids: np.ndarray        # (G,)
    args: np.ndarray       # (G, k)
    outputs: np.ndarray    # (G, 2^k)
    sensitive: np.ndarray  # (G, 2^k, k)

    @classmethod
    def of(cls, arity: int, ids: Sequence[int], args: Sequence[Sequence[int]], functions: Sequence[BooleanFunction]) -> GateGroup:
        return cls(
            arity=arity,
            ids=np.asarray(ids, dtype=np.int64),
            args=np.asarray(args, dtype=np.int64).reshape(len(ids), arity),
            outputs=np.stack([ f.outputs for f in functions ]),
            sensitive=np.stack([ f.sensitive for f in functions ]),
        )

    def __len__(self):
        return len(self.ids)

    def chunks(self, batch: int) -> Iterator[slice]:
        per_gate = batch * (1 << self.arity) * self.arity
        step = max(1, ELEMENT_BUDGET // per_gate)
        for start in range(0, len(self), step):
            yield slice(start, start + step)


def _messages(
    bits: np.ndarray,
    outputs: np.ndarray,
    sensitive: np.ndarray,
    incoming: np.ndarray,
    lambda_out: np.ndarray,
    l_clamp: float,
) -> np.ndarray:
    """Function→variable LLRs for every input of every gate.

    ``incoming`` is ``(B, G, k)`` (the inputs' LLRs), ``lambda_out`` is ``(B, G)`` (each gate's own node);
    returns ``(B, G, k)``. For input ``i`` and value ``x``, the message mass sums, over assignments with
    ``a_i = x``, the product of the other inputs' probabilities times ``ξ``: ``½`` where ``i`` is
    insensitive, else the output node's probability of ``f(a)``. Sums run in the log domain.
    """
    lp = log_probs(incoming)                                            # (B, G, k, 2)
    terms = np.where(bits == 0, lp[..., None, :, 0], lp[..., None, :, 1])  # (B, G, 2^k, k)
    others = terms.sum(axis=-1, keepdims=True) - terms
    lpj = log_probs(lambda_out)                                         # (B, G, 2)
    forced = np.where(outputs == 0, lpj[..., 0:1], lpj[..., 1:2])       # (B, G, 2^k)
    weights = others + np.where(sensitive, forced[..., None], LOG_HALF)
    mu0 = logsumexp(np.where(bits == 0, weights, -np.inf), axis=-2)
    mu1 = logsumexp(np.where(bits == 1, weights, -np.inf), axis=-2)
    return np.clip(mu0 - mu1, -l_clamp, l_clamp)


def function_to_variable_all(
    f: BooleanFunction,
    incoming: Sequence[float],
    lambda_j: float,
    l_clamp: float = L_CLAMP,
) -> np.ndarray:
    """Messages from gate ``f`` to each of its ``k`` inputs; ``incoming[i]`` does not affect message ``i``."""
    incoming = np.asarray(incoming, dtype=np.float64)
    if incoming.shape != (f.arity,):
        raise LengthMismatchError(f"Expected {f.arity} incoming LLRs, got shape {incoming.shape}")
    msgs = _messages(
        bit_matrix(f.arity),
        f.outputs[None],
        f.sensitive[None],
        incoming[None, None],
        np.array([[lambda_j]], dtype=np.float64),
        l_clamp,
    )
    return msgs[0, 0]


def function_to_variable(
    f: BooleanFunction,
    i: int,
    incoming: Sequence[float],
    lambda_j: float,
    l_clamp: float = L_CLAMP,
) -> float:
    """Message from gate ``f`` to its input ``i``, given the other inputs' LLRs (in input order, ``i`` omitted)."""
    if not 0 <= i < f.arity:
        raise ValueError(f"Position {i} outside arity {f.arity}")
    incoming = list(incoming)
    if len(incoming) != f.arity - 1:
        raise LengthMismatchError(f"Expected {f.arity - 1} incoming LLRs, got {len(incoming)}")
    full = incoming[:i] + [0.] + incoming[i:]
    return float(function_to_variable_all(f, full, lambda_j, l_clamp)[i])


def output_distribution(f: BooleanFunction, incoming: Sequence[float], l_clamp: float = L_CLAMP) -> float:
    """LLR of ``f``'s output when its inputs are independent with the given LLRs."""
    incoming = np.asarray(incoming, dtype=np.float64)
    if incoming.shape != (f.arity,):
        raise LengthMismatchError(f"Expected {f.arity} incoming LLRs, got shape {incoming.shape}")
    lp = log_probs(incoming)
    bits = bit_matrix(f.arity)
    totals = np.where(bits == 0, lp[:, 0], lp[:, 1]).sum(axis=1)
    outputs = f.outputs
    log_p0 = logsumexp(totals[outputs == 0]) if np.any(outputs == 0) else -np.inf
    log_p1 = logsumexp(totals[outputs == 1]) if np.any(outputs == 1) else -np.inf
    return log_masses_to_llr(log_p0, log_p1, l_clamp)


def variable_update(prev: float, incoming_msgs: Sequence[float], l_clamp: float = L_CLAMP) -> float:
    return float(np.clip(prev + sum(incoming_msgs), -l_clamp, l_clamp))


@dataclass(frozen=True, eq=False)
class MarginalSet:
    """Per-node LLRs after ``t`` iterations."""
    llrs: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.llrs.setflags(write=False)

    @classmethod
    def uniform(cls, net: Network) -> MarginalSet:
        return cls(np.zeros(net.n))

    @classmethod
    def for_inputs(cls, net: Network, input_llrs: Sequence[float], t: int = 0) -> MarginalSet:
        input_llrs = np.asarray(input_llrs, dtype=np.float64)
        if input_llrs.shape != (net.N,):
            raise LengthMismatchError(f"Expected {net.N} input LLRs, got shape {input_llrs.shape}")
        llrs = np.zeros(net.n)
        llrs[list(net.in_nodes)] = input_llrs
        return cls(llrs, t)

    @classmethod
    def from_probs(cls, net: Network, p0: Sequence[float], l_clamp: float = L_CLAMP) -> MarginalSet:
        """In-node marginals from ``p(x_i=0)`` values."""
        return cls.for_inputs(net, [ probs_to_llr(p, 1 - p, l_clamp) for p in p0 ])

    def inputs(self, net: Network) -> np.ndarray:
        return self.llrs[list(net.in_nodes)]

    def __getitem__(self, idx: int) -> float:
        return float(self.llrs[idx])

    def __len__(self):
        return len(self.llrs)


@dataclass(frozen=True, eq=False)
class MessageBuffer:
    """Messages ``L_{j→i}`` of one iteration, keyed by gate arity group; row ``g`` follows ``group.args[g]``."""
    groups: tuple[GateGroup, ...]
    messages: tuple[np.ndarray, ...]  # per group: (B, G, k)

    def __len__(self):
        return sum(len(g) * g.arity for g in self.groups)

    def incoming(self, n: int) -> np.ndarray:
        """``(B, n)`` sums of the messages each node receives from the gates reading it."""
        batch = self.messages[0].shape[0] if self.messages else 1
        totals = np.zeros((n, batch))
        for group, msgs in zip(self.groups, self.messages):
            np.add.at(totals, group.args.ravel(), msgs.reshape(batch, -1).T)
        return totals.T


class FactorGraph:
    """A network's gates grouped by arity, compiled once for repeated inference."""

    def __init__(self, net: Network):
        self.net = net
        self.out_idx = np.asarray(net.out_nodes, dtype=np.int64)
        by_arity: dict[int, list] = {}
        for node in net.gates:
            by_arity.setdefault(node.arity, []).append(node)
        self.groups = tuple(
            GateGroup.of(k, [ g.id for g in gates ], [ g.inputs for g in gates ], [ g.function for g in gates ])
            for k, gates in sorted(by_arity.items())
        )
        self.bits = { k: bit_matrix(k) for k in by_arity }

    def clamped(self, Y: np.ndarray, l_clamp: float) -> np.ndarray:
        """Initial ``(B, n)`` state: zeros, with out-nodes at ``+l_clamp`` for ``y=0`` and ``-l_clamp`` for ``y=1``."""
        Y = np.asarray(Y)
        L = np.zeros((Y.shape[0], self.net.n))
        L[:, self.out_idx] = np.where(Y == 0, l_clamp, -l_clamp)
        return L

    def messages(self, L: np.ndarray, l_clamp: float) -> MessageBuffer:
        msgs = []
        for group in self.groups:
            out = np.empty((L.shape[0], len(group), group.arity))
            for chunk in group.chunks(L.shape[0]):
                ids, args = group.ids[chunk], group.args[chunk]
                out[:, chunk] = _messages(
                    self.bits[group.arity],
                    group.outputs[chunk],
                    group.sensitive[chunk],
                    L[:, args],
                    L[:, ids],
                    l_clamp,
                )
            msgs.append(out)
        return MessageBuffer(self.groups, tuple(msgs))

    def iterate(self, Y: np.ndarray, params: InferenceParams) -> Iterator[np.ndarray]:
        """Yield the ``(B, n)`` state after each of ``params.t_max`` iterations, for a ``(B, M)`` batch of targets."""
        Y = np.asarray(Y, dtype=np.uint8)
        if Y.ndim != 2 or Y.shape[1] != self.net.M:
            raise LengthMismatchError(f"Expected a (B, {self.net.M}) output matrix, got shape {Y.shape}")
        c = params.l_clamp
        L = self.clamped(Y, c)
        clamped = L[:, self.out_idx].copy()
        for _ in range(params.t_max):
            buffer = self.messages(L, c)
            L = np.clip(L + buffer.incoming(self.net.n), -c, c)
            L[:, self.out_idx] = clamped
            assert np.all(np.isfinite(L)), "non-finite LLR after clamping"
            yield L


def iterate_inference(net: Network, y: Sequence[int], params: Optional[InferenceParams] = None) -> Iterator[MarginalSet]:
    """Yield the marginals after every iteration ``t = 1..t_max``."""
    params = params or InferenceParams()
    y = check_bits(y, net.M, 'output vector')
    graph = FactorGraph(net)
    for t, L in enumerate(graph.iterate(np.array([y]), params), start=1):
        yield MarginalSet(L[0].copy(), t)


def run_inference(net: Network, y: Sequence[int], params: Optional[InferenceParams] = None) -> MarginalSet:
    marginals = None
    for marginals in iterate_inference(net, y, params):
        pass
    return marginals


def hard_decision(m: MarginalSet, net: Network) -> tuple[int, ...]:
    """``0`` where the in-node LLR is ≥ 0, else ``1``."""
    return tuple(int(L < 0) for L in m.inputs(net))


def hard_decisions(L: np.ndarray, net: Network) -> np.ndarray:
    """Row-wise hard decision on a ``(B, n)`` state."""
    return (L[:, list(net.in_nodes)] < 0).astype(np.uint8)


def similarity(y: Sequence[int], y_hat: Sequence[int]) -> float:
    y, y_hat = tuple(y), tuple(y_hat)
    if len(y) != len(y_hat):
        raise LengthMismatchError(f"Length mismatch: {len(y)} vs {len(y_hat)}")
    return sum(a == b for a, b in zip(y, y_hat)) / len(y)
