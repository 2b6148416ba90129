"""Feed-forward Boolean networks: truth tables, forward evaluation and the ``bn v1`` text format."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from itertools import islice
from os import PathLike
from typing import Callable, Iterable, Optional, Sequence

import networkx as nx
import numpy as np

K_MAX = 15
UNATE_MAX_K = 15
MISSING_IDS_SHOWN = 5

INPUT = 'input'
INTERIOR = 'interior'
OUTPUT = 'output'

FORMAT_HEADER = 'bn v1'
SIZES_RGX = re.compile(r'nodes (?P<n>\d+) in (?P<N>\d+) out (?P<M>\d+)')
INPUT_RGX = re.compile(r'node (?P<id>\d+) in')
GATE_RGX = re.compile(r'node (?P<id>\d+) fn (?P<table>[0-9a-fA-F]+) args(?P<args>(?: +\d+)+)')
OUT_RGX = re.compile(r'out(?P<ids>(?: +\d+)+)')


class NetworkError(ValueError):
    """Base class for malformed networks and network files."""


class FormatError(NetworkError):
    pass


class CycleError(NetworkError):
    pass


class DanglingInputError(NetworkError):
    pass


class TableLengthError(NetworkError):
    pass


class DuplicateNodeError(NetworkError):
    pass


class LengthMismatchError(ValueError):
    pass


def check_bits(bits: Iterable[int], length: int, what: str) -> tuple[int, ...]:
    bits = tuple(int(b) for b in bits)
    if len(bits) != length:
        raise LengthMismatchError(f"{what}: expected {length} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"{what}: bits must be 0 or 1: {bits}")
    return bits


def bits_index(bits: Sequence[int]) -> int:
    """Integer encoding of an assignment; variable 0 is the least significant bit."""
    return sum(b << i for i, b in enumerate(bits))


def bit_matrix(k: int) -> np.ndarray:
    """``(2^k, k)`` matrix whose row ``m`` is the assignment encoded by ``m``."""
    return (np.arange(1 << k)[:, None] >> np.arange(k)) & 1


@dataclass(frozen=True)
class BooleanFunction:
    """Truth table over ``arity`` inputs, packed into an int: bit ``m`` is the output for assignment ``m``."""
    arity: int
    table: int

    def __post_init__(self):
        if not 1 <= self.arity <= K_MAX:
            raise TableLengthError(f"Arity {self.arity} outside [1, {K_MAX}]")
        if self.table < 0 or self.table >> self.size:
            raise TableLengthError(f"Truth table {self.table:#x} has more than 2^{self.arity} bits")

    @property
    def size(self) -> int:
        return 1 << self.arity

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> BooleanFunction:
        size = len(bits)
        arity = size.bit_length() - 1
        if size < 2 or size != 1 << arity:
            raise TableLengthError(f"Truth table length {size} is not a power of two ≥ 2")
        bits = np.asarray(check_bits(bits, size, 'truth table'), dtype=np.uint8)
        return cls(arity, int.from_bytes(np.packbits(bits, bitorder='little').tobytes(), 'little'))

    @classmethod
    def from_callable(cls, arity: int, fn: Callable[..., int]) -> BooleanFunction:
        return cls.from_bits([ int(bool(fn(*row))) for row in bit_matrix(arity).tolist() ])

    @classmethod
    def from_hex(cls, arity: int, digits: str) -> BooleanFunction:
        expected = hex_digits(arity)
        if len(digits) != expected:
            raise TableLengthError(f"Arity {arity} needs {expected} hex digits, got {len(digits)} ({digits!r})")
        return cls(arity, int(digits, 16))

    def hex(self) -> str:
        return format(self.table, f'0{hex_digits(self.arity)}x')

    @cached_property
    def outputs(self) -> np.ndarray:
        packed = np.frombuffer(self.table.to_bytes(max(1, self.size // 8), 'little'), dtype=np.uint8)
        outputs = np.unpackbits(packed, bitorder='little')[:self.size]
        outputs.setflags(write=False)
        return outputs

    @cached_property
    def sensitive(self) -> np.ndarray:
        """``(2^k, k)`` bools: whether flipping input ``i`` under assignment ``m`` changes the output."""
        m = np.arange(self.size)[:, None]
        flipped = m ^ (1 << np.arange(self.arity))
        sensitive = self.outputs[m] != self.outputs[flipped]
        sensitive.setflags(write=False)
        return sensitive

    def complement(self) -> BooleanFunction:
        return BooleanFunction(self.arity, self.table ^ ((1 << self.size) - 1))

    def dual(self) -> BooleanFunction:
        """``a ↦ ¬f(¬a)``; networks built from duals map complemented inputs to complemented outputs."""
        return BooleanFunction.from_bits((1 - self.outputs[::-1]).tolist())

    def __call__(self, *bits: int) -> int:
        return eval_function(self, bits)


def hex_digits(arity: int) -> int:
    return max(1, (1 << arity) // 4)


def constant(arity: int, value: int) -> BooleanFunction:
    return BooleanFunction(arity, (1 << (1 << arity)) - 1 if value else 0)


def and_function(arity: int) -> BooleanFunction:
    return BooleanFunction(arity, 1 << ((1 << arity) - 1))


def or_function(arity: int) -> BooleanFunction:
    return BooleanFunction(arity, ((1 << (1 << arity)) - 1) ^ 1)


def xor_function(arity: int) -> BooleanFunction:
    return BooleanFunction.from_callable(arity, lambda *xs: sum(xs) % 2)


WIRE = BooleanFunction(1, 0b10)
NOT = BooleanFunction(1, 0b01)
AND2 = and_function(2)
OR2 = or_function(2)
XOR2 = xor_function(2)


def eval_function(f: BooleanFunction, assignment: Sequence[int]) -> int:
    assignment = check_bits(assignment, f.arity, 'assignment')
    return (f.table >> bits_index(assignment)) & 1


def is_insensitive(f: BooleanFunction, others: Sequence[int], i: int) -> bool:
    """Whether input ``i`` has no influence on ``f`` when the remaining inputs are ``others``."""
    if not 0 <= i < f.arity:
        raise ValueError(f"Position {i} outside arity {f.arity}")
    others = list(check_bits(others, f.arity - 1, 'co-assignment'))
    lo = others[:i] + [0] + others[i:]
    hi = others[:i] + [1] + others[i:]
    return eval_function(f, lo) == eval_function(f, hi)


def is_unate(f: BooleanFunction, max_k: int = UNATE_MAX_K) -> bool:
    """Whether ``f`` is monotone in every input after choosing a polarity per input."""
    if f.arity > max_k:
        raise ValueError(f"Refusing exhaustive unateness check at k={f.arity} > {max_k} (cost 2^{f.arity}·{f.arity})")
    outputs = f.outputs
    m = np.arange(f.size)
    for i in range(f.arity):
        lo = m[(m >> i) & 1 == 0]
        before, after = outputs[lo], outputs[lo | (1 << i)]
        if not (np.all(before <= after) or np.all(before >= after)):
            return False
    return True


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    function: Optional[BooleanFunction] = None
    inputs: tuple[int, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.inputs)


Gate = tuple[BooleanFunction, Sequence[int]]


@dataclass(frozen=True)
class Network:
    """Feed-forward DAG; node ids are a topological order and every gate's inputs have smaller ids."""
    nodes: tuple[Node, ...]
    in_nodes: tuple[int, ...]
    out_nodes: tuple[int, ...]

    def __post_init__(self):
        n = len(self.nodes)
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise DuplicateNodeError(f"Node at position {idx} has id {node.id}")
            if node.kind == INPUT:
                if node.function is not None or node.inputs:
                    raise FormatError(f"Input node {idx} has a function or inputs")
                continue
            if node.function is None:
                raise FormatError(f"Node {idx} has no function")
            if node.function.arity != node.arity:
                raise TableLengthError(f"Node {idx}: arity-{node.function.arity} table for {node.arity} inputs")
            if len(set(node.inputs)) != node.arity:
                raise FormatError(f"Node {idx} repeats an input: {node.inputs}")
            for arg in node.inputs:
                if not 0 <= arg < n:
                    raise DanglingInputError(f"Node {idx} reads undefined node {arg}")
                if arg >= idx:
                    raise CycleError(f"Node {idx} reads node {arg}, which is not earlier in topological order")
        in_nodes = tuple(node.id for node in self.nodes if node.kind == INPUT)
        if self.in_nodes != in_nodes:
            raise FormatError(f"In-nodes {self.in_nodes} don't match input-kind nodes {in_nodes}")
        if not self.out_nodes:
            raise FormatError("Network has no out-nodes")
        if len(set(self.out_nodes)) != len(self.out_nodes):
            raise DuplicateNodeError(f"Repeated out-node in {self.out_nodes}")
        for o in self.out_nodes:
            if not 0 <= o < n:
                raise DanglingInputError(f"Out-node {o} is not a node")
            if self.nodes[o].kind != OUTPUT:
                raise FormatError(f"Out-node {o} has kind {self.nodes[o].kind}")
            if self.fanout[o]:
                raise FormatError(f"Out-node {o} feeds nodes {self.fanout[o]}")
        if sum(node.kind == OUTPUT for node in self.nodes) != len(self.out_nodes):
            raise FormatError("Output-kind nodes don't match out-node list")

    @classmethod
    def build(cls, defs: Sequence[Optional[Gate]], out_nodes: Sequence[int]) -> Network:
        """Build from per-node definitions: ``None`` for an in-node, else ``(function, input ids)``."""
        outs = set(out_nodes)
        nodes = []
        for idx, d in enumerate(defs):
            if d is None:
                nodes.append(Node(idx, INPUT))
            else:
                fn, args = d
                nodes.append(Node(idx, OUTPUT if idx in outs else INTERIOR, fn, tuple(args)))
        in_nodes = tuple(node.id for node in nodes if node.kind == INPUT)
        return cls(tuple(nodes), in_nodes, tuple(out_nodes))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def N(self) -> int:
        return len(self.in_nodes)

    @property
    def M(self) -> int:
        return len(self.out_nodes)

    @cached_property
    def gates(self) -> tuple[Node, ...]:
        return tuple(node for node in self.nodes if node.kind != INPUT)

    @cached_property
    def fanout(self) -> tuple[tuple[int, ...], ...]:
        """``S_j``: ids of the gates reading node ``j``, ascending."""
        fanout: list[list[int]] = [ [] for _ in self.nodes ]
        for node in self.nodes:
            for arg in node.inputs:
                fanout[arg].append(node.id)
        return tuple(tuple(f) for f in fanout)

    @property
    def num_edges(self) -> int:
        return sum(node.arity for node in self.gates)

    def node_state(self, x: Sequence[int]) -> tuple[int, ...]:
        x = check_bits(x, self.N, 'input vector')
        state = [0] * self.n
        for idx, bit in zip(self.in_nodes, x):
            state[idx] = bit
        for node in self.gates:
            idx = bits_index([ state[arg] for arg in node.inputs ])
            state[node.id] = (node.function.table >> idx) & 1
        return tuple(state)

    def evaluate(self, x: Sequence[int]) -> tuple[int, ...]:
        state = self.node_state(x)
        return tuple(state[o] for o in self.out_nodes)

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate a ``(B, N)`` bit matrix, returning the ``(B, M)`` outputs."""
        X = np.asarray(X, dtype=np.uint8)
        if X.ndim != 2 or X.shape[1] != self.N:
            raise LengthMismatchError(f"Expected a (B, {self.N}) input matrix, got shape {X.shape}")
        state = np.zeros((self.n, X.shape[0]), dtype=np.uint8)
        state[list(self.in_nodes)] = X.T
        for node in self.gates:
            idx = np.zeros(X.shape[0], dtype=np.int64)
            for pos, arg in enumerate(node.inputs):
                idx |= state[arg].astype(np.int64) << pos
            state[node.id] = node.function.outputs[idx]
        return state[list(self.out_nodes)].T

    def to_networkx(self) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from((node.id, dict(kind=node.kind)) for node in self.nodes)
        G.add_edges_from((arg, node.id) for node in self.gates for arg in node.inputs)
        return G

    @cached_property
    def longest_path(self) -> int:
        """Edges on the longest path through the DAG."""
        return nx.dag_longest_path_length(self.to_networkx())

    @property
    def depth(self) -> int:
        """Gate layers strictly between the in-nodes and the out-nodes (at least 1)."""
        return max(1, self.longest_path - 1)

    def stats(self, unate_max_k: int = UNATE_MAX_K) -> dict:
        arities = [ node.arity for node in self.gates ]
        checkable = [ node.function for node in self.gates if node.arity <= unate_max_k ]
        unate = sum(is_unate(f, unate_max_k) for f in checkable)
        return dict(
            n=self.n,
            N=self.N,
            M=self.M,
            edges=self.num_edges,
            mean_in_degree=sum(arities) / len(arities),
            max_in_degree=max(arities),
            longest_path=self.longest_path,
            dangling=sum(1 for node in self.nodes if node.kind != OUTPUT and not self.fanout[node.id]),
            unate_fraction=unate / len(checkable) if checkable else float('nan'),
        )


def _ids(text: str) -> list[int]:
    return [ int(tok) for tok in text.split() ]


def parse_network(text: str, k_max: int = K_MAX) -> Network:
    """Parse the ``bn v1`` format; ``#`` starts a comment."""
    lines = [
        (num, line.split('#', 1)[0].strip())
        for num, line in enumerate(text.splitlines(), start=1)
    ]
    lines = [ (num, line) for num, line in lines if line ]
    if not lines or lines[0][1] != FORMAT_HEADER:
        raise FormatError(f"Expected {FORMAT_HEADER!r} header")
    if len(lines) < 2 or not (m := SIZES_RGX.fullmatch(lines[1][1])):
        raise FormatError("Expected 'nodes <n> in <N> out <M>' on line 2")
    n, N, M = int(m['n']), int(m['N']), int(m['M'])

    defs: dict[int, Optional[Gate]] = {}
    out_nodes: Optional[list[int]] = None
    for num, line in lines[2:]:
        if out_nodes is not None:
            raise FormatError(f"Line {num}: content after 'out' line: {line!r}")
        if m := INPUT_RGX.fullmatch(line):
            idx, d = int(m['id']), None
        elif m := GATE_RGX.fullmatch(line):
            idx = int(m['id'])
            args = _ids(m['args'])
            if len(args) > k_max:
                raise TableLengthError(f"Line {num}: node {idx} has {len(args)} inputs, above k_max={k_max}")
            for arg in args:
                if arg >= n:
                    raise DanglingInputError(f"Line {num}: node {idx} reads undefined node {arg}")
                if arg >= idx:
                    raise CycleError(f"Line {num}: node {idx} reads node {arg}, which is not earlier in topological order")
            try:
                d = (BooleanFunction.from_hex(len(args), m['table']), args)
            except TableLengthError as e:
                raise TableLengthError(f"Line {num}: node {idx}: {e}") from None
        elif m := OUT_RGX.fullmatch(line):
            out_nodes = _ids(m['ids'])
            continue
        else:
            raise FormatError(f"Line {num}: unrecognized line {line!r}")
        if idx in defs:
            raise DuplicateNodeError(f"Line {num}: node {idx} defined twice")
        if idx >= n:
            raise FormatError(f"Line {num}: node id {idx} outside [0, {n})")
        defs[idx] = d

    if out_nodes is None:
        raise FormatError("Missing 'out' line")
    if len(defs) != n:
        missing = list(islice((idx for idx in range(n) if idx not in defs), MISSING_IDS_SHOWN))
        raise FormatError(f"Header declares {n} nodes, found {len(defs)}; missing ids include {missing}")
    n_in = sum(d is None for d in defs.values())
    if n_in != N:
        raise FormatError(f"Header declares {N} in-nodes, found {n_in}")
    if len(out_nodes) != M:
        raise FormatError(f"Header declares {M} out-nodes, found {len(out_nodes)}")
    return Network.build([ defs[idx] for idx in range(n) ], out_nodes)


def serialize_network(net: Network) -> str:
    lines = [ FORMAT_HEADER, f'nodes {net.n} in {net.N} out {net.M}' ]
    for node in net.nodes:
        if node.kind == INPUT:
            lines.append(f'node {node.id} in')
        else:
            args = ' '.join(map(str, node.inputs))
            lines.append(f'node {node.id} fn {node.function.hex()} args {args}')
    lines.append('out ' + ' '.join(map(str, net.out_nodes)))
    return '\n'.join(lines) + '\n'


def read_network(path: str | PathLike, k_max: int = K_MAX) -> Network:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_network(f.read(), k_max=k_max)


def write_network(net: Network, path: str | PathLike) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(serialize_network(net))
