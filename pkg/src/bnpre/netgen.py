"""Random layered feed-forward networks with arbitrary (type A) or unate (type B) gates."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from bnpre.network import K_MAX, NOT, WIRE, BooleanFunction, Network, and_function

Log = Callable[..., None]

TYPE_A = 'A'
TYPE_B = 'B'
FUNCTION_TYPES = [ TYPE_A, TYPE_B, ]

PRESETS = {
    'full': dict(n_total=2400, n_in=200, n_out=1200, depth=7, k_max=15),
    'desk': dict(n_total=240, n_in=20, n_out=120, depth=7, k_max=5),
}


class InfeasibleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    n_total: int = 240
    n_in: int = 20
    n_out: int = 120
    depth: int = 7
    k_max: int = 5
    function_type: str = TYPE_A
    seed: int = 0

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1:
            raise InfeasibleConfigError(f"Need at least one in- and out-node: N={self.n_in}, M={self.n_out}")
        if self.n_in + self.n_out > self.n_total:
            raise InfeasibleConfigError(f"N + M = {self.n_in + self.n_out} exceeds n_total={self.n_total}")
        if self.depth < 1:
            raise InfeasibleConfigError(f"depth must be ≥ 1, got {self.depth}")
        if self.n_interior < self.depth:
            raise InfeasibleConfigError(f"{self.n_interior} interior nodes can't fill {self.depth} layers")
        if not 1 <= self.k_max <= K_MAX:
            raise InfeasibleConfigError(f"k_max={self.k_max} outside [1, {K_MAX}]")
        if self.k_max > self.n_in:
            raise InfeasibleConfigError(f"k_max={self.k_max} exceeds the {self.n_in} nodes available to the first layer")
        if self.function_type not in FUNCTION_TYPES:
            raise InfeasibleConfigError(f"Unknown function type {self.function_type!r}; choose from {FUNCTION_TYPES}")

    @classmethod
    def preset(cls, name: str, **overrides) -> EnsembleConfig:
        if name not in PRESETS:
            raise InfeasibleConfigError(f"Unknown preset {name!r}; choose from {list(PRESETS)}")
        return cls(**{ **PRESETS[name], **overrides })

    def with_(self, **changes) -> EnsembleConfig:
        return replace(self, **changes)

    @property
    def n_interior(self) -> int:
        return self.n_total - self.n_in - self.n_out

    def layer_sizes(self) -> list[int]:
        """In-nodes, then ``depth`` interior layers (sizes differing by at most one), then out-nodes."""
        q, r = divmod(self.n_interior, self.depth)
        return [ self.n_in, *[ q + (i < r) for i in range(self.depth) ], self.n_out ]


def random_function_type_a(k: int, rng: np.random.Generator) -> BooleanFunction:
    """Uniform over all ``2^(2^k)`` functions of ``k`` inputs."""
    return BooleanFunction.from_bits(rng.integers(0, 2, size=1 << k))


def random_function_type_b(k: int, rng: np.random.Generator) -> BooleanFunction:
    """OR of 1..k random AND-terms over literals with one fixed polarity per input; unate by construction."""
    negated = int(sum(int(s) << i for i, s in enumerate(rng.integers(0, 2, size=k))))
    n_terms = int(rng.integers(1, k + 1))
    terms = rng.integers(1, 1 << k, size=n_terms)
    literals = np.arange(1 << k) ^ negated
    outputs = np.any((literals[:, None] & terms) == terms, axis=1)
    return BooleanFunction.from_bits(outputs.astype(np.uint8))


RANDOM_FUNCTIONS = {
    TYPE_A: random_function_type_a,
    TYPE_B: random_function_type_b,
}


def random_network(cfg: EnsembleConfig, rng: Optional[np.random.Generator] = None, log: Optional[Log] = None) -> Network:
    """Layered DAG: each gate draws ``k ∈ [1, k_max]`` distinct inputs from all earlier layers.

    Nodes left without readers (other than out-nodes) are rewired into a gate of a later layer, replacing an
    input that is read elsewhere too; failing that, a later gate with spare in-degree gains an input and
    redraws its function.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    draw_function = RANDOM_FUNCTIONS[cfg.function_type]
    sizes = cfg.layer_sizes()
    starts = np.cumsum([ 0, *sizes ]).tolist()
    layer_of = np.repeat(np.arange(len(sizes)), sizes)

    functions: list[Optional[BooleanFunction]] = [ None ] * cfg.n_total
    args: list[list[int]] = [ [] for _ in range(cfg.n_total) ]
    for layer in range(1, len(sizes)):
        pool = starts[layer]
        for idx in range(starts[layer], starts[layer + 1]):
            k = int(rng.integers(1, cfg.k_max + 1))
            args[idx] = sorted(int(a) for a in rng.choice(pool, size=k, replace=False))
            functions[idx] = draw_function(k, rng)

    fanout = np.zeros(cfg.n_total, dtype=np.int64)
    for a in args:
        fanout[a] += 1
    first_out = starts[-2]
    for d in range(first_out - 1, -1, -1):
        if fanout[d]:
            continue
        later = range(starts[layer_of[d] + 1], cfg.n_total)
        swaps = [ (c, pos) for c in later for pos, a in enumerate(args[c]) if fanout[a] > 1 and d not in args[c] ]
        if swaps:
            c, pos = swaps[int(rng.integers(len(swaps)))]
            fanout[args[c][pos]] -= 1
            args[c][pos] = d
        else:
            growable = [ c for c in later if len(args[c]) < cfg.k_max ]
            if not growable:
                raise InfeasibleConfigError(f"Can't connect node {d}: no later gate has a shared input or spare in-degree")
            c = growable[int(rng.integers(len(growable)))]
            args[c] = [ *args[c], d ]
            functions[c] = draw_function(len(args[c]), rng)
        fanout[d] += 1
        if log:
            log(f"Rewired dangling node {d} into node {c}")

    defs = [
        None if functions[idx] is None else (functions[idx], args[idx])
        for idx in range(cfg.n_total)
    ]
    return Network.build(defs, list(range(first_out, cfg.n_total)))


def random_unary_forest(
    n_in: int,
    max_depth: int,
    rng: np.random.Generator,
    max_children: int = 1,
) -> Network:
    """Trees of NOT/wire gates hanging off each in-node; leaves are the out-nodes.

    With ``max_children=1`` every tree is a chain, so every output vector has exactly one preimage.
    """
    defs: list = [ None ] * n_in
    depth_of = [ 0 ] * n_in
    children = [ 0 ] * n_in
    frontier = list(range(n_in))
    while frontier:
        parent = frontier.pop(0)
        if parent >= n_in and (depth_of[parent] >= max_depth or rng.random() < 0.3):
            continue
        count = 1 if parent < n_in else int(rng.integers(1, max_children + 1))
        for _ in range(count):
            defs.append((NOT if rng.random() < 0.5 else WIRE, [ parent ]))
            depth_of.append(depth_of[parent] + 1)
            children.append(0)
            children[parent] += 1
            frontier.append(len(defs) - 1)
    leaves = [ idx for idx in range(n_in, len(defs)) if not children[idx] ]
    return Network.build(defs, leaves)


# Edges of the three-layer illustration network: 3 in-nodes, 3 + 5 interior gates, 5 out-nodes.
EXAMPLE_INPUTS = [
    None, None, None,
    (0, 1), (0, 2), (1,),
    (3, 4), (3,), (2,), (4,), (2, 5),
    (6,), (6, 7), (8,), (8, 9), (10,),
]


def example_network(function: Callable[[int], BooleanFunction] = and_function) -> Network:
    """The 16-node example topology, with ``function(k)`` at every ``k``-input gate."""
    defs = [ None if a is None else (function(len(a)), a) for a in EXAMPLE_INPUTS ]
    return Network.build(defs, list(range(11, 16)))
