"""Experiment drivers: similarity-vs-iterations sweeps, preimage statistics, oracle cross-checks and scaling."""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from time import perf_counter
from typing import Callable, Generic, Iterator, Optional, Sequence, TypeVar

import numpy as np

from bnpre.msgpass import L_CLAMP, ELEMENT_BUDGET, FactorGraph, InferenceParams, MarginalSet, hard_decisions, run_inference
from bnpre.netgen import FUNCTION_TYPES, EnsembleConfig, random_network
from bnpre.network import Network
from bnpre.oracle import ORACLE_MAX_N, enumerate_preimages, exact_marginals, marginal_distance
from bnpre.sampler import N_SAMPLES, collect_preimages, spawn_seeds, uniform_report
from bnpre.utils import Log, format_bits, run_all

R = TypeVar('R')


@dataclass(frozen=True)
class Instance:
    """One network of an ensemble, with the seed its targets and samples derive from."""
    label: str
    index: int
    net: Network
    seed: np.random.SeedSequence

    @property
    def streams(self) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
        """``(targets, samples)`` child seeds."""
        targets, samples = spawn_seeds(self.seed, 2)
        return targets, samples

    def targets(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """``count`` uniform inputs ``X`` and their outputs ``Y = f(X)``."""
        rng = np.random.default_rng(self.streams[0])
        X = rng.integers(0, 2, size=(count, self.net.N), dtype=np.uint8)
        return X, self.net.evaluate_batch(X)

    def sample_seeds(self, count: int) -> list[np.random.SeedSequence]:
        return spawn_seeds(self.streams[1], count)


def ensemble_seed(seed: int, function_type: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([ seed, FUNCTION_TYPES.index(function_type) ])


def generate_ensemble(
    cfg: EnsembleConfig,
    n_nets: int,
    seed: int,
    threads: int = 1,
    log: Optional[Log] = None,
) -> list[Instance]:
    children = spawn_seeds(ensemble_seed(seed, cfg.function_type), n_nets)

    def generate(index: int, child: np.random.SeedSequence) -> Instance:
        gen_seed, run_seed = spawn_seeds(child, 2)
        net = random_network(cfg, np.random.default_rng(gen_seed))
        if log:
            log(f"Generated type-{cfg.function_type} network {index}: {net.n} nodes, {net.num_edges} edges")
        return Instance(cfg.function_type, index, net, run_seed)

    return run_all([ lambda i=i, c=c: generate(i, c) for i, c in enumerate(children) ], threads)


def file_instance(net: Network, seed: int, label: str = 'file') -> Instance:
    return Instance(label, 0, net, np.random.SeedSequence(seed))


def batch_size(graph: FactorGraph) -> int:
    """Targets per inference batch, keeping the widest gate's temporaries within budget."""
    widest = max((1 << g.arity) * g.arity for g in graph.groups)
    return max(1, ELEMENT_BUDGET // widest)


def batches(total: int, size: int) -> Iterator[slice]:
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


class Stopwatch:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.elapsed = 0.

    def time(self, fn: Callable[[], R]) -> R:
        start = perf_counter()
        result = fn()
        self.elapsed += perf_counter() - start
        return result

    @property
    def ms(self) -> float:
        return self.elapsed * 1000 if self.enabled else 0.


@dataclass(frozen=True)
class SweepRow:
    type: str
    net: int
    y: int
    t: int
    similarity: float
    wall_ms: float


@dataclass(frozen=True)
class TableRow:
    type: str
    net: int
    y: int
    solved: bool
    valid: int
    unique: int
    wall_ms: float


@dataclass(frozen=True)
class ValidateRow:
    type: str
    net: int
    y: str
    omega: int
    distance: Optional[float]
    inference_rate: float
    uniform_rate: float
    uniform_exact: float


@dataclass(frozen=True)
class ScalingRow:
    n_total: int
    median_ms: float
    runs: int


@dataclass
class ExperimentResult(Generic[R]):
    rows: list[R]

    def groups(self, *keys: str) -> dict[tuple, list[R]]:
        groups: dict[tuple, list[R]] = {}
        for row in self.rows:
            groups.setdefault(tuple(getattr(row, k) for k in keys), []).append(row)
        return groups

    def mean(self, field: str, rows: Optional[Sequence[R]] = None) -> float:
        rows = self.rows if rows is None else rows
        return float(np.mean([ float(getattr(row, field)) for row in rows ])) if rows else float('nan')

    def header(self) -> list[str]:
        return [ f.name for f in fields(self.rows[0]) ] if self.rows else []

    def tuples(self) -> list[tuple]:
        return [ astuple(row) for row in self.rows ]


def sweep_instance(
    inst: Instance,
    t_list: Sequence[int],
    n_targets: int,
    l_clamp: float = L_CLAMP,
    timing: bool = True,
) -> list[SweepRow]:
    """Hard-decision similarity at each ``t`` in ``t_list``, from one traced run per target."""
    net = inst.net
    graph = FactorGraph(net)
    _, Y = inst.targets(n_targets)
    wanted = set(t_list)
    params = InferenceParams(max(t_list), l_clamp)
    rows = []
    for sl in batches(n_targets, batch_size(graph)):
        Yb = Y[sl]
        states = graph.iterate(Yb, params)
        watch = Stopwatch(timing)
        for t in range(1, params.t_max + 1):
            L = watch.time(lambda: next(states))
            if t not in wanted:
                continue
            sims = (net.evaluate_batch(hard_decisions(L, net)) == Yb).mean(axis=1)
            per_target_ms = watch.ms / len(Yb)
            rows.extend(
                SweepRow(inst.label, inst.index, sl.start + b, t, float(sim), per_target_ms)
                for b, sim in enumerate(sims)
            )
    rows.sort(key=lambda r: (r.y, r.t))
    return rows


def table_instance(
    inst: Instance,
    n_targets: int,
    t_max: int,
    n_samples: int = N_SAMPLES,
    l_clamp: float = L_CLAMP,
    timing: bool = True,
) -> list[TableRow]:
    """Infer marginals for each target, then sample ``n_samples`` inputs and count valid/unique preimages."""
    net = inst.net
    graph = FactorGraph(net)
    _, Y = inst.targets(n_targets)
    seeds = inst.sample_seeds(n_targets)
    params = InferenceParams(t_max, l_clamp)
    rows = []
    for sl in batches(n_targets, batch_size(graph)):
        watch = Stopwatch(timing)
        final = watch.time(lambda: list(graph.iterate(Y[sl], params))[-1])
        share = watch.elapsed / (sl.stop - sl.start)
        for b in range(sl.start, sl.stop):
            m = MarginalSet(final[b - sl.start].copy(), t_max)
            sample_watch = Stopwatch(timing)
            report = sample_watch.time(lambda: collect_preimages(net, Y[b], m, n_samples, seeds[b]))
            wall_ms = (share * 1000 + sample_watch.ms) if timing else 0.
            rows.append(TableRow(inst.label, inst.index, b, report.solved, report.valid_count, report.unique_count, wall_ms))
    return rows


def validate_instance(
    inst: Instance,
    targets: Optional[Sequence[Sequence[int]]] = None,
    n_targets: int = 10,
    t_max: Optional[int] = None,
    n_samples: int = N_SAMPLES,
    l_clamp: float = L_CLAMP,
    limit_N: int = ORACLE_MAX_N,
) -> list[ValidateRow]:
    """Compare inferred marginals and sampling rates with the exhaustive preimage set of each target."""
    net = inst.net
    Y = np.asarray(targets, dtype=np.uint8).reshape(-1, net.M) if targets is not None else inst.targets(n_targets)[1]
    seeds = inst.sample_seeds(len(Y))
    params = InferenceParams(t_max if t_max is not None else 2 * net.depth, l_clamp)
    rows = []
    for b, y in enumerate(Y):
        y = tuple(int(v) for v in y)
        exact = enumerate_preimages(net, y, limit_N)
        m = run_inference(net, y, params)
        distance = marginal_distance(exact_marginals(exact, net.N), m, net) if exact.cardinality else None
        inference_seed, uniform_seed = spawn_seeds(seeds[b], 2)
        rows.append(ValidateRow(
            type=inst.label,
            net=inst.index,
            y=format_bits(y),
            omega=exact.cardinality,
            distance=distance,
            inference_rate=collect_preimages(net, y, m, n_samples, inference_seed).valid_rate,
            uniform_rate=uniform_report(net, y, n_samples, uniform_seed).valid_rate,
            uniform_exact=exact.cardinality / (1 << net.N),
        ))
    return rows


def scaling(
    n_totals: Sequence[int],
    k_max: int = 5,
    depth: int = 7,
    runs: int = 10,
    t_max: Optional[int] = None,
    function_type: str = FUNCTION_TYPES[0],
    seed: int = 0,
) -> list[ScalingRow]:
    """Median ``run_inference`` wall time per network size, with in/out counts proportional to the desk preset."""
    rows = []
    params = InferenceParams(t_max if t_max is not None else 2 * depth)
    for n_total in n_totals:
        cfg = EnsembleConfig(
            n_total=n_total,
            n_in=max(k_max, n_total // 12),
            n_out=n_total // 2,
            depth=depth,
            k_max=k_max,
            function_type=function_type,
            seed=seed,
        )
        net = random_network(cfg)
        rng = np.random.default_rng(seed)
        y = net.evaluate(rng.integers(0, 2, size=net.N))
        times = []
        for _ in range(runs):
            start = perf_counter()
            run_inference(net, y, params)
            times.append((perf_counter() - start) * 1000)
        rows.append(ScalingRow(n_total, float(np.median(times)), runs))
    return rows
