from __future__ import annotations

import sys
from contextlib import contextmanager
from typing import Optional, Sequence

from click import Choice, UsageError, argument, group, option, pass_context, pass_obj
from utz import err

from bnpre.experiments import (
    ExperimentResult, Instance, file_instance, generate_ensemble, scaling as run_scaling,
    sweep_instance, table_instance, validate_instance,
)
from bnpre.msgpass import hard_decision, run_inference, similarity
from bnpre.netgen import FUNCTION_TYPES, EnsembleConfig, InfeasibleConfigError, random_network
from bnpre.network import K_MAX, Network, NetworkError, read_network, serialize_network, write_network
from bnpre.oracle import ORACLE_MAX_N, OracleLimitError
from bnpre.sampler import collect_preimages
from bnpre.utils import (
    BNPRE_K_MAX_VAR, BNPRE_ORACLE_MAX_N_VAR, BNPRE_SEED_VAR, BNPRE_THREADS_VAR, POSITIVE_INT,
    ensemble_opts, env_default, fmt, format_bits, inference_params, k_max_opt, l_clamp_opt, l_clamp_value,
    n_samples_opt, net_opt, no_timing_opt, out_fd, out_opt, parse_bits, preset_opt, rows_opt, run_all, seed_opt,
    t_max_opt, threads_opt,
)

SOLVED = 0
UNSOLVED = 1
USAGE_ERROR = 2
INPUT_ERROR = 3


@contextmanager
def input_errors():
    """Report unreadable/invalid inputs on stderr and exit with ``INPUT_ERROR``."""
    try:
        yield
    except (NetworkError, OracleLimitError, InfeasibleConfigError, OSError) as e:
        err(f"{type(e).__name__}: {e}")
        sys.exit(INPUT_ERROR)


def load_network(path: Optional[str], k_max: Optional[int]) -> Network:
    if not path:
        raise UsageError("-n/--net is required")
    return read_network(path, k_max=env_default(k_max, BNPRE_K_MAX_VAR, K_MAX))


def parse_t_list(spec: Optional[str], depth: int) -> list[int]:
    """``"1,2,5"`` or ``"1-28"``; defaults to ``1..4·depth``."""
    if not spec:
        return list(range(1, 4 * depth + 1))
    t_list = []
    try:
        for part in spec.split(','):
            lo, _, hi = part.partition('-')
            t_list.extend(range(int(lo), int(hi or lo) + 1))
    except ValueError:
        raise UsageError(f"Invalid -t/--t-list {spec!r}; expected e.g. '1,2,5' or '1-28'")
    if not t_list or min(t_list) < 1:
        raise UsageError(f"-t/--t-list must name iteration counts ≥ 1, got {spec!r}")
    return sorted(set(t_list))


def load_instances(
    log,
    net_path: Optional[str],
    preset: str,
    n_total: Optional[int],
    n_in: Optional[int],
    n_out: Optional[int],
    depth: Optional[int],
    k_max: Optional[int],
    function_types: str,
    nets: int,
    seed: int,
    threads: int,
) -> tuple[list[Instance], int]:
    """Instances to run, plus the depth used for iteration defaults."""
    if net_path:
        net = load_network(net_path, k_max)
        return [ file_instance(net, seed) ], net.depth
    overrides = dict(n_total=n_total, n_in=n_in, n_out=n_out, depth=depth, k_max=k_max)
    overrides = { k: v for k, v in overrides.items() if v is not None }
    if 'k_max' not in overrides and (env_k_max := env_default(None, BNPRE_K_MAX_VAR, None)):
        overrides['k_max'] = env_k_max
    instances = []
    cfg = None
    for function_type in (FUNCTION_TYPES if function_types == 'AB' else [ function_types ]):
        cfg = EnsembleConfig.preset(preset, function_type=function_type, seed=seed, **overrides)
        instances.extend(generate_ensemble(cfg, nets, seed, threads=threads, log=log))
    return instances, cfg.depth


@group('bnpre')
@option('-v', '--verbose', is_flag=True, help="Log progress to stderr")
@pass_context
def cli(ctx, verbose: bool):
    """Find preimages of feed-forward Boolean networks by message passing and sampling."""
    ctx.obj = dict(log=err if verbose else None)


@cli.command('solve')
@k_max_opt
@l_clamp_opt
@net_opt
@out_opt
@n_samples_opt
@seed_opt
@t_max_opt
@argument('y_spec')
def solve(
    k_max: Optional[int],
    l_clamp: Optional[float],
    net_path: Optional[str],
    out_path: Optional[str],
    n_samples: int,
    seed: Optional[int],
    t_max: Optional[int],
    y_spec: str,
):
    """Infer in-node marginals for target output Y_SPEC (a bit string in out-node order), then sample preimages.

    Exits 0 if at least one preimage was found, 1 otherwise.
    """
    with input_errors():
        net = load_network(net_path, k_max)
    y = parse_bits(y_spec, net.M)
    params = inference_params(t_max, l_clamp, net.depth)
    m = run_inference(net, y, params)
    report = collect_preimages(net, y, m, n_samples, env_default(seed, BNPRE_SEED_VAR, 0))
    x_hat = hard_decision(m, net)
    with out_fd(out_path) as write:
        for node, L in zip(net.in_nodes, m.inputs(net)):
            write([ 'llr', node, fmt(L) ])
        write([ 'hard_decision', format_bits(x_hat) ])
        write([ 'similarity', fmt(similarity(y, net.evaluate(x_hat))) ])
        write([ 'samples', report.samples_drawn ])
        write([ 'valid', report.valid_count ])
        write([ 'unique', report.unique_count ])
        for x in report.unique_preimages:
            write([ 'preimage', format_bits(x) ])
    sys.exit(SOLVED if report.solved else UNSOLVED)


@cli.command('sweep')
@ensemble_opts
@l_clamp_opt
@net_opt
@no_timing_opt
@out_opt
@rows_opt
@seed_opt
@threads_opt
@option('-t', '--t-list', help="Iteration counts to record: '1,2,5' or '1-28' (default: 1..4·depth)")
@pass_obj
def sweep(
    obj: dict,
    preset: str,
    n_total: Optional[int],
    n_in: Optional[int],
    n_out: Optional[int],
    depth: Optional[int],
    k_max: Optional[int],
    function_types: str,
    nets: int,
    ys: int,
    l_clamp: Optional[float],
    net_path: Optional[str],
    no_timing: bool,
    out_path: Optional[str],
    rows: bool,
    seed: Optional[int],
    threads: Optional[int],
    t_list: Optional[str],
):
    """Mean hard-decision similarity of f(x̃) to y, per iteration count."""
    seed = env_default(seed, BNPRE_SEED_VAR, 0)
    threads = env_default(threads, BNPRE_THREADS_VAR, 1)
    with input_errors():
        instances, net_depth = load_instances(obj['log'], net_path, preset, n_total, n_in, n_out, depth, k_max, function_types, nets, seed, threads)
    ts = parse_t_list(t_list, net_depth)
    l_clamp = l_clamp_value(l_clamp)
    results = run_all(
        [ lambda inst=inst: sweep_instance(inst, ts, ys, l_clamp, timing=not no_timing) for inst in instances ],
        threads,
    )
    result = ExperimentResult([ row for rs in results for row in rs ])
    with out_fd(out_path) as write:
        if rows:
            write(result.header())
            for row in result.rows:
                write([ row.type, row.net, row.y, row.t, fmt(row.similarity), fmt(row.wall_ms) ])
        else:
            write([ 'type', 't', 'mean_similarity', 'rows' ])
            for (typ, t), group_rows in result.groups('type', 't').items():
                write([ typ, t, fmt(result.mean('similarity', group_rows)), len(group_rows) ])


@cli.command('table')
@ensemble_opts
@l_clamp_opt
@net_opt
@no_timing_opt
@out_opt
@rows_opt
@n_samples_opt
@seed_opt
@t_max_opt
@threads_opt
@pass_obj
def table(
    obj: dict,
    preset: str,
    n_total: Optional[int],
    n_in: Optional[int],
    n_out: Optional[int],
    depth: Optional[int],
    k_max: Optional[int],
    function_types: str,
    nets: int,
    ys: int,
    l_clamp: Optional[float],
    net_path: Optional[str],
    no_timing: bool,
    out_path: Optional[str],
    rows: bool,
    n_samples: int,
    seed: Optional[int],
    t_max: Optional[int],
    threads: Optional[int],
):
    """Solved fraction and mean valid/unique preimage counts from sampling the inferred marginals.

    The `mean_wall_ms` column varies between runs; pass -T/--no-timing for byte-identical output across runs and thread counts.
    """
    seed = env_default(seed, BNPRE_SEED_VAR, 0)
    threads = env_default(threads, BNPRE_THREADS_VAR, 1)
    with input_errors():
        instances, net_depth = load_instances(obj['log'], net_path, preset, n_total, n_in, n_out, depth, k_max, function_types, nets, seed, threads)
    params = inference_params(t_max, l_clamp, net_depth)
    results = run_all(
        [ lambda inst=inst: table_instance(inst, ys, params.t_max, n_samples, params.l_clamp, timing=not no_timing) for inst in instances ],
        threads,
    )
    result = ExperimentResult([ row for rs in results for row in rs ])
    with out_fd(out_path) as write:
        if rows:
            write(result.header())
            for row in result.rows:
                write([ row.type, row.net, row.y, int(row.solved), row.valid, row.unique, fmt(row.wall_ms) ])
        else:
            write([ 'type', 'nets', 'ys', 'n_samples', 'solved_pct', 'mean_valid', 'mean_unique', 'mean_wall_ms' ])
            for (typ,), group_rows in result.groups('type').items():
                write([
                    typ,
                    len({ row.net for row in group_rows }),
                    len(group_rows),
                    n_samples,
                    fmt(100 * result.mean('solved', group_rows)),
                    fmt(result.mean('valid', group_rows)),
                    fmt(result.mean('unique', group_rows)),
                    fmt(result.mean('wall_ms', group_rows)),
                ])


@cli.command('validate')
@ensemble_opts
@l_clamp_opt
@option('-l', '--limit-n', type=POSITIVE_INT, default=None, help=f"Max in-nodes to enumerate exhaustively; falls back to ${BNPRE_ORACLE_MAX_N_VAR}, else {ORACLE_MAX_N}")
@net_opt
@out_opt
@n_samples_opt
@seed_opt
@t_max_opt
@threads_opt
@option('-Y', '--target', 'targets', multiple=True, help="Target output bit string (repeatable; with -n/--net, replaces random targets)")
@pass_obj
def validate(
    obj: dict,
    preset: str,
    n_total: Optional[int],
    n_in: Optional[int],
    n_out: Optional[int],
    depth: Optional[int],
    k_max: Optional[int],
    function_types: str,
    nets: int,
    ys: int,
    l_clamp: Optional[float],
    limit_n: Optional[int],
    net_path: Optional[str],
    out_path: Optional[str],
    n_samples: int,
    seed: Optional[int],
    t_max: Optional[int],
    threads: Optional[int],
    targets: Sequence[str],
):
    """Cross-check inferred marginals and sampling rates against exhaustive enumeration."""
    seed = env_default(seed, BNPRE_SEED_VAR, 0)
    threads = env_default(threads, BNPRE_THREADS_VAR, 1)
    limit_n = env_default(limit_n, BNPRE_ORACLE_MAX_N_VAR, ORACLE_MAX_N)
    l_clamp = l_clamp_value(l_clamp)
    with input_errors():
        instances, _ = load_instances(obj['log'], net_path, preset, n_total, n_in, n_out, depth, k_max, function_types, nets, seed, threads)
    ys_given = None
    if targets:
        if not net_path:
            raise UsageError("-Y/--target requires -n/--net")
        ys_given = [ parse_bits(spec, instances[0].net.M, 'target') for spec in targets ]
    with input_errors():
        results = run_all(
            [
                lambda inst=inst: validate_instance(inst, ys_given, ys, t_max, n_samples, l_clamp, limit_n)
                for inst in instances
            ],
            threads,
        )
    result = ExperimentResult([ row for rs in results for row in rs ])
    with out_fd(out_path) as write:
        write([ 'type', 'net', 'y', 'omega', 'distance', 'inference_rate', 'uniform_rate', 'uniform_exact' ])
        for row in result.rows:
            write([
                row.type, row.net, row.y, row.omega, fmt(row.distance),
                fmt(row.inference_rate), fmt(row.uniform_rate), fmt(row.uniform_exact),
            ])


@cli.command('scaling')
@option('-d', '--depth', type=int, default=7, help="Interior layers")
@option('-f', '--function-type', type=Choice(FUNCTION_TYPES), default=FUNCTION_TYPES[0], help="Gate ensemble: A or B")
@k_max_opt
@option('-N', '--n-totals', default='240,480,960', help="Comma-separated network sizes")
@out_opt
@option('-R', '--runs', type=POSITIVE_INT, default=10, help="Timed runs per size; the median is reported")
@seed_opt
@t_max_opt
def scaling(
    depth: int,
    function_type: str,
    k_max: Optional[int],
    n_totals: str,
    out_path: Optional[str],
    runs: int,
    seed: Optional[int],
    t_max: Optional[int],
):
    """Median inference wall time per network size."""
    try:
        sizes = [ int(n) for n in n_totals.split(',') ]
    except ValueError:
        raise UsageError(f"Invalid -N/--n-totals {n_totals!r}")
    with input_errors():
        rows = run_scaling(
            sizes,
            k_max=env_default(k_max, BNPRE_K_MAX_VAR, 5),
            depth=depth,
            runs=runs,
            t_max=t_max,
            function_type=function_type,
            seed=env_default(seed, BNPRE_SEED_VAR, 0),
        )
    with out_fd(out_path) as write:
        write([ 'n_total', 'median_ms', 'runs' ])
        for row in rows:
            write([ row.n_total, fmt(row.median_ms), row.runs ])


@cli.command('gen')
@option('-d', '--depth', type=int, help="Interior layers (overrides the preset)")
@option('-f', '--function-type', type=Choice(FUNCTION_TYPES), default=FUNCTION_TYPES[0], help="Gate ensemble: A (any function) or B (unate)")
@option('-i', '--n-in', type=int, help="In-nodes (overrides the preset)")
@k_max_opt
@option('-m', '--n-out', type=int, help="Out-nodes (overrides the preset)")
@option('-N', '--n-total', type=int, help="Nodes (overrides the preset)")
@out_opt
@preset_opt
@seed_opt
@pass_obj
def gen(
    obj: dict,
    depth: Optional[int],
    function_type: str,
    n_in: Optional[int],
    k_max: Optional[int],
    n_out: Optional[int],
    n_total: Optional[int],
    out_path: Optional[str],
    preset: str,
    seed: Optional[int],
):
    """Emit a random network in bn v1 format."""
    overrides = dict(n_total=n_total, n_in=n_in, n_out=n_out, depth=depth, k_max=k_max)
    overrides = { k: v for k, v in overrides.items() if v is not None }
    with input_errors():
        cfg = EnsembleConfig.preset(preset, function_type=function_type, seed=env_default(seed, BNPRE_SEED_VAR, 0), **overrides)
        net = random_network(cfg, log=obj['log'])
    if not out_path or out_path == '-':
        sys.stdout.write(serialize_network(net))
    else:
        with input_errors():
            write_network(net, out_path)


@cli.command('info')
@k_max_opt
@net_opt
def info(k_max: Optional[int], net_path: Optional[str]):
    """Print structural statistics of a network file."""
    with input_errors():
        net = load_network(net_path, k_max)
    for key, value in net.stats().items():
        print(f"{key}: {fmt(value) if isinstance(value, float) else value}")


main = cli


if __name__ == '__main__':
    cli()
