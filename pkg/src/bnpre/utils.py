from __future__ import annotations

import asyncio
import csv
import sys
from asyncio import gather
from contextlib import contextmanager
from math import isfinite
from typing import Any, Callable, Generator, Optional, Sequence, TypeVar

from click import BadParameter, Choice, FloatRange, IntRange, UsageError, option
from utz import env

from bnpre.msgpass import L_CLAMP, InferenceParams
from bnpre.netgen import FUNCTION_TYPES, PRESETS, Log
from bnpre.sampler import N_SAMPLES

T = TypeVar('T')
Write = Callable[[Sequence[Any]], None]

BNPRE_SEED_VAR = 'BNPRE_SEED'
BNPRE_THREADS_VAR = 'BNPRE_THREADS'
BNPRE_K_MAX_VAR = 'BNPRE_K_MAX'
BNPRE_L_CLAMP_VAR = 'BNPRE_L_CLAMP'
BNPRE_ORACLE_MAX_N_VAR = 'BNPRE_ORACLE_MAX_N'


def env_default(value: Optional[T], var: str, default: T, typ: Callable[[str], T] = int) -> T:
    """Explicit option value, else ``$var``, else ``default``."""
    if value is not None:
        return value
    raw = env.get(var)
    return typ(raw) if raw else default


def parse_bits(spec: str, length: int, name: str = 'y') -> tuple[int, ...]:
    spec = spec.strip()
    if not spec or any(c not in '01' for c in spec):
        raise BadParameter(f"{name} must be a string of 0s and 1s, got {spec!r}")
    if len(spec) != length:
        raise BadParameter(f"{name} has {len(spec)} bits; the network has {length}")
    return tuple(int(c) for c in spec)


def format_bits(bits: Sequence[int]) -> str:
    return ''.join(str(int(b)) for b in bits)


def fmt(value: Optional[float]) -> str:
    return '' if value is None else f'{value:.6f}'


@contextmanager
def out_fd(out_path: Optional[str]) -> Generator[Write, None, None]:
    """CSV row writer for ``out_path``, or stdout if it's absent or ``-``."""
    if not out_path or out_path == '-':
        yield csv.writer(sys.stdout, lineterminator='\n').writerow
    else:
        with open(out_path, 'w', newline='') as f:
            yield csv.writer(f, lineterminator='\n').writerow


def run_all(calls: Sequence[Callable[[], T]], threads: int = 1) -> list[T]:
    """Run zero-arg ``calls``, up to ``threads`` at a time; results keep the order of ``calls``."""
    if threads <= 1:
        return [ call() for call in calls ]

    async def run_concurrently() -> list[T]:
        sem = asyncio.Semaphore(threads)

        async def run(call: Callable[[], T]) -> T:
            async with sem:
                return await asyncio.to_thread(call)

        return await gather(*map(run, calls))

    return asyncio.run(run_concurrently())


POSITIVE_INT = IntRange(min=1)
POSITIVE_FLOAT = FloatRange(min=0, min_open=True)

seed_opt = option('-s', '--seed', type=int, default=None, help=f"Root RNG seed; falls back to ${BNPRE_SEED_VAR}, else 0")
threads_opt = option('-j', '--threads', type=POSITIVE_INT, default=None, help=f"Networks to process concurrently; falls back to ${BNPRE_THREADS_VAR}, else 1")
out_opt = option('-o', '--out', 'out_path', help="Write CSV here (default: stdout)")
net_opt = option('-n', '--net', 'net_path', help="Network file (bn v1)")
preset_opt = option('-p', '--preset', type=Choice(list(PRESETS)), default='desk', help="Ensemble size preset")
l_clamp_opt = option('-L', '--l-clamp', type=POSITIVE_FLOAT, default=None, help=f"Clamp magnitude for LLRs; falls back to ${BNPRE_L_CLAMP_VAR}, else 50")
k_max_opt = option('-k', '--k-max', type=int, default=None, help=f"Max gate in-degree; overrides the preset, falls back to ${BNPRE_K_MAX_VAR}")
no_timing_opt = option('-T', '--no-timing', is_flag=True, help="Write 0 in wall-time columns, making output byte-reproducible")
n_samples_opt = option('-S', '--n-samples', type=POSITIVE_INT, default=N_SAMPLES, help="Inputs to draw from the inferred marginals, per target")
t_max_opt = option('-t', '--t-max', type=POSITIVE_INT, default=None, help="Iterations (default: 2 × the network's depth)")
rows_opt = option('-r', '--rows', is_flag=True, help="Emit per-(network, y) rows instead of aggregates")


def l_clamp_value(l_clamp: Optional[float]) -> float:
    """``-L``, else $BNPRE_L_CLAMP, else ``L_CLAMP``; must be positive and finite."""
    try:
        value = env_default(l_clamp, BNPRE_L_CLAMP_VAR, L_CLAMP, float)
    except ValueError:
        raise UsageError(f"${BNPRE_L_CLAMP_VAR} must be a number, got {env.get(BNPRE_L_CLAMP_VAR)!r}")
    if not (value > 0 and isfinite(value)):
        raise UsageError(f"-L/--l-clamp must be positive and finite, got {value}")
    return value


def inference_params(t_max: Optional[int], l_clamp: Optional[float], depth: int) -> InferenceParams:
    """An explicit ``t_max`` wins over the ``2 × depth`` default."""
    return InferenceParams(t_max if t_max is not None else 2 * depth, l_clamp_value(l_clamp))


def ensemble_opts(fn):
    """Options describing a random ensemble, on top of ``--preset``."""
    for opt in reversed([
        preset_opt,
        option('-N', '--n-total', type=int, help="Nodes per network (overrides the preset)"),
        option('-i', '--n-in', type=int, help="In-nodes per network (overrides the preset)"),
        option('-m', '--n-out', type=int, help="Out-nodes per network (overrides the preset)"),
        option('-d', '--depth', type=int, help="Interior layers (overrides the preset)"),
        k_max_opt,
        option('-f', '--function-type', 'function_types', type=Choice([ *FUNCTION_TYPES, 'AB' ]), default='AB', help="Gate ensemble: A (any function), B (unate), or both"),
        option('-b', '--nets', type=POSITIVE_INT, default=10, help="Networks per ensemble"),
        option('-y', '--ys', type=POSITIVE_INT, default=10, help="Target outputs per network, each f(x) for a uniform random x"),
    ]):
        fn = opt(fn)
    return fn
