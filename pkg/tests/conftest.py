"""Shared fixtures for the expensive training/benchmark runs.

Everything here is session-scoped: each heavy configuration executes once
and every dependent test reads the same frozen result. Wall-clock cost per
fixture is recorded in ``fixture_seconds`` so acceptance tests can assert
their runtime budgets over everything they consumed.
"""

import time

import pytest

from ricl.bench import BenchSpec, robustness_sweep, run_benchmark
from ricl.datagen import (
    PrefixKind,
    gen_examples,
    gen_eval_set,
    gen_task,
    get_preset,
    robustness_grid,
)
from ricl.inner import InnerConfig
from ricl.linalg import RngStream
from ricl.ricl import OneStepLookahead, RiclConfig, ricl_train

fixture_seconds = {}


def _timed(key, fn):
    t0 = time.perf_counter()
    out = fn()
    fixture_seconds[key] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def timings():
    return fixture_seconds


@pytest.fixture(scope="session")
def p9_rows():
    """Main comparison cells: both corrupted kinds, 5 seeds, all methods."""
    spec = BenchSpec(
        kinds=(PrefixKind.noisy(0.8), PrefixKind.imbalanced(0.8)),
        seeds=(0, 1, 2, 3, 4),
        methods=("icl-uniform", "ricl", "laricl"),
        jobs=4,
    )
    return _timed("p9_rows", lambda: run_benchmark(spec))


@pytest.fixture(scope="session")
def uniform_sweep_rows():
    """Full two-grid robustness sweep with the uniform baseline only."""
    spec = BenchSpec(methods=("icl-uniform",), seeds=(0, 1, 2, 3, 4), jobs=4)
    return _timed("uniform_sweep_rows", lambda: robustness_sweep(spec))


@pytest.fixture(scope="session")
def mean_grid_rows():
    """Reweighted vs uniform across the whole imbalance-mean grid."""
    spec = BenchSpec(
        kinds=tuple(PrefixKind.imbalanced(mu) for mu in robustness_grid()["means"]),
        seeds=(0, 1, 2, 3, 4),
        methods=("icl-uniform", "ricl"),
        jobs=4,
    )
    return _timed("mean_grid_rows", lambda: run_benchmark(spec))


def _train_clean(seed: int) -> object:
    pre = get_preset("ci")
    base = RngStream(seed, 0xBE7C4)
    task = gen_task(pre.n, pre.d, base.substream(0), m=pre.m)
    prefix = gen_examples(PrefixKind.random(), task, base.substream(1))
    valset = gen_eval_set(pre.n_val, task, base.substream(2))
    cfg = RiclConfig(
        mode="scalar",
        outer_steps=200,
        outer_lr=1.0,
        inner=InnerConfig(max_steps=60, step_size=0.25, grad_tol=1e-10),
        batch_size=50,
        meta_method=OneStepLookahead(eta=0.5),
        seed=seed,
    )
    return ricl_train(prefix, valset, cfg).trace


@pytest.fixture(scope="session")
def clean_traces_10seeds():
    """200-step clean-prefix training traces for seeds 0..9."""
    return _timed("clean_traces_10seeds", lambda: [_train_clean(s) for s in range(10)])


def mean_mse(rows, method: str, kind: str | None = None, param: float | None = None):
    """Mean over seeds of the raw MSE column after filtering."""
    vals = [
        r.mse
        for r in rows
        if r.method == method
        and (kind is None or r.kind == kind)
        and (param is None or r.param == param)
    ]
    assert vals, f"no rows for method={method} kind={kind} param={param}"
    return sum(vals) / len(vals)


@pytest.fixture(scope="session")
def mse_of():
    return mean_mse
