"""Acceptance gate: twelve numbered criteria, one test (and one verdict line) each.

Run with ``pytest -v tests/test_acceptance.py`` to see the per-criterion
pass/fail lines. Each test prints its measured margin as well, visible with
``-s`` or in the failure report.
"""

import math
import subprocess
import time

import numpy as np
import pytest

from ricl.bench import mse
from ricl.datagen import PrefixKind, gen_examples, gen_eval_set, gen_task
from ricl.inner import Example, InnerConfig, solve_weighted_softmax, stack_examples
from ricl.laricl import LariclConfig, laricl_grad, laricl_train, laricl_val_loss
from ricl.linalg import RngStream, frobenius_norm_sq, kron, operator_norm, vec
from ricl.reweight import RegConfig, lift_scalar_weights, reg_term, transformer_loss
from ricl.ricl import (
    RiclConfig,
    Unrolled,
    convergence_stats,
    lr_rule,
    ricl_train,
)
from ricl.softmax import softmax_predict, sr_gradient, sr_loss, theoretical_bounds

_R = 5.0


def _report(label: str, ok: bool, detail: str) -> None:
    print(f"{label} {'PASS' if ok else 'FAIL'}: {detail}")


def _bounded_instance(g, n, d):
    """A with operator norm <= 5, b with norm <= 1, plus an unconstrained x."""
    a = g.standard_normal((n, d))
    a *= g.uniform(0.05, 1.0) * _R / operator_norm(a)
    b = g.standard_normal(n)
    b *= g.uniform(0.05, 1.0) / np.linalg.norm(b)
    x = 3.0 * g.standard_normal(d)
    return a, b, x


def test_p01_gradient_matches_finite_differences():
    g = RngStream(0, 0xACC1).generator()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(g.integers(2, 9))
        d = int(g.integers(2, 9))
        a = g.standard_normal((n, d))
        b = g.standard_normal(n)
        b /= max(1.0, float(np.linalg.norm(b)))
        inst = Example(a, b)
        x = g.standard_normal(d)
        ana = sr_gradient(inst, x)
        h = 1e-5
        fd = np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd[i] = (sr_loss(inst, x + e) - sr_loss(inst, x - e)) / (2 * h)
        rel = float(np.linalg.norm(ana - fd)) / max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    _report("P1", ok, f"worst rel err {worst:.3e}, {elapsed:.2f}s over 100 instances")
    assert worst <= 1e-6
    assert elapsed < 5.0


def _thousand_bounded():
    g = RngStream(0, 0xACC2).generator()
    for _ in range(1000):
        n = int(g.integers(2, 9))
        d = int(g.integers(2, 9))
        yield _bounded_instance(g, n, d)


def test_p02_gradient_norm_bound():
    bound = theoretical_bounds(8, 8, _R).grad_bound
    worst = 0.0
    for a, b, x in _thousand_bounded():
        worst = max(worst, float(np.linalg.norm(sr_gradient(Example(a, b), x))))
    ok = worst <= bound
    _report("P2", ok, f"max gradient norm {worst:.4f} vs bound {bound}, 1000 instances")
    assert worst <= bound


def test_p03_residual_norm_bound():
    bound = theoretical_bounds(8, 8, _R).residual_bound
    worst = 0.0
    for a, b, x in _thousand_bounded():
        worst = max(worst, float(np.linalg.norm(softmax_predict(a, x) - b)))
    ok = worst <= bound
    _report("P3", ok, f"max residual norm {worst:.4f} vs bound {bound}, 1000 instances")
    assert worst <= bound


def test_p04_gradient_lipschitz_in_log_space():
    g = RngStream(0, 0xACC3).generator()
    log_lip = theoretical_bounds(8, 8, _R).log_lipschitz
    worst = -math.inf
    checked = 0
    for _ in range(100):
        n = int(g.integers(2, 9))
        d = int(g.integers(2, 9))
        a, b, _ = _bounded_instance(g, n, d)
        inst = Example(a, b)
        x = g.standard_normal(d)
        y = g.standard_normal(d)
        for v in (x, y):
            nv = float(np.linalg.norm(v))
            if nv > _R:
                v *= g.uniform(0.1, 1.0) * _R / nv
        diff = float(np.linalg.norm(sr_gradient(inst, x) - sr_gradient(inst, y)))
        dist = float(np.linalg.norm(x - y))
        if diff == 0.0 or dist == 0.0:
            continue
        # the bound's constant overflows float64, so compare logarithms
        margin = math.log(diff) - (log_lip + math.log(dist))
        worst = max(worst, margin)
        checked += 1
    ok = checked >= 90 and worst <= 0.0
    _report("P4", ok, f"max log-space margin {worst:.2f} over {checked} pairs")
    assert checked >= 90
    assert worst <= 0.0


def test_p05_lifted_weights_reproduce_weighted_loss():
    g = RngStream(0, 0xACC4).generator()
    worst_loss_gap = 0.0
    worst_reg = 0.0
    cases = [(1, 4)] * 100 + [(5, 4)] * 20
    for m, n in cases:
        examples = []
        for _ in range(m):
            a = g.standard_normal((n, n))
            b = g.standard_normal(n)
            b /= max(1.0, float(np.linalg.norm(b)))
            examples.append(Example(a, b))
        w = g.uniform(0.1, 3.0, size=m)
        x = g.standard_normal(n)
        params = lift_scalar_weights(w, examples)
        lifted = transformer_loss(x, examples, params)
        direct = 2.0 * sum(wi * sr_loss(e, x) for wi, e in zip(w, examples))
        worst_loss_gap = max(worst_loss_gap, abs(lifted - direct))
        worst_reg = max(worst_reg, abs(reg_term(params, examples, RegConfig(gamma=1.3))))
    ok = worst_loss_gap <= 1e-9 and worst_reg <= 1e-12
    _report(
        "P5",
        ok,
        f"max loss gap {worst_loss_gap:.3e} (120 instances), max lifted reg {worst_reg:.3e}",
    )
    assert worst_loss_gap <= 1e-9
    assert worst_reg <= 1e-12


def test_p06_frobenius_matches_vectorized_objective():
    g = RngStream(0, 0xACC5).generator()
    worst = 0.0
    for _ in range(100):
        p = int(g.integers(2, 6))
        q = int(g.integers(2, 6))
        r = int(g.integers(2, 6))
        s = int(g.integers(2, 6))
        a1 = g.standard_normal((p, q))
        xmat = g.standard_normal((q, s))
        a2 = g.standard_normal((r, s))
        bmat = g.standard_normal((p, r))
        lhs = frobenius_norm_sq(a1 @ xmat @ a2.T - bmat)
        rvec = kron(a1, a2) @ vec(xmat) - vec(bmat)
        rhs = float(rvec @ rvec)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = worst <= 1e-12
    _report("P6", ok, f"max identity gap {worst:.3e} over 100 instances")
    assert worst <= 1e-12


def test_p07_monotone_descent_and_stationarity(clean_traces_10seeds):
    worst_rise = -math.inf
    for trace in clean_traces_10seeds:
        assert len(trace) == 201
        rises = np.diff(np.asarray(trace.l_valid))
        worst_rise = max(worst_rise, float(rises.max()))

    # constructed fixed points: validation labels equal to the predictions of
    # the uniform-weight solve, so the meta-gradient vanishes identically and
    # the iterate must not move
    frozen_ok = True
    inner = InnerConfig(max_steps=60, step_size=0.25, grad_tol=1e-10)
    for seed in (0, 1):
        g = RngStream(seed, 0xACC6).generator()
        x_true = g.standard_normal(3)
        prefix = [
            Example(a := g.standard_normal((3, 3)), softmax_predict(a, x_true))
            for _ in range(4)
        ]
        x0 = solve_weighted_softmax(prefix, np.ones(4), inner).x_star
        valset = [
            Example(a := g.standard_normal((3, 3)), softmax_predict(a, x0))
            for _ in range(6)
        ]
        cfg = RiclConfig(
            mode="scalar",
            outer_steps=5,
            inner=inner,
            batch_size=6,
            meta_method=Unrolled(steps=60, step_size=0.25),
            seed=seed,
        )
        res = ricl_train(prefix, valset, cfg)
        frozen_ok &= np.array_equal(res.weights, np.ones(4))
        frozen_ok &= all(v == 0.0 for v in res.trace.grad_norm_sq)
        frozen_ok &= all(s == 0.0 for s in res.trace.step_size)

    # converse: a visibly nonzero gradient must produce a strict decrease
    g = RngStream(0, 0xACC7).generator()
    x_true = g.standard_normal(3)
    prefix = [
        Example(a := g.standard_normal((3, 3)), softmax_predict(a, x_true))
        for _ in range(4)
    ]
    valset = [
        Example(
            a := g.standard_normal((3, 3)),
            softmax_predict(a, x_true) + 0.4 * g.standard_normal(3),
        )
        for _ in range(6)
    ]
    cfg = RiclConfig(
        mode="scalar",
        outer_steps=1,
        outer_lr=1e4,
        inner=inner,
        batch_size=6,
        meta_method=Unrolled(steps=60, step_size=0.25),
        seed=0,
    )
    res = ricl_train(prefix, valset, cfg)
    moved_ok = res.trace.grad_norm_sq[0] > 0.0 and res.trace.l_valid[1] < res.trace.l_valid[0]

    ok = worst_rise <= 1e-12 and frozen_ok and moved_ok
    _report(
        "P7",
        ok,
        f"max rise {worst_rise:.3e} over 10 traces x 200 steps; "
        f"fixed point frozen={frozen_ok}, nonzero gradient descended={moved_ok}",
    )
    assert worst_rise <= 1e-12
    assert frozen_ok
    assert moved_ok


def test_p08_gradient_decay_rate():
    base = RngStream(0, 0xBE7C4)
    task = gen_task(8, 8, base.substream(0), m=20)
    prefix = gen_examples(PrefixKind.random(), task, base.substream(1))
    valset = gen_eval_set(200, task, base.substream(2))
    cfg = RiclConfig(
        mode="scalar",
        outer_steps=1600,
        outer_lr=1e4,
        inner=InnerConfig(max_steps=60, step_size=0.25, grad_tol=1e-10),
        batch_size=len(valset),  # full batch: the trace records the true gradient
        meta_method=Unrolled(steps=60, step_size=0.25),
        seed=0,
    )
    t0 = time.perf_counter()
    res = ricl_train(prefix, valset, cfg)
    elapsed = time.perf_counter() - t0
    horizons = (100, 400, 1600)
    stats = convergence_stats(res.trace, horizons)
    mins = stats.min_grad_sq
    c100 = convergence_stats(res.trace, [100]).c_fit
    nonincreasing = all(b <= a for a, b in zip(mins, mins[1:]))
    rate_ok = all(m * math.sqrt(t) <= 2.0 * c100 for m, t in zip(mins, horizons))
    ok = nonincreasing and rate_ok and elapsed < 120.0
    _report(
        "P8",
        ok,
        f"min grad^2 {mins[0]:.3e}/{mins[1]:.3e}/{mins[2]:.3e} at T=100/400/1600, "
        f"C={c100:.3e}, {elapsed:.0f}s",
    )
    assert nonincreasing
    assert rate_ok
    assert elapsed < 120.0


def test_p09_reweighting_beats_uniform(p9_rows, uniform_sweep_rows, mse_of, timings):
    ricl_noisy = mse_of(p9_rows, "ricl", kind="noisy")
    ricl_imb = mse_of(p9_rows, "ricl", kind="imbalanced")
    laricl_noisy = mse_of(p9_rows, "laricl", kind="noisy")
    uni_noisy = mse_of(p9_rows, "icl-uniform", kind="noisy")
    uni_imb = mse_of(p9_rows, "icl-uniform", kind="imbalanced")

    stds = sorted({r.param for r in uniform_sweep_rows if r.kind == "noisy"})
    curve = [
        mse_of(uniform_sweep_rows, "icl-uniform", kind="noisy", param=s) for s in stds
    ]
    grid_ok = all(b >= a - 1e-12 for a, b in zip(curve, curve[1:]))

    elapsed = timings.get("p9_rows", 0.0) + timings.get("uniform_sweep_rows", 0.0)
    ok = (
        ricl_noisy <= 0.8 * uni_noisy
        and ricl_imb <= 0.8 * uni_imb
        and laricl_noisy <= 1.0 * uni_noisy
        and grid_ok
        and elapsed < 600.0
    )
    _report(
        "P9",
        ok,
        f"ricl/uniform noisy {ricl_noisy / uni_noisy:.3f}, imbalanced "
        f"{ricl_imb / uni_imb:.3f}; laricl/uniform noisy {laricl_noisy / uni_noisy:.3f}; "
        f"uniform noise curve nondecreasing={grid_ok}; fixtures {elapsed:.0f}s",
    )
    assert ricl_noisy <= 0.8 * uni_noisy
    assert ricl_imb <= 0.8 * uni_imb
    assert laricl_noisy <= 1.0 * uni_noisy
    assert grid_ok
    assert elapsed < 600.0


def test_p09_linear_aggregate_on_shifted_prefix(p9_rows, mse_of):
    # A mean shift of the prefix features leaves every softmax prediction
    # unchanged, so the uniform baseline is already near its floor there,
    # while the linear-aggregate method pays a linear-readout penalty on
    # softmax-generated labels. See the repository notes for the analysis.
    laricl_imb = mse_of(p9_rows, "laricl", kind="imbalanced")
    uni_imb = mse_of(p9_rows, "icl-uniform", kind="imbalanced")
    ok = laricl_imb <= 1.0 * uni_imb
    _report("P9b", ok, f"laricl/uniform imbalanced {laricl_imb / uni_imb:.3e}")
    assert laricl_imb <= 1.0 * uni_imb


def test_p10_linear_aggregate_closed_form():
    g = RngStream(0, 0xACC8).generator()
    worst_rec = 0.0
    for _ in range(20):
        x_true = g.standard_normal(4)
        prefix = [
            Example(a := g.standard_normal((4, 4)), a @ x_true) for _ in range(6)
        ]
        valset = [
            Example(a := g.standard_normal((4, 4)), a @ x_true) for _ in range(8)
        ]
        res = laricl_train(prefix, valset, LariclConfig(outer_steps=0))
        worst_rec = max(worst_rec, float(np.linalg.norm(res.x_star - x_true)))

    worst_fd = 0.0
    for seed in range(100):
        g = RngStream(seed, 0xACC9).generator()
        x_true = g.standard_normal(3)
        prefix = [
            Example(
                a := g.standard_normal((3, 3)),
                a @ x_true + 0.5 * g.standard_normal(3),
            )
            for _ in range(2)
        ]
        valset = [
            Example(a := g.standard_normal((3, 3)), a @ x_true) for _ in range(5)
        ]
        w = np.abs(g.standard_normal(2 * 4)) + 0.5
        ana = laricl_grad(w, prefix, valset)
        h = 1e-6
        fd = np.zeros_like(w)
        for i in range(w.shape[0]):
            e = np.zeros_like(w)
            e[i] = h
            fd[i] = (
                laricl_val_loss(w + e, prefix, valset)
                - laricl_val_loss(w - e, prefix, valset)
            ) / (2 * h)
        rel = float(np.linalg.norm(ana - fd)) / max(float(np.linalg.norm(fd)), 1e-12)
        worst_fd = max(worst_fd, rel)
    ok = worst_rec <= 1e-9 and worst_fd <= 1e-6
    _report(
        "P10",
        ok,
        f"worst recovery {worst_rec:.3e} (20 tasks), worst grad rel err "
        f"{worst_fd:.3e} (100 instances)",
    )
    assert worst_rec <= 1e-9
    assert worst_fd <= 1e-6


def test_p11_benchmark_byte_determinism(tmp_path):
    def run(out_dir, *extra):
        proc = subprocess.run(
            ["ricl", "bench", "--preset", "ci", "--seed", "1", "--out-dir",
             str(out_dir), *extra],
            capture_output=True,
            text=True,
            timeout=1800,
        )
        assert proc.returncode == 0, proc.stderr
        return (out_dir / "bench.csv").read_bytes()

    t0 = time.perf_counter()
    first = run(tmp_path / "r1")
    second = run(tmp_path / "r2")
    parallel = run(tmp_path / "r8", "--jobs", "8")
    elapsed = time.perf_counter() - t0
    ok = first == second == parallel
    _report(
        "P11",
        ok,
        f"rerun identical={first == second}, jobs 1 vs 8 identical={first == parallel}, "
        f"{len(first)} bytes, {elapsed:.0f}s for 3 runs",
    )
    assert first == second
    assert first == parallel


def test_p12_lr_rule_arithmetic():
    got = lr_rule(8, 8, 5.0, 10)
    expect = (
        math.log(20.0)
        - (math.log(8.0) + 2.0 * math.log(8.0) + 125.0)
        - 2.0 * math.log(20.0)
    )
    gap = abs(got - expect)
    ok = gap <= 1e-10
    _report("P12", ok, f"log step gap {gap:.3e}")
    assert gap <= 1e-10
