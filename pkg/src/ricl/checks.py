"""Named runtime verification checks.

Every documented property in this package has exactly one named check here;
the ``verify`` CLI subcommand and the invariants test suite both run this
registry, so removing a property makes a named check (and its test id)
disappear. Check names are prefixed by the module they exercise.

All randomness is drawn from fixed RngStream constants, so a check either
passes on every machine or fails on every machine.
"""

from __future__ import annotations

import functools
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .linalg import (
    RngStream,
    gauss_matrix,
    gauss_vector,
    kron,
    least_squares,
    operator_norm,
    vec,
)
from .softmax import (
    SrInstance,
    batch_loss,
    batch_predict,
    softmax_predict,
    sr_gradient,
    sr_loss,
    theoretical_bounds,
)
from .inner import (
    Example,
    InnerConfig,
    aggregate_linear,
    merge_weight_vector,
    solve_weighted_linear,
    solve_weighted_softmax,
    stack_examples,
)
from .reweight import (
    RegConfig,
    ReweightParams,
    apply_reweight,
    assemble_prefix,
    lift_scalar_weights,
    reg_term,
    transformer_loss,
)
from .ricl import (
    FiniteDifference,
    OneStepLookahead,
    RiclConfig,
    lr_rule,
    meta_gradient,
    ricl_train,
)
from .laricl import LariclConfig, laricl_grad, laricl_train, laricl_val_loss
from .datagen import PrefixKind, gen_eval_set, gen_examples, gen_task, save_dataset
from . import bench as bench_mod


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


_REGISTRY: dict = {}


def _register(fn):
    _REGISTRY[fn.__name__] = fn
    return fn


def check_names() -> tuple:
    return tuple(_REGISTRY)


def run_check(name: str) -> CheckResult:
    if name not in _REGISTRY:
        raise KeyError(f"unknown check {name!r}")
    try:
        detail = _REGISTRY[name]()
    except AssertionError as exc:
        return CheckResult(name, False, str(exc))
    except Exception as exc:  # a crashed check is a failed check
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, True, detail)


def run_all(names=None) -> list:
    return [run_check(n) for n in (names if names is not None else check_names())]


# ---------------------------------------------------------------------------
# linalg
# ---------------------------------------------------------------------------


@_register
def linalg_kron_vec_identity() -> str:
    rng = RngStream(11, 101)
    g = rng.generator()
    worst = 0.0
    for _ in range(100):
        p, q, r, s = (int(v) for v in g.integers(1, 5, size=4))
        a1 = g.standard_normal((p, q))
        x = g.standard_normal((q, r))
        a2 = g.standard_normal((s, r))
        b = g.standard_normal((p, s))
        direct = float(np.sum((a1 @ x @ a2.T - b) ** 2))
        # row-major vec pairs with kron(left, right) in this codebase
        vectorized = float(np.sum((kron(a1, a2) @ vec(x) - vec(b)) ** 2))
        rel = abs(direct - vectorized) / max(direct, 1e-300)
        worst = max(worst, rel)
    assert worst <= 1e-12, f"matrix/vectorized objective gap {worst:.3e} > 1e-12"
    return f"100 instances, worst relative gap {worst:.3e}"


@_register
def linalg_least_squares_orthogonality() -> str:
    rng = RngStream(12, 102)
    worst = 0.0
    for i in range(100):
        a = gauss_matrix(8, 4, rng.substream(2 * i))
        b = gauss_vector(8, rng.substream(2 * i + 1))
        x = least_squares(a, b)
        resid = float(np.linalg.norm(a.T @ (a @ x - b)))
        bound = 1e-8 * operator_norm(a) * float(np.linalg.norm(b))
        worst = max(worst, resid / bound)
        assert resid <= bound, f"instance {i}: A^T r = {resid:.3e} > {bound:.3e}"
    return f"100 instances, worst residual at {worst:.3f} of the allowance"


@_register
def linalg_gauss_matrix_reproducible() -> str:
    first = gauss_matrix(5, 7, RngStream(123, 9))
    second = gauss_matrix(5, 7, RngStream(123, 9))
    assert first.tobytes() == second.tobytes(), "same (seed, stream) produced different bytes"
    other = gauss_matrix(5, 7, RngStream(123, 10))
    assert first.tobytes() != other.tobytes(), "distinct streams produced identical bytes"
    return "bitwise equal for fixed (seed, stream); distinct stream differs"


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------


def _random_sr(g, n, d, r_budget=5.0):
    a = g.standard_normal((n, d))
    scale = (0.2 + 0.8 * g.random()) * r_budget / max(operator_norm(a), 1e-12)
    a = a * scale
    b = g.standard_normal(n)
    b = b * (g.random() / max(np.linalg.norm(b), 1e-12))
    x = g.standard_normal(d)
    x = x * (g.random() * r_budget / max(np.linalg.norm(x), 1e-12))
    return SrInstance(a, b, r_budget), x


@_register
def softmax_normalization() -> str:
    g = RngStream(21, 201).generator()
    worst = 0.0
    for _ in range(100):
        n, d = (int(v) for v in g.integers(2, 9, size=2))
        a = g.standard_normal((n, d)) * 3.0
        x = g.standard_normal(d) * 3.0
        f = softmax_predict(a, x)
        worst = max(worst, abs(float(f.sum()) - 1.0))
        assert np.all(f > 0.0) and np.all(f <= 1.0), "probabilities left (0, 1]"
    assert worst <= 1e-12, f"normalization error {worst:.3e} > 1e-12"
    return f"100 instances, worst |sum - 1| = {worst:.3e}"


@_register
def softmax_gradient_fd() -> str:
    # moderate logits: saturated softmax has a vanishing gradient, which
    # turns the relative comparison into pure finite-difference noise
    g = RngStream(22, 202).generator()
    h, worst = 1e-5, 0.0
    for _ in range(100):
        n, d = (int(v) for v in g.integers(2, 9, size=2))
        a = g.standard_normal((n, d))
        b = g.standard_normal(n)
        inst = SrInstance(a, b / max(np.linalg.norm(b), 1.0), 5.0)
        x = g.standard_normal(d)
        grad = sr_gradient(inst, x)
        fd = np.empty(d)
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            fd[j] = (sr_loss(inst, x + e) - sr_loss(inst, x - e)) / (2 * h)
        rel = float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-10))
        worst = max(worst, rel)
    assert worst <= 1e-6, f"gradient vs finite differences {worst:.3e} > 1e-6"
    return f"100 instances, worst relative error {worst:.3e}"


@_register
def softmax_gradient_bound() -> str:
    g = RngStream(23, 203).generator()
    worst, violations = 0.0, 0
    for _ in range(1000):
        inst, x = _random_sr(g, 8, 8, r_budget=5.0)
        norm = float(np.linalg.norm(sr_gradient(inst, x)))
        worst = max(worst, norm)
        violations += norm > 20.0
    assert violations == 0, f"{violations} / 1000 instances exceed the bound 20"
    return f"1000 instances, max gradient norm {worst:.3f} <= 20"


@_register
def softmax_residual_bound() -> str:
    g = RngStream(23, 203).generator()  # same draw family as the gradient bound
    worst, violations = 0.0, 0
    for _ in range(1000):
        inst, x = _random_sr(g, 8, 8, r_budget=5.0)
        norm = float(np.linalg.norm(softmax_predict(inst.a, x) - inst.b))
        worst = max(worst, norm)
        violations += norm > 2.0
    assert violations == 0, f"{violations} / 1000 instances exceed the bound 2"
    return f"1000 instances, max residual norm {worst:.3f} <= 2"


@_register
def softmax_lipschitz_log() -> str:
    g = RngStream(24, 204).generator()
    cap = theoretical_bounds(8, 8, 5.0).log_lipschitz
    worst = -np.inf
    for _ in range(100):
        inst, x = _random_sr(g, 8, 8, r_budget=5.0)
        y = g.standard_normal(8)
        y = y * (g.random() * 5.0 / max(np.linalg.norm(y), 1e-12))
        dg = float(np.linalg.norm(sr_gradient(inst, x) - sr_gradient(inst, y)))
        dx = float(np.linalg.norm(x - y))
        if dg == 0.0 or dx == 0.0:
            continue
        lhs = np.log(dg) - np.log(dx)
        worst = max(worst, lhs)
        assert lhs <= cap, f"log ratio {lhs:.3f} exceeds log constant {cap:.3f}"
    return f"100 pairs, max log ratio {worst:.3f} <= {cap:.3f}"


# ---------------------------------------------------------------------------
# inner solver
# ---------------------------------------------------------------------------


def _toy_prefix(seed, kind=None, n=4, m=6):
    base = RngStream(seed, 0x1C4E)
    task = gen_task(n, n, base.substream(0), m=m)
    kind = kind if kind is not None else PrefixKind.random()
    return gen_examples(kind, task, base.substream(1)), task, base


@_register
def inner_grad_tol_at_solution() -> str:
    from .softmax import batch_gradient

    examples, _, base = _toy_prefix(31)
    w = 1.0 + RngStream(31, 0x1C4F).generator().random(len(examples))
    cfg = InnerConfig(max_steps=5000, step_size=0.25, grad_tol=1e-8)
    res = solve_weighted_softmax(examples, w, cfg)
    assert res.steps_taken < cfg.max_steps, "solver hit the step cap; cannot certify the tolerance"
    a, b = stack_examples(examples)
    gnorm = float(np.linalg.norm(batch_gradient(a, b, res.x_star, weights=w)))
    assert gnorm <= cfg.grad_tol, f"gradient norm {gnorm:.3e} > tolerance {cfg.grad_tol:.0e}"
    return f"converged in {res.steps_taken} steps with gradient norm {gnorm:.3e}"


@_register
def inner_weight_scaling() -> str:
    examples, _, _ = _toy_prefix(32, kind=PrefixKind.noisy(0.5))
    a, b = stack_examples(examples)
    w = 0.5 + RngStream(32, 0x1C4F).generator().random(len(examples))
    lam = 3.7
    # scaling the weights by lam scales the objective's curvature by lam,
    # so the stable step shrinks by the same factor
    x1 = solve_weighted_softmax(examples, w, InnerConfig(20000, 0.25, 1e-13)).x_star
    x2 = solve_weighted_softmax(examples, lam * w, InnerConfig(20000, 0.25 / lam, 1e-13)).x_star
    rels = []
    for weights in (w, lam * w):
        l1 = batch_loss(a, b, x1, weights=weights)
        l2 = batch_loss(a, b, x2, weights=weights)
        rels.append(abs(l1 - l2) / max(abs(l1), 1e-300))
    worst = max(rels)
    assert worst <= 1e-6, f"cross-evaluated losses differ by {worst:.3e} > 1e-6 relative"
    return f"w vs {lam}w solutions agree to {worst:.3e} relative in loss"


@_register
def inner_linear_consistent_residual() -> str:
    g = RngStream(33, 0x1C50).generator()
    worst = 0.0
    m, n = 6, 4
    for _ in range(20):
        x_true = g.standard_normal(n)
        examples = []
        for _ in range(m):
            a = g.standard_normal((n, n))
            examples.append(Example(a, a @ x_true))
        scalars = 0.5 + g.random(m)  # per-example scalars, expanded to per-row form
        w = merge_weight_vector(np.tile(scalars[:, None], (1, n)), scalars)
        x = solve_weighted_linear(examples, w)
        resid = max(float(np.linalg.norm(ex.a @ x - ex.b)) for ex in examples)
        worst = max(worst, resid)
    assert worst <= 1e-9, f"consistent-data residual {worst:.3e} > 1e-9"
    return f"20 instances, worst residual {worst:.3e}"


# ---------------------------------------------------------------------------
# reweighting equivalence
# ---------------------------------------------------------------------------


def _lift_gap(g, m):
    examples = []
    for _ in range(m):
        a = g.standard_normal((4, 4))
        b = g.standard_normal(4)
        examples.append(Example(a, b / max(np.linalg.norm(b), 1.0)))
    x = g.standard_normal(4)
    w = g.random(m) * 2.0
    a_stack, b_stack = stack_examples(examples)
    r = batch_predict(a_stack, x) - b_stack
    weighted = float(w @ np.sum(r * r, axis=1))  # sum_i w_i ||f_i - b_i||^2
    lifted = transformer_loss(x, examples, lift_scalar_weights(w, examples))
    return abs(weighted - lifted)


@_register
def reweight_lift_single() -> str:
    g = RngStream(41, 301).generator()
    worst = max(_lift_gap(g, 1) for _ in range(100))
    assert worst <= 1e-9, f"single-pair lifted loss gap {worst:.3e} > 1e-9"
    return f"100 single-pair instances, worst gap {worst:.3e}"


@_register
def reweight_lift_multi() -> str:
    g = RngStream(42, 302).generator()
    worst = max(_lift_gap(g, 5) for _ in range(100))
    assert worst <= 1e-9, f"five-pair lifted loss gap {worst:.3e} > 1e-9"
    return f"100 five-pair instances, worst gap {worst:.3e}"


@_register
def reweight_bias_affine() -> str:
    g = RngStream(43, 303).generator()
    examples, _, _ = _toy_prefix(43, m=3)
    prefix = assemble_prefix(examples)
    m, n, d = 3, 4, 4
    w = g.random(m * (n + 1)) + 0.5
    b1 = g.standard_normal((m * (n + 1), d))
    b2 = g.standard_normal((m * (n + 1), d))
    alpha, beta = 1.7, -0.4
    out = {}
    for tag, bias in (("zero", 0.0 * b1), ("b1", b1), ("b2", b2), ("mix", alpha * b1 + beta * b2)):
        params = ReweightParams(w, bias, m, n, d)
        out[tag] = apply_reweight(prefix, params).assembled
    lhs = out["mix"] - out["zero"]
    rhs = alpha * (out["b1"] - out["zero"]) + beta * (out["b2"] - out["zero"])
    gap = float(np.max(np.abs(lhs - rhs)))
    assert gap <= 1e-12, f"bias response is not affine: gap {gap:.3e}"
    return f"affine in the additive term to {gap:.3e}"


@_register
def reweight_reg_zero_iff_lift() -> str:
    g = RngStream(44, 304).generator()
    examples, _, _ = _toy_prefix(44, m=3)
    cfg = RegConfig(gamma=1.0)
    w = g.random(3) * 2.0
    lifted = lift_scalar_weights(w, examples)
    at_lift = reg_term(lifted, examples, cfg)
    assert at_lift <= 1e-12, f"penalty {at_lift:.3e} > 1e-12 at a lifted point"
    bumped = lifted.replace(bias=lifted.bias + 1e-3)
    off_lift = reg_term(bumped, examples, cfg)
    assert off_lift > 1e-12, f"penalty stayed {off_lift:.3e} after leaving the lift conditions"
    # rebuild the zero set directly from its defining equations
    a_stack, b_stack = stack_examples(examples)
    m, n, d = a_stack.shape
    params = ReweightParams.identity(m, n, d)
    wa = g.random((m, n)) + 0.5
    wb = g.random(m) + 0.5
    wvec = np.concatenate([np.concatenate([wa[i], [wb[i]]]) for i in range(m)])
    bias = np.zeros((m * (n + 1), d))
    blocks = bias.reshape(m, n + 1, d)
    blocks[:, :n, :] = (1.0 - wa)[..., None] * a_stack
    blocks[:, n, :] = (wb - 1.0)[:, None] * b_stack
    manual = params.replace(w=wvec, bias=bias)
    at_manual = reg_term(manual, examples, cfg)
    assert at_manual <= 1e-12, f"penalty {at_manual:.3e} > 1e-12 on a constructed zero"
    return f"zero at lift ({at_lift:.1e}), positive off it ({off_lift:.1e})"


# ---------------------------------------------------------------------------
# reweighted in-context learning (outer loop)
# ---------------------------------------------------------------------------


def _ricl_toy(seed, kind):
    base = RngStream(seed, 0x51C1)
    task = gen_task(4, 4, base.substream(0), m=6)
    prefix = gen_examples(kind, task, base.substream(1))
    val = gen_eval_set(40, task, base.substream(2))
    return prefix, val


@_register
def ricl_monotone_descent() -> str:
    inner = InnerConfig(max_steps=120, step_size=0.25, grad_tol=1e-10)
    worst = -np.inf
    for seed in range(10):
        prefix, val = _ricl_toy(seed, PrefixKind.noisy(0.6))
        cfg = RiclConfig(mode="scalar", outer_steps=25, outer_lr=1.0, inner=inner,
                         batch_size=40, meta_method=OneStepLookahead(eta=0.5), seed=seed)
        trace = ricl_train(prefix, val, cfg).trace
        lv = np.asarray(trace.l_valid)
        worst = max(worst, float(np.max(lv[1:] - lv[:-1])))
    assert worst <= 1e-12, f"validation loss rose by {worst:.3e} within a recorded step"
    return f"10 seeds x 25 steps, max single-step rise {worst:.3e}"


@_register
def ricl_stationarity() -> str:
    # labels softmax(A*0) = uniform make w = ones an exact stationary point
    g = RngStream(52, 0x51C2).generator()
    n = 4
    flat = np.full(n, 1.0 / n)
    prefix = [Example(g.standard_normal((n, n)), flat.copy()) for _ in range(5)]
    val = [Example(g.standard_normal((n, n)), flat.copy()) for _ in range(20)]
    inner = InnerConfig(max_steps=50, step_size=0.25, grad_tol=1e-12)
    cfg = RiclConfig(mode="scalar", outer_steps=3, outer_lr=5.0, inner=inner,
                     batch_size=20, meta_method=OneStepLookahead(eta=0.5), seed=0)
    trace = ricl_train(prefix, val, cfg).trace
    assert all(gn == 0.0 for gn in trace.grad_norm_sq), (
        f"gradient at the fixed point is {max(trace.grad_norm_sq):.3e}, expected exactly 0")
    assert len(set(trace.l_valid)) == 1, "validation loss moved despite a zero gradient"
    return "zero gradient holds the iterate and the loss exactly fixed"


@_register
def ricl_lookahead_matches_fd() -> str:
    inner = InnerConfig(max_steps=200, step_size=0.25, grad_tol=1e-10)
    worst = 0.0
    for seed in range(20):
        prefix, val = _ricl_toy(100 + seed, PrefixKind.noisy(0.5))
        w = 1.0 + 0.3 * RngStream(seed, 0x51C3).generator().random(len(prefix))
        x_t = solve_weighted_softmax(prefix, w, inner).x_star
        analytic = meta_gradient(prefix, w, x_t, val, OneStepLookahead(eta=0.5))
        fd = meta_gradient(prefix, w, x_t, val, FiniteDifference(h=1e-6, eta=0.5))
        rel = float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12))
        worst = max(worst, rel)
    assert worst <= 1e-6, f"lookahead gradient vs finite differences {worst:.3e} > 1e-6"
    return f"20 instances, worst relative error {worst:.3e}"


@_register
def ricl_lr_rule_monotone() -> str:
    batches = [lr_rule(8, 8, 5.0, b) for b in (1, 2, 10, 100)]
    assert all(x < y for x, y in zip(batches, batches[1:])), (
        f"log step is not increasing in batch size: {batches}")
    radii = [lr_rule(8, 8, r, 10) for r in (4.5, 5.0, 6.0, 8.0)]
    assert all(x > y for x, y in zip(radii, radii[1:])), (
        f"log step is not decreasing in the norm budget: {radii}")
    return "log step grows with batch size and shrinks with the norm budget"


# ---------------------------------------------------------------------------
# linear-approximation variant
# ---------------------------------------------------------------------------


def _laricl_toy(seed, m=3, n=3):
    g = RngStream(seed, 0x1A81).generator()
    x_true = g.standard_normal(n)
    examples = [Example(g.standard_normal((n, n)), g.standard_normal(n)) for _ in range(m)]
    val = []
    for _ in range(12):
        a = g.standard_normal((n, n))
        val.append(Example(a, a @ x_true))
    return examples, val


@_register
def laricl_grad_matches_fd() -> str:
    worst = 0.0
    h = 1e-6
    for seed in range(100):
        g = RngStream(seed, 0x1A82).generator()
        n = int(g.integers(2, 5))
        m = int(g.integers(1, 4))
        x_true = g.standard_normal(n)
        examples = [Example(g.standard_normal((n, n)), g.standard_normal(n)) for _ in range(m)]
        val = []
        for _ in range(8):
            a = g.standard_normal((n, n))
            val.append(Example(a, a @ x_true))
        w = 0.5 + g.random(m * (n + 1))  # flat per-row weight layout
        ridge = 0.1
        analytic = laricl_grad(w, examples, val, ridge=ridge)
        k = m * (n + 1)
        fd = np.empty(k)
        for i in range(k):
            e = np.zeros(k)
            e[i] = h
            fd[i] = (laricl_val_loss(w + e, examples, val, ridge=ridge)
                     - laricl_val_loss(w - e, examples, val, ridge=ridge)) / (2 * h)
        rel = float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12))
        worst = max(worst, rel)
    assert worst <= 1e-6, f"closed-form gradient vs finite differences {worst:.3e} > 1e-6"
    return f"100 instances, worst relative error {worst:.3e}"


@_register
def laricl_monotone_descent() -> str:
    worst = -np.inf
    for seed in range(10):
        examples, val = _laricl_toy(seed, m=4, n=3)
        cfg = LariclConfig(outer_steps=60, outer_lr=0.5, ridge=0.05)
        trace = laricl_train(examples, val, cfg).trace
        lv = np.asarray(trace.l_valid)
        worst = max(worst, float(np.max(lv[1:] - lv[:-1])))
    assert worst <= 1e-12, f"validation loss rose by {worst:.3e} within a recorded step"
    return f"10 seeds x 60 steps, max single-step rise {worst:.3e}"


@_register
def laricl_normal_equations() -> str:
    examples, val = _laricl_toy(7, m=3, n=3)
    worst = 0.0
    for steps in (0, 2, 5, 10, 20):
        cfg = LariclConfig(outer_steps=steps, outer_lr=0.5, ridge=0.0)
        res = laricl_train(examples, val, cfg)
        a_agg, b_agg = aggregate_linear(examples, res.weights)
        resid = float(np.linalg.norm(a_agg.T @ (a_agg @ res.x_star - b_agg)))
        bound = 1e-8 * operator_norm(a_agg) * float(np.linalg.norm(b_agg))
        worst = max(worst, resid / max(bound, 1e-300))
        assert resid <= bound, (
            f"after {steps} steps the normal equations residual {resid:.3e} exceeds {bound:.3e}")
    return f"checked at 5 training horizons, worst residual at {worst:.3f} of the allowance"


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


@_register
def datagen_simplex_labels() -> str:
    worst = 0.0
    for kind in (PrefixKind.random(), PrefixKind.imbalanced(0.8)):
        for seed in (0, 1):
            base = RngStream(seed, 0xDA7A)
            task = gen_task(8, 8, base.substream(0), m=20)
            for ex in gen_examples(kind, task, base.substream(1)):
                worst = max(worst, abs(float(ex.b.sum()) - 1.0))
                assert np.all(ex.b > 0.0) and np.all(ex.b < 1.0), (
                    f"{kind.label}: label entries left (0, 1)")
    assert worst <= 1e-12, f"label sum error {worst:.3e} > 1e-12"
    return f"clean kinds stay on the simplex, worst |sum - 1| = {worst:.3e}"


@_register
def datagen_determinism() -> str:
    def build():
        base = RngStream(5, 0xDA7B)
        task = gen_task(8, 8, base.substream(0), m=20)
        return task, gen_examples(PrefixKind.noisy(0.8), task, base.substream(1))

    task1, ex1 = build()
    task2, ex2 = build()
    same = all(np.array_equal(a.a, b.a) and np.array_equal(a.b, b.b)
               for a, b in zip(ex1, ex2))
    assert same, "regenerating from the same seed changed the examples"
    with tempfile.TemporaryDirectory() as tmp:
        p1 = os.path.join(tmp, "one.npz")
        p2 = os.path.join(tmp, "two.npz")
        save_dataset(p1, ex1, seed=5, kind=PrefixKind.noisy(0.8), x_true=task1.x_true)
        save_dataset(p2, ex2, seed=5, kind=PrefixKind.noisy(0.8), x_true=task2.x_true)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read(), "saved dataset bytes differ between identical runs"
    return "examples and saved file bytes are a pure function of (seed, spec)"


@_register
def datagen_label_norm_bound() -> str:
    worst = 0.0
    for kind in (PrefixKind.random(), PrefixKind.imbalanced(0.8)):
        base = RngStream(3, 0xDA7C)
        task = gen_task(8, 8, base.substream(0), m=20)
        for ex in gen_examples(kind, task, base.substream(1)):
            worst = max(worst, float(np.linalg.norm(ex.b)))
    assert worst <= 1.0, f"clean label norm {worst:.6f} > 1"
    return f"clean kinds keep ||b|| <= 1, max {worst:.4f}"


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def _verify_bench_spec() -> "bench_mod.BenchSpec":
    # trimmed instance of the real pipeline: 2 seeds, few outer steps
    return replace(bench_mod.BenchSpec(), seeds=(0, 1), ricl_outer_steps=8)


@functools.lru_cache(maxsize=1)
def _verify_bench_rows() -> tuple:
    return tuple(bench_mod.run_benchmark(_verify_bench_spec()))


@_register
def bench_minmax_order_preserved() -> str:
    g = RngStream(61, 401).generator()
    for _ in range(50):
        vals = list(g.standard_normal(int(g.integers(2, 9))) * 10.0)
        scaled = bench_mod.minmax_scale(vals)
        assert int(np.argmin(vals)) == int(np.argmin(scaled)), "argmin moved under scaling"
        assert int(np.argmax(vals)) == int(np.argmax(scaled)), "argmax moved under scaling"
        assert np.array_equal(np.argsort(vals, kind="stable"),
                              np.argsort(scaled, kind="stable")), "ordering changed under scaling"
    flat = bench_mod.minmax_scale([2.5, 2.5, 2.5])
    assert flat == [0.0, 0.0, 0.0], f"all-equal input must scale to zeros, got {flat}"
    return "50 random vectors keep their ordering; all-equal maps to zeros"


@_register
def bench_reproducible_rows() -> str:
    spec = _verify_bench_spec()
    first = bench_mod.rows_to_csv(_verify_bench_rows())
    second = bench_mod.rows_to_csv(bench_mod.run_benchmark(spec))
    assert first == second, "two runs of the same spec produced different CSV bytes"
    threaded = bench_mod.rows_to_csv(bench_mod.run_benchmark(replace(spec, jobs=4)))
    assert first == threaded, "serial and 4-worker runs produced different CSV bytes"
    return f"{first.count(chr(10)) - 1} rows byte-identical across reruns and worker counts"


@_register
def bench_oracle_floor() -> str:
    rows = [r for r in _verify_bench_rows() if r.status == "ok"]
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.kind, r.param, r.method), []).append(r.mse)
    worst = 0.0
    for (kind, param, method), values in cells.items():
        if method == "oracle":
            continue
        oracle = float(np.mean(cells[(kind, param, "oracle")]))
        mean = float(np.mean(values))
        ratio = oracle / max(mean, 1e-300)
        worst = max(worst, ratio)
        assert oracle <= mean * 1.05, (
            f"oracle {oracle:.3e} beats its 5% allowance over {method} on {kind}({param})")
    return f"oracle at or below every method per cell; worst ratio {worst:.3e}"


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


@_register
def cli_command_purity() -> str:
    import contextlib
    import io

    from . import cli  # deferred: cli imports this module for `verify`

    args = ["gen", "--preset", "ci", "--seed", "3", "--kind", "noisy", "--param", "0.8"]
    payloads = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli.main(args + ["--out-dir", tmp])
            assert code == 0, f"gen exited with {code}"
            names = sorted(os.listdir(tmp))
            blob = []
            for name in names:
                with open(os.path.join(tmp, name), "rb") as f:
                    blob.append((name, f.read()))
            payloads.append(blob)
    assert payloads[0] == payloads[1], "re-running the same command changed its artifacts"
    names = ", ".join(name for name, _ in payloads[0])
    return f"gen twice produced identical artifacts ({names})"


@_register
def cli_verify_coverage() -> str:
    prefixes = ("linalg", "softmax", "inner", "reweight", "ricl",
                "laricl", "datagen", "bench", "cli")
    missing = [p for p in prefixes
               if not any(name.startswith(p + "_") for name in check_names())]
    assert not missing, f"modules without a registered check: {missing}"
    return f"{len(check_names())} checks cover all {len(prefixes)} module families"
