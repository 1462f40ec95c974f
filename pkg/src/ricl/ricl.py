"""Outer loop: reweight a prefix to minimize clean-validation loss.

The outer variable is either a per-example scalar weight vector ("scalar"
mode) or full row-wise reweighting parameters ("transformer" mode, the
(w, B) pair of :class:`ReweightParams`). Each outer step solves the inner
problem for the current weights, takes a meta-gradient of the validation
loss through a differentiable surrogate of that solve, and descends.

Meta-gradient surrogates
------------------------
``OneStepLookahead(eta)``: differentiate L_valid(x+) where
x+ = x_t - eta * grad_x P(x_t; theta), P the inner objective and x_t the
current inner solution (held fixed). The derivative is
    -eta * (d grad_x P / d theta)^T grad_x L_batch(x+),
computed with exact hand-derived vector-Jacobian products (verified against
central finite differences in the test suite).

``Unrolled(steps, step_size)``: differentiate through `steps` actual
gradient-descent steps from the inner init (reverse-mode over the unrolled
chain, using the inner objective's Hessian-vector products).

``FiniteDifference(h, eta)``: central differences of the same one-step
surrogate; the numeric oracle for OneStepLookahead.

Training records a :class:`TrainTrace` row per outer step: full-validation
loss, squared norm of the stepped gradient, and the step size actually used
(backtracking line search may shrink it; a zero step is accepted when no
decrease exists, which keeps the recorded loss monotone).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected, PreconditionViolation, ShapeMismatch
from .inner import InnerConfig, SolveResult, descend, solve_weighted_softmax, stack_examples
from .linalg import RngStream, as_vector
from .reweight import RegConfig, ReweightParams, reg_term
from .softmax import batch_gradient, batch_gradients, batch_hessian, batch_loss, theoretical_bounds

# Stream roles within one training run (substream indices of the run seed).
_STREAM_INIT = 0
_STREAM_BATCH = 1


@dataclass(frozen=True)
class OneStepLookahead:
    eta: float = 0.5


@dataclass(frozen=True)
class Unrolled:
    steps: int = 5
    step_size: float = 0.5


@dataclass(frozen=True)
class FiniteDifference:
    h: float = 1e-5
    eta: float = 0.5


@dataclass(frozen=True)
class RiclConfig:
    mode: str = "scalar"  # "scalar" | "transformer"
    outer_steps: int = 100
    outer_lr: float = 1.0
    inner: InnerConfig = field(default_factory=InnerConfig)
    batch_size: int = 32
    gamma: float = 0.0
    meta_method: object = field(default_factory=OneStepLookahead)
    weight_projection: str = "none"  # "none" | "nonneg"
    init: str | None = None  # None = mode default; "ones" | "gaussian"
    seed: int = 0
    line_search: bool = True
    max_halvings: int = 25

    def __post_init__(self):
        if self.mode not in ("scalar", "transformer"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.weight_projection not in ("none", "nonneg"):
            raise ValueError(f"unknown weight_projection {self.weight_projection!r}")
        if self.init not in (None, "ones", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.outer_steps < 0 or self.batch_size < 1 or self.gamma < 0:
            raise ValueError("outer_steps >= 0, batch_size >= 1, gamma >= 0 required")


@dataclass
class TrainTrace:
    """Per-step training record with a fixed CSV schema."""

    step: list = field(default_factory=list)
    l_valid: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    step_size: list = field(default_factory=list)

    HEADER = "step,l_valid,grad_norm_sq,step_size"

    def append(self, step: int, l_valid: float, grad_norm_sq: float, step_size: float):
        self.step.append(int(step))
        self.l_valid.append(float(l_valid))
        self.grad_norm_sq.append(float(grad_norm_sq))
        self.step_size.append(float(step_size))

    def __len__(self) -> int:
        return len(self.step)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(self.HEADER + "\n")
        for t, lv, gn, ss in zip(self.step, self.l_valid, self.grad_norm_sq, self.step_size):
            out.write(f"{t},{repr(float(lv))},{repr(float(gn))},{repr(float(ss))}\n")
        return out.getvalue()

    @staticmethod
    def from_csv(text: str) -> "TrainTrace":
        lines = [ln for ln in text.split("\n") if ln]
        if not lines or lines[0] != TrainTrace.HEADER:
            raise ShapeMismatch("trace CSV must start with the documented header")
        tr = TrainTrace()
        for ln in lines[1:]:
            t, lv, gn, ss = ln.split(",")
            tr.append(int(t), float(lv), float(gn), float(ss))
        return tr


@dataclass(frozen=True)
class RiclResult:
    weights: object  # ndarray (scalar mode) or ReweightParams (transformer mode)
    trace: TrainTrace
    x_star: np.ndarray


# ---------------------------------------------------------------------------
# Transformer-form inner objective: batched value / gradient / Hessian and
# the mixed parameter derivatives used by the meta-gradient.
# ---------------------------------------------------------------------------


class _TransformerProblem:
    """Caches the stacked pair arrays and evaluates the reweighted objective.

    Residual per pair: r_i = w_b_i * f(A~_i x) - (b_i + B_b_i), objective
    sum_i ||r_i||^2 (see the reweight module for why this form).
    """

    def __init__(self, examples):
        self.a_stack, self.b_stack = stack_examples(examples)
        self.m, self.n, self.d = self.a_stack.shape
        if self.n != self.d:
            raise ShapeMismatch("transformer mode requires square examples (n = d)")

    def _parts(self, params: ReweightParams):
        w_a, w_b = params.weight_blocks()
        b_a, b_b = params.bias_blocks()
        a_tilde = w_a[..., None] * self.a_stack + b_a
        target = self.b_stack + b_b
        return a_tilde, target, w_b

    @staticmethod
    def _softmax(a_tilde, x):
        z = a_tilde @ x
        z -= z.max(axis=1, keepdims=True)
        f = np.exp(z)
        f /= f.sum(axis=1, keepdims=True)
        return f

    def loss(self, params, x) -> float:
        a_tilde, target, w_b = self._parts(params)
        r = w_b[:, None] * self._softmax(a_tilde, x) - target
        return float(np.sum(r * r))

    def grad_x(self, params, x) -> np.ndarray:
        a_tilde, target, w_b = self._parts(params)
        f = self._softmax(a_tilde, x)
        r = w_b[:, None] * f - target
        s_r = f * r - f * np.sum(f * r, axis=1, keepdims=True)
        return 2.0 * np.einsum("mnd,mn->d", a_tilde, w_b[:, None] * s_r)

    def hessian_x(self, params, x) -> np.ndarray:
        a_tilde, target, w_b = self._parts(params)
        f = self._softmax(a_tilde, x)
        r = w_b[:, None] * f - target
        u = r + w_b[:, None] * f
        rho = np.sum(f * r, axis=1)
        fa = np.einsum("mn,mnd->md", f, a_tilde)
        sa = f[..., None] * a_tilde - f[..., None] * fa[:, None, :]
        usa = np.einsum("mn,mnd->md", u, sa)
        mm = u[..., None] * sa - f[..., None] * usa[:, None, :] - rho[:, None, None] * sa
        mm *= (2.0 * w_b)[:, None, None]
        return np.einsum("mnd,mne->de", a_tilde, mm)

    def grad_x_vjp(self, params, x, v) -> ReweightParams:
        """(d grad_x / d theta)^T v for every parameter block, exactly.

        Derivation: differentiate g = 2 w_b A~^T S r through its three A~
        occurrences (the transpose, S via z = A~x, r via f) and through
        (w_b, B_b) in r. S = diag(f) - f f^T is applied as a closure over f.
        """
        a_tilde, target, w_b = self._parts(params)
        f = self._softmax(a_tilde, x)
        r = w_b[:, None] * f - target

        def s_apply(t):  # (m, n) -> S_i t_i per pair
            return f * t - f * np.sum(f * t, axis=1, keepdims=True)

        a_vec = a_tilde @ v  # a = A~ v, (m, n)
        s = s_apply(r)
        sa = s_apply(a_vec)
        fr = np.sum(f * r, axis=1, keepdims=True)
        af = np.sum(a_vec * f, axis=1, keepdims=True)
        q = a_vec * r - fr * a_vec - af * r
        sq = s_apply(q)
        s2a = s_apply(sa)

        u_wb = 2.0 * (np.sum(a_vec * s, axis=1) + w_b * np.sum(f * sa, axis=1))
        u_bb = -2.0 * w_b[:, None] * sa  # (m, n) == (m, d)
        coef = sq + w_b[:, None] * s2a
        u_at = 2.0 * w_b[:, None, None] * (
            s[..., None] * v[None, None, :] + coef[..., None] * x[None, None, :]
        )
        u_ba = u_at
        u_wa = np.sum(u_at * self.a_stack, axis=2)

        w_grad = np.concatenate([u_wa, u_wb[:, None]], axis=1).ravel()
        bias_grad = np.concatenate([u_ba, u_bb[:, None, :]], axis=1).reshape(
            self.m * (self.n + 1), self.d
        )
        return ReweightParams(w_grad, bias_grad, self.m, self.n, self.d)

    def solve(self, params, cfg: InnerConfig) -> SolveResult:
        x0 = np.zeros(self.d) if cfg.init is None else as_vector(cfg.init, "init")
        return descend(
            lambda x: self.loss(params, x),
            lambda x: self.grad_x(params, x),
            x0,
            cfg,
        )


class _ScalarProblem:
    """Scalar-mode inner objective: sum_i w_i * 0.5 ||f_i(x) - b_i||^2."""

    def __init__(self, examples):
        self.examples = list(examples)
        self.a_stack, self.b_stack = stack_examples(examples)
        self.m, self.n, self.d = self.a_stack.shape

    def loss(self, w, x) -> float:
        return batch_loss(self.a_stack, self.b_stack, x, w)

    def grad_x(self, w, x) -> np.ndarray:
        return batch_gradient(self.a_stack, self.b_stack, x, w)

    def hessian_x(self, w, x) -> np.ndarray:
        return batch_hessian(self.a_stack, self.b_stack, x, w)

    def grad_x_vjp(self, w, x, v) -> np.ndarray:
        # d/dw_i of grad_x is the i-th per-example gradient.
        return batch_gradients(self.a_stack, self.b_stack, x) @ v

    def solve(self, w, cfg: InnerConfig) -> SolveResult:
        return solve_weighted_softmax(self.examples, w, cfg)


def _problem(examples, weights):
    if isinstance(weights, ReweightParams):
        return _TransformerProblem(examples)
    return _ScalarProblem(examples)


def _wsub(weights, grad, alpha):
    """weights - alpha * grad for either parameter container."""
    if isinstance(weights, ReweightParams):
        return weights.replace(
            w=weights.w - alpha * grad.w, bias=weights.bias - alpha * grad.bias
        )
    return weights - alpha * grad


def _wproject(weights, projection: str):
    if projection == "none":
        return weights
    if isinstance(weights, ReweightParams):
        return weights.replace(w=np.maximum(weights.w, 0.0))
    return np.maximum(weights, 0.0)


def _wfinite(weights) -> bool:
    if isinstance(weights, ReweightParams):
        return bool(np.all(np.isfinite(weights.w)) and np.all(np.isfinite(weights.bias)))
    return bool(np.all(np.isfinite(weights)))


def _gnorm_sq(grad) -> float:
    if isinstance(grad, ReweightParams):
        return float(grad.w @ grad.w + np.sum(grad.bias * grad.bias))
    return float(grad @ grad)


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------


def validation_loss(weights, examples, valset, inner_cfg: InnerConfig) -> float:
    """Solve the inner problem at ``weights`` and score the validation pairs.

    The score is always the plain (unweighted) softmax-regression loss
    sum_v 0.5 ||f(A_v x*) - b_v||^2, whichever mode produced x*.
    """
    prob = _problem(examples, weights)
    x_star = prob.solve(weights, inner_cfg).x_star
    va, vb = stack_examples(valset)
    return batch_loss(va, vb, x_star)


def meta_gradient(examples, weights, x_t, batch, method) -> object:
    """Gradient of the batch validation loss through the chosen surrogate.

    Returns the same container type as ``weights``: an (m,) array in scalar
    mode, a ReweightParams holding (dL/dw, dL/dB) in transformer mode.
    """
    prob = _problem(examples, weights)
    ba, bb = stack_examples(batch)

    if isinstance(method, OneStepLookahead):
        g_inner = prob.grad_x(weights, x_t)
        x_plus = x_t - method.eta * g_inner
        v = batch_gradient(ba, bb, x_plus)
        vjp = prob.grad_x_vjp(weights, x_t, v)
        return _wsub(_zeros_like(weights), vjp, method.eta)  # -eta * vjp

    if isinstance(method, FiniteDifference):
        return _fd_gradient(prob, weights, x_t, ba, bb, method)

    if isinstance(method, Unrolled):
        return _unrolled_gradient(prob, weights, ba, bb, method)

    raise TypeError(f"unknown meta method {method!r}")


def _zeros_like(weights):
    if isinstance(weights, ReweightParams):
        return weights.replace(w=np.zeros_like(weights.w), bias=np.zeros_like(weights.bias))
    return np.zeros_like(weights)


def _fd_gradient(prob, weights, x_t, ba, bb, method: FiniteDifference):
    """Central differences of theta -> L_batch(x_t - eta * grad_x P(x_t; theta))."""

    def surrogate(w_obj) -> float:
        x_plus = x_t - method.eta * prob.grad_x(w_obj, x_t)
        return batch_loss(ba, bb, x_plus)

    h = method.h
    if isinstance(weights, ReweightParams):
        gw = np.zeros_like(weights.w)
        for i in range(weights.w.shape[0]):
            e = np.zeros_like(weights.w)
            e[i] = h
            gw[i] = (
                surrogate(weights.replace(w=weights.w + e))
                - surrogate(weights.replace(w=weights.w - e))
            ) / (2 * h)
        gb = np.zeros_like(weights.bias)
        for idx in np.ndindex(weights.bias.shape):
            e = np.zeros_like(weights.bias)
            e[idx] = h
            gb[idx] = (
                surrogate(weights.replace(bias=weights.bias + e))
                - surrogate(weights.replace(bias=weights.bias - e))
            ) / (2 * h)
        return weights.replace(w=gw, bias=gb)
    g = np.zeros_like(weights)
    for i in range(weights.shape[0]):
        e = np.zeros_like(weights)
        e[i] = h
        g[i] = (surrogate(weights + e) - surrogate(weights - e)) / (2 * h)
    return g


def _unrolled_gradient(prob, weights, ba, bb, method: Unrolled):
    """Reverse-mode differentiation through `steps` inner GD steps from zero."""
    eta = method.step_size
    xs = [np.zeros(prob.d)]
    for _ in range(method.steps):
        xs.append(xs[-1] - eta * prob.grad_x(weights, xs[-1]))
    lam = batch_gradient(ba, bb, xs[-1])
    acc = _zeros_like(weights)
    for k in range(method.steps - 1, -1, -1):
        vjp = prob.grad_x_vjp(weights, xs[k], lam)
        acc = _wsub(acc, vjp, eta)  # acc += -eta * vjp
        if k > 0:
            lam = lam - eta * (prob.hessian_x(weights, xs[k]) @ lam)
    return acc


def reg_gradient(params: ReweightParams, examples, gamma: float) -> ReweightParams:
    """Exact gradient of gamma * reg_term (quadratic in every block)."""
    a_stack, b_stack = stack_examples(examples)
    w_a, w_b = params.weight_blocks()
    b_a, b_b = params.bias_blocks()
    a_gap = w_a[..., None] * a_stack + b_a - a_stack
    b_gap = b_b - (w_b - 1.0)[:, None] * b_stack
    g_wa = 2.0 * gamma * np.sum(a_gap * a_stack, axis=2)
    g_ba = 2.0 * gamma * a_gap
    g_wb = -2.0 * gamma * np.sum(b_gap * b_stack, axis=1)
    g_bb = 2.0 * gamma * b_gap
    w_grad = np.concatenate([g_wa, g_wb[:, None]], axis=1).ravel()
    bias_grad = np.concatenate([g_ba, g_bb[:, None, :]], axis=1).reshape(
        params.m * (params.n + 1), params.d
    )
    return params.replace(w=w_grad, bias=bias_grad)


def _wadd(a, b):
    if isinstance(a, ReweightParams):
        return a.replace(w=a.w + b.w, bias=a.bias + b.bias)
    return a + b


def _init_weights(examples, cfg: RiclConfig):
    a_stack, _ = stack_examples(examples)
    m, n, d = a_stack.shape
    stream = RngStream(cfg.seed, 0).substream(_STREAM_INIT)
    if cfg.mode == "scalar":
        scheme = cfg.init or "ones"
        if scheme == "ones":
            return np.ones(m)
        return stream.generator().standard_normal(m)
    scheme = cfg.init or "gaussian"
    if scheme == "ones":
        return ReweightParams.identity(m, n, d)
    return ReweightParams.gaussian(m, n, d, stream)


def _batch_indices(t: int, batch_size: int, n_val: int, perm: np.ndarray) -> np.ndarray:
    if batch_size >= n_val:
        return perm
    start = (t * batch_size) % n_val
    idx = perm[start : start + batch_size]
    if idx.shape[0] < batch_size:
        idx = np.concatenate([idx, perm[: batch_size - idx.shape[0]]])
    return idx


def ricl_train(examples, valset, cfg: RiclConfig) -> RiclResult:
    """Run the outer reweighting loop; returns weights, trace, final x*.

    Raises :class:`DivergenceDetected` with the offending step index if a
    loss or iterate turns non-finite (possible with line_search=False and an
    aggressive outer_lr).
    """
    valset = list(valset)
    weights = _init_weights(examples, cfg)
    prob = _problem(examples, weights)
    va, vb = stack_examples(valset)
    perm = RngStream(cfg.seed, 0).substream(_STREAM_BATCH).generator().permutation(len(valset))
    trace = TrainTrace()

    def full_valid(w_obj) -> tuple[float, np.ndarray]:
        x = prob.solve(w_obj, cfg.inner).x_star
        return batch_loss(va, vb, x), x

    l_cur, x_cur = full_valid(weights)
    for t in range(cfg.outer_steps):
        if not np.isfinite(l_cur) or not np.all(np.isfinite(x_cur)):
            raise DivergenceDetected(t)
        idx = _batch_indices(t, cfg.batch_size, len(valset), perm)
        batch = [valset[int(i)] for i in idx]
        grad = meta_gradient(examples, weights, x_cur, batch, cfg.meta_method)
        if isinstance(weights, ReweightParams) and cfg.gamma > 0:
            grad = _wadd(grad, reg_gradient(weights, examples, cfg.gamma))
        gn2 = _gnorm_sq(grad)

        alpha = cfg.outer_lr
        if cfg.line_search and gn2 > 0.0:
            accepted = False
            for _ in range(cfg.max_halvings):
                cand = _wproject(_wsub(weights, grad, alpha), cfg.weight_projection)
                if _wfinite(cand):
                    l_new, x_new = full_valid(cand)
                    if np.isfinite(l_new) and l_new <= l_cur:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                alpha = 0.0
                cand, l_new, x_new = weights, l_cur, x_cur
        else:
            if gn2 == 0.0:
                alpha = 0.0
                cand, l_new, x_new = weights, l_cur, x_cur
            else:
                cand = _wproject(_wsub(weights, grad, alpha), cfg.weight_projection)
                if not _wfinite(cand):
                    raise DivergenceDetected(t)
                l_new, x_new = full_valid(cand)

        trace.append(t, l_cur, gn2, alpha)
        weights, l_cur, x_cur = cand, l_new, x_new

    if not np.isfinite(l_cur) or not np.all(np.isfinite(x_cur)):
        raise DivergenceDetected(cfg.outer_steps)
    idx = _batch_indices(cfg.outer_steps, cfg.batch_size, len(valset), perm)
    batch = [valset[int(i)] for i in idx]
    grad = meta_gradient(examples, weights, x_cur, batch, cfg.meta_method)
    if isinstance(weights, ReweightParams) and cfg.gamma > 0:
        grad = _wadd(grad, reg_gradient(weights, examples, cfg.gamma))
    trace.append(cfg.outer_steps, l_cur, _gnorm_sq(grad), 0.0)
    return RiclResult(weights=weights, trace=trace, x_star=x_cur)


def lr_rule(n: int, d: int, r_budget: float, batch_size: int) -> float:
    """Log of the worst-case safe outer step 2|B| / (L sigma^2).

    Returned in log space because L = d n^2 exp(5 R^2) overflows float64:
    ln(alpha) = ln(2|B|) - ln(L) - 2 ln(4R). Report-only; practical training
    uses configured step sizes.
    """
    if batch_size < 1:
        raise PreconditionViolation(f"batch_size must be >= 1, got {batch_size}")
    rep = theoretical_bounds(n, d, r_budget)  # validates R > 4
    return float(np.log(2.0 * batch_size) - rep.log_lipschitz - 2.0 * np.log(4.0 * r_budget))


@dataclass(frozen=True)
class ConvergenceStats:
    horizons: tuple
    min_grad_sq: tuple
    c_fit: float


def convergence_stats(trace: TrainTrace, horizons) -> ConvergenceStats:
    """min_{t <= T} grad_norm_sq per horizon plus the fitted rate constant.

    c_fit = max_T (min_grad_sq(T) * sqrt(T)); a 1/sqrt(T) decay then means
    min_grad_sq(T) <= c_fit / sqrt(T) holds at every provided horizon.
    """
    horizons = tuple(int(t) for t in horizons)
    if not horizons or min(horizons) < 1:
        raise ValueError("horizons must be positive")
    if len(trace.step) - 1 < max(horizons):
        raise ValueError(
            f"trace covers steps up to {len(trace.step) - 1}, "
            f"cannot evaluate horizon {max(horizons)}"
        )
    g = np.asarray(trace.grad_norm_sq, dtype=np.float64)
    mins = tuple(float(g[: t + 1].min()) for t in horizons)
    c_fit = max(m * np.sqrt(t) for m, t in zip(mins, horizons))
    return ConvergenceStats(horizons=horizons, min_grad_sq=mins, c_fit=float(c_fit))
