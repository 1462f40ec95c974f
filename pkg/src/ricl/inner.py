"""Inner solvers: fit the regression vector x to a (weighted) prefix.

Two solvers share this module:

- ``solve_weighted_softmax``: plain gradient descent on
  sum_i w_i * 0.5 * ||f_i(x) - b_i||^2, optionally projected onto a ball
  ||x|| <= project_radius after every step.
- ``solve_weighted_linear``: the closed-form weighted linear aggregate
  x = argmin ||A_agg x - b_agg||^2 with A_agg = (1/m) sum_i diag(w_a_i) A_i
  and b_agg = (1/m) sum_i w_b_i b_i, solved through least_squares.

Weight layout for the linear solver: one flat vector of length m*(n+1); the
block for example i is its n per-row weights followed by one target weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, SingularSystem
from .linalg import as_matrix, as_vector, least_squares
from .softmax import batch_gradient, batch_loss, softmax_predict


@dataclass(frozen=True)
class Example:
    """One in-context pair (A, b)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_vector(self.b, "b")
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True)
class InnerConfig:
    max_steps: int = 500
    step_size: float = 1.0
    grad_tol: float = 1e-7
    project_radius: float | None = None
    init: np.ndarray | None = None  # None means the zero vector


@dataclass(frozen=True)
class SolveResult:
    x_star: np.ndarray
    final_loss: float
    final_grad_norm: float
    steps_taken: int
    loss_trace: np.ndarray


def stack_examples(examples) -> tuple[np.ndarray, np.ndarray]:
    """Pack a list of same-shape Examples into (m, n, d) and (m, n) arrays."""
    if not examples:
        raise ShapeMismatch("need at least one example")
    n, d = examples[0].a.shape
    for ex in examples:
        if ex.a.shape != (n, d):
            raise ShapeMismatch(
                f"examples disagree on shape: {ex.a.shape} vs {(n, d)}"
            )
    a_stack = np.stack([ex.a for ex in examples])
    b_stack = np.stack([ex.b for ex in examples])
    return a_stack, b_stack


def _project(x: np.ndarray, radius: float | None) -> np.ndarray:
    if radius is None:
        return x
    nx = np.linalg.norm(x)
    if nx > radius:
        return x * (radius / nx)
    return x


def descend(loss_fn, grad_fn, x0: np.ndarray, cfg: InnerConfig) -> SolveResult:
    """Generic fixed-step gradient descent with a gradient-norm stop.

    The gradient is checked before stepping, so an already-stationary init
    returns immediately with steps_taken = 0.
    """
    x = _project(np.array(x0, dtype=np.float64), cfg.project_radius)
    trace = [loss_fn(x)]
    steps = 0
    g = grad_fn(x)
    gn = float(np.linalg.norm(g))
    while gn > cfg.grad_tol and steps < cfg.max_steps:
        x = _project(x - cfg.step_size * g, cfg.project_radius)
        steps += 1
        trace.append(loss_fn(x))
        g = grad_fn(x)
        gn = float(np.linalg.norm(g))
    return SolveResult(
        x_star=x,
        final_loss=float(trace[-1]),
        final_grad_norm=gn,
        steps_taken=steps,
        loss_trace=np.asarray(trace, dtype=np.float64),
    )


def solve_weighted_softmax(examples, w, cfg: InnerConfig) -> SolveResult:
    """Gradient descent on the w-weighted softmax-regression objective.

    All-zero weights make the objective identically zero; the initial point
    is then already stationary and is returned untouched (steps_taken = 0).
    """
    a_stack, b_stack = stack_examples(examples)
    w = as_vector(np.asarray(w, dtype=np.float64), "w")
    if w.shape[0] != a_stack.shape[0]:
        raise ShapeMismatch(f"{a_stack.shape[0]} examples but {w.shape[0]} weights")
    d = a_stack.shape[2]
    x0 = np.zeros(d) if cfg.init is None else as_vector(cfg.init, "init")
    if x0.shape[0] != d:
        raise ShapeMismatch(f"init has length {x0.shape[0]}, examples have d={d}")
    return descend(
        lambda x: batch_loss(a_stack, b_stack, x, w),
        lambda x: batch_gradient(a_stack, b_stack, x, w),
        x0,
        cfg,
    )


def icl_predict(a_query, x_star) -> np.ndarray:
    """Prediction for a query matrix under the fitted vector."""
    return softmax_predict(a_query, x_star)


def split_weight_vector(w, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat m*(n+1) weight vector into (m, n) row weights + (m,) target weights."""
    w = as_vector(np.asarray(w, dtype=np.float64), "w")
    if w.shape[0] != m * (n + 1):
        raise ShapeMismatch(f"weight vector has length {w.shape[0]}, expected {m * (n + 1)}")
    blocks = w.reshape(m, n + 1)
    return blocks[:, :n], blocks[:, n]


def merge_weight_vector(w_a: np.ndarray, w_b: np.ndarray) -> np.ndarray:
    """Inverse of split_weight_vector."""
    return np.concatenate([w_a, w_b[:, None]], axis=1).ravel()


def aggregate_linear(examples, w) -> tuple[np.ndarray, np.ndarray]:
    """(A_agg, b_agg) = ((1/m) sum diag(w_a_i) A_i, (1/m) sum w_b_i b_i)."""
    a_stack, b_stack = stack_examples(examples)
    m, n, _ = a_stack.shape
    w_a, w_b = split_weight_vector(w, m, n)
    a_agg = np.einsum("mn,mnd->nd", w_a, a_stack) / m
    b_agg = (w_b @ b_stack) / m
    return a_agg, b_agg


def solve_weighted_linear(examples, w, ridge: float = 0.0, auto_ridge: bool = False) -> np.ndarray:
    """Closed-form weighted linear fit through the aggregate normal equations.

    ``auto_ridge`` retries a singular aggregate with the scale-relative
    fallback 1e-8 * trace(A_agg^T A_agg) / d instead of failing.
    """
    a_agg, b_agg = aggregate_linear(examples, w)
    try:
        return least_squares(a_agg, b_agg, ridge=ridge)
    except SingularSystem:
        if not auto_ridge:
            raise
        fallback = 1e-8 * float(np.trace(a_agg.T @ a_agg)) / a_agg.shape[1]
        if fallback <= 0.0 or not np.isfinite(fallback):
            fallback = 1e-12
        return least_squares(a_agg, b_agg, ridge=fallback)
