"""Linear-aggregate reweighting: closed-form inner solve, analytic outer loop.

The inner "solve" is a single weighted least-squares fit: the prefix is
collapsed to A_agg = (1/m) sum_i diag(w_a_i) A_i and b_agg =
(1/m) sum_i w_b_i b_i, and x(w) = argmin ||A_agg x - b_agg||^2. The outer
objective is the linear validation loss sum_v ||A_v x(w) - b_v||_2^2.

The gradient is exact: with M = A_agg^T A_agg + ridge I and c = A_agg^T
b_agg, x solves M x = c, so dLoss = lambda^T (dc - dM x) for the adjoint
solve M lambda = dLoss/dx. Expanding dc and dM against the weight blocks
gives, per example i,
    dLoss/dw_a_ij = (1/m) <Phi_j, A_i_j>,   Phi = b_agg lam^T
                    - (A_agg x) lam^T - (A_agg lam) x^T,
    dLoss/dw_b_i  = (1/m) <A_agg lam, b_i>.
A finite-difference oracle covers this in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceDetected
from .inner import aggregate_linear, stack_examples
from .linalg import least_squares
from .ricl import TrainTrace


@dataclass(frozen=True)
class LariclConfig:
    outer_steps: int = 100
    outer_lr: float = 1e-3
    ridge: float = 0.0
    grad_method: str = "analytic"  # "analytic" | "fd"
    fd_h: float = 1e-6
    line_search: bool = True
    max_halvings: int = 25

    def __post_init__(self):
        if self.grad_method not in ("analytic", "fd"):
            raise ValueError(f"unknown grad_method {self.grad_method!r}")
        if self.outer_steps < 0 or self.ridge < 0:
            raise ValueError("outer_steps >= 0 and ridge >= 0 required")


@dataclass(frozen=True)
class LariclResult:
    weights: np.ndarray
    trace: TrainTrace
    x_star: np.ndarray


def _solve_aggregate(examples, w, ridge: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a_agg, b_agg = aggregate_linear(examples, w)
    x = least_squares(a_agg, b_agg, ridge=ridge)
    return x, a_agg, b_agg


def laricl_val_loss(w, examples, valset, ridge: float = 0.0) -> float:
    """sum_v ||A_v x(w) - b_v||_2^2 with the closed-form x(w)."""
    x, _, _ = _solve_aggregate(examples, w, ridge)
    va, vb = stack_examples(valset)
    r = va @ x - vb
    return float(np.sum(r * r))


def laricl_grad(w, examples, valset, ridge: float = 0.0) -> np.ndarray:
    """Exact gradient of laricl_val_loss via the adjoint normal equations."""
    a_stack, b_stack = stack_examples(examples)
    m, n, _ = a_stack.shape
    x, a_agg, b_agg = _solve_aggregate(examples, w, ridge)
    va, vb = stack_examples(valset)
    resid = va @ x - vb
    p = 2.0 * np.einsum("vnd,vn->d", va, resid)  # dLoss/dx
    mmat = a_agg.T @ a_agg + ridge * np.eye(a_agg.shape[1])
    lam = np.linalg.solve(mmat, p)
    ax = a_agg @ x
    alam = a_agg @ lam
    phi = np.outer(b_agg, lam) - np.outer(ax, lam) - np.outer(alam, x)
    g_wa = np.einsum("nd,mnd->mn", phi, a_stack) / m
    g_wb = (b_stack @ alam) / m
    return np.concatenate([g_wa, g_wb[:, None]], axis=1).ravel()


def _fd_grad(w, examples, valset, ridge: float, h: float) -> np.ndarray:
    g = np.zeros_like(w)
    for i in range(w.shape[0]):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (
            laricl_val_loss(w + e, examples, valset, ridge)
            - laricl_val_loss(w - e, examples, valset, ridge)
        ) / (2 * h)
    return g


def laricl_train(examples, valset, cfg: LariclConfig) -> LariclResult:
    """Descend the linear validation loss from w = all-ones.

    Shares the TrainTrace schema with the softmax outer loop; backtracking
    line search (optional) accepts a zero step when no decrease exists.
    """
    a_stack, _ = stack_examples(examples)
    m, n, _ = a_stack.shape
    w = np.ones(m * (n + 1))
    trace = TrainTrace()

    def value(wv) -> float:
        return laricl_val_loss(wv, examples, valset, cfg.ridge)

    def grad(wv) -> np.ndarray:
        if cfg.grad_method == "analytic":
            return laricl_grad(wv, examples, valset, cfg.ridge)
        return _fd_grad(wv, examples, valset, cfg.ridge, cfg.fd_h)

    l_cur = value(w)
    for t in range(cfg.outer_steps):
        if not np.isfinite(l_cur) or not np.all(np.isfinite(w)):
            raise DivergenceDetected(t)
        g = grad(w)
        gn2 = float(g @ g)
        alpha = cfg.outer_lr
        if cfg.line_search and gn2 > 0.0:
            accepted = False
            for _ in range(cfg.max_halvings):
                cand = w - alpha * g
                if np.all(np.isfinite(cand)):
                    l_new = value(cand)
                    if np.isfinite(l_new) and l_new <= l_cur:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                alpha, cand, l_new = 0.0, w, l_cur
        else:
            if gn2 == 0.0:
                alpha, cand, l_new = 0.0, w, l_cur
            else:
                cand = w - alpha * g
                if not np.all(np.isfinite(cand)):
                    raise DivergenceDetected(t)
                l_new = value(cand)
        trace.append(t, l_cur, gn2, alpha)
        w, l_cur = cand, l_new

    if not np.isfinite(l_cur) or not np.all(np.isfinite(w)):
        raise DivergenceDetected(cfg.outer_steps)
    g = grad(w)
    trace.append(cfg.outer_steps, l_cur, float(g @ g), 0.0)
    x, _, _ = _solve_aggregate(examples, w, cfg.ridge)
    return LariclResult(weights=w, trace=trace, x_star=x)
