"""Softmax-regression model: prediction, loss, derivatives, analytic bounds.

The model maps a parameter vector x to the probability vector
``f(x) = exp(Ax) / <exp(Ax), 1>``; a single training pair (A, b) scores
``loss = 0.5 * ||f(x) - b||_2^2``. All derivative formulas below are exact
(verified against central finite differences in the test suite):

- gradient:  A^T (diag(f) - f f^T) (f - b)
- Hessian:   A^T [diag(u) - f u^T - (f^T r) I] S A,
             with r = f - b, u = f + r, S = diag(f) - f f^T.

Batch variants operate on stacked arrays (m, n, d) / (m, n) and are the hot
path for every solver in the package; they are pure einsum/broadcast code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionViolation, ShapeMismatch
from .linalg import as_matrix, as_vector


def softmax_predict(a, x) -> np.ndarray:
    """Probability vector softmax(A @ x), computed with max-shifted logits."""
    a = as_matrix(a, "A")
    x = as_vector(x, "x")
    if a.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"A is {a.shape[0]}x{a.shape[1]} but x has length {x.shape[0]}")
    z = a @ x
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class SrInstance:
    """One regression instance: matrix A, target b, and norm budget R."""

    a: np.ndarray
    b: np.ndarray
    r_budget: float = 5.0

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_vector(self.b, "b")
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def sr_loss(inst, x) -> float:
    """0.5 * ||f(x) - b||_2^2 for one instance (anything with .a and .b)."""
    r = softmax_predict(inst.a, x) - inst.b
    return 0.5 * float(r @ r)


def sr_gradient(inst, x) -> np.ndarray:
    """Exact gradient A^T (diag(f) - f f^T)(f - b)."""
    a = as_matrix(inst.a, "A")
    f = softmax_predict(a, x)
    r = f - inst.b
    s_r = f * r - f * (f @ r)  # (diag(f) - f f^T) r
    return a.T @ s_r


def sr_hessian(inst, x) -> np.ndarray:
    """Exact Hessian of sr_loss at x (d x d)."""
    a = as_matrix(inst.a, "A")
    f = softmax_predict(a, x)
    r = f - inst.b
    return _curvature(a, f, r, 1.0)


def _curvature(a: np.ndarray, f: np.ndarray, r: np.ndarray, scale: float) -> np.ndarray:
    """scale * A^T [diag(u) - f u^T - (f^T r) I] S A for u = f + dr/df * f.

    Callers pass r already formed; ``u`` must be f + (dr/df) f, which is
    f + r for the plain loss (dr/df = I) and r + w_b f for the reweighted
    transformer residual (dr/df = w_b I). The caller encodes that by passing
    the appropriate r and folding w_b into ``scale``/``u`` via
    :func:`_curvature_u`.
    """
    u = f + r
    return _curvature_u(a, f, r, u, scale)


def _curvature_u(a, f, r, u, scale) -> np.ndarray:
    rho = float(f @ r)
    sa = f[:, None] * a - np.outer(f, f @ a)  # S @ A
    m = u[:, None] * sa - np.outer(f, u @ sa) - rho * sa
    return scale * (a.T @ m)


# ---------------------------------------------------------------------------
# Batch kernels over stacked instances.
# ---------------------------------------------------------------------------


def batch_predict(a_stack: np.ndarray, x: np.ndarray) -> np.ndarray:
    """softmax(A_i @ x) for every i; a_stack is (m, n, d), result (m, n)."""
    z = a_stack @ x
    z -= z.max(axis=1, keepdims=True)
    f = np.exp(z)
    f /= f.sum(axis=1, keepdims=True)
    return f


def batch_loss(a_stack, b_stack, x, weights=None) -> float:
    """sum_i w_i * 0.5 * ||f_i(x) - b_i||^2 (w = 1 when omitted)."""
    r = batch_predict(a_stack, x) - b_stack
    per = 0.5 * np.sum(r * r, axis=1)
    return float(per @ weights) if weights is not None else float(per.sum())


def batch_gradients(a_stack, b_stack, x) -> np.ndarray:
    """Per-instance gradients, stacked (m, d)."""
    f = batch_predict(a_stack, x)
    r = f - b_stack
    s_r = f * r - f * np.sum(f * r, axis=1, keepdims=True)
    return np.einsum("mnd,mn->md", a_stack, s_r)


def batch_gradient(a_stack, b_stack, x, weights=None) -> np.ndarray:
    """Gradient of batch_loss at x (d,)."""
    g = batch_gradients(a_stack, b_stack, x)
    return g.T @ weights if weights is not None else g.sum(axis=0)


def batch_hessian(a_stack, b_stack, x, weights=None) -> np.ndarray:
    """Hessian of batch_loss at x (d, d)."""
    f = batch_predict(a_stack, x)
    r = f - b_stack
    u = f + r
    rho = np.sum(f * r, axis=1)
    fa = np.einsum("mn,mnd->md", f, a_stack)
    sa = f[..., None] * a_stack - f[..., None] * fa[:, None, :]
    usa = np.einsum("mn,mnd->md", u, sa)
    mmat = u[..., None] * sa - f[..., None] * usa[:, None, :] - rho[:, None, None] * sa
    if weights is not None:
        mmat = mmat * np.asarray(weights, dtype=np.float64)[:, None, None]
    return np.einsum("mnd,mne->de", a_stack, mmat)


# ---------------------------------------------------------------------------
# Analytic bounds.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """Closed-form worst-case constants for a problem size (n, d, R).

    ``log_lipschitz`` is the natural log of the gradient-Lipschitz constant
    d * n^2 * exp(5 R^2); the constant itself overflows float64 for the R
    values of interest, so it is only ever reported in log space.
    """

    n: int
    d: int
    r_budget: float
    grad_bound: float
    log_lipschitz: float
    residual_bound: float = 2.0


def theoretical_bounds(n: int, d: int, r_budget: float) -> BoundReport:
    """Worst-case constants valid whenever ||A|| <= R, ||x|| <= R, ||b|| <= 1.

    Requires R > 4 (the gradient bound's derivation needs it); smaller budgets
    raise :class:`PreconditionViolation`.
    """
    if n <= 0 or d <= 0:
        raise ShapeMismatch(f"bounds need positive dims, got n={n}, d={d}")
    if not r_budget > 4.0:
        raise PreconditionViolation(
            f"norm budget must exceed 4 for these bounds, got {r_budget}"
        )
    return BoundReport(
        n=n,
        d=d,
        r_budget=float(r_budget),
        grad_bound=4.0 * float(r_budget),
        log_lipschitz=float(np.log(d) + 2.0 * np.log(n) + 5.0 * r_budget**2),
        residual_bound=2.0,
    )
