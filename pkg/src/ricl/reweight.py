"""Prefix assembly and structured reweighting parameters.

A prefix stacks m square pairs into one m*(n+1) x d matrix:
rows [i*(n+1), i*(n+1)+n) hold A_i and row i*(n+1)+n holds b_i^T (needs
n = d so the target row conforms). Reweighting applies a diagonal weight
w (length m*(n+1)) and an additive bias B (same row count): the i-th block
of the reweighted prefix is (diag(w_a_i) A_i + B_a_i, w_b_i b_i + B_b_i).

Two evaluation forms live here:

- ``apply_reweight``: the literal data transformation above. The per-block
  path and the full-matrix path ``w[:, None] * assembled + B`` perform the
  identical multiply-add per entry and agree bitwise.
- ``transformer_loss``: the evaluation form under which scalar example
  weights lift exactly. Each pair contributes
      ||w_b_i * f(A~_i x) - (b_i + B_b_i)||^2.
  At identity parameters this is the plain squared residual; under
  ``lift_scalar_weights`` (w_a = 1, B_a = 0, w_b = sqrt(w), B_b =
  (sqrt(w) - 1) b) the pair term equals w * ||f(A_i x) - b_i||^2 exactly,
  because b_i + B_b_i = w_b_i * b_i. ``reg_term`` penalizes distance from
  exactly that configuration family, so reg_term(params) == 0 iff every
  block satisfies the lift conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeWeight, ShapeMismatch
from .inner import Example, merge_weight_vector, split_weight_vector, stack_examples
from .linalg import RngStream, as_matrix, as_vector, frobenius_norm_sq
from .softmax import batch_predict


@dataclass(frozen=True)
class Prefix:
    """Assembled prefix plus its example list (kept in sync by construction)."""

    examples: tuple
    assembled: np.ndarray  # (m*(n+1), d)

    @property
    def m(self) -> int:
        return len(self.examples)

    @property
    def n(self) -> int:
        return self.examples[0].n

    @property
    def d(self) -> int:
        return self.examples[0].d


def assemble_prefix(examples) -> Prefix:
    """Stack [A_1; b_1^T; ...; A_m; b_m^T]; requires square examples (n = d)."""
    if not examples:
        raise ShapeMismatch("cannot assemble an empty prefix")
    examples = tuple(
        ex if isinstance(ex, Example) else Example(ex[0], ex[1]) for ex in examples
    )
    n, d = examples[0].a.shape
    if n != d:
        raise ShapeMismatch(f"prefix assembly needs square A (n = d), got {n}x{d}")
    for ex in examples:
        if ex.a.shape != (n, d):
            raise ShapeMismatch("examples disagree on shape")
    rows = []
    for ex in examples:
        rows.append(ex.a)
        rows.append(ex.b[None, :])
    return Prefix(examples=examples, assembled=np.concatenate(rows, axis=0))


def decompose_prefix(assembled, n: int) -> list[Example]:
    """Invert assemble_prefix given the block height n (= d)."""
    assembled = as_matrix(assembled, "prefix")
    rows, d = assembled.shape
    if n != d or rows % (n + 1) != 0:
        raise ShapeMismatch(f"a {rows}x{d} matrix is not a stack of (n+1)x{n} blocks")
    m = rows // (n + 1)
    out = []
    for i in range(m):
        block = assembled[i * (n + 1) : (i + 1) * (n + 1)]
        out.append(Example(block[:n].copy(), block[n].copy()))
    return out


@dataclass(frozen=True)
class ReweightParams:
    """Diagonal weights w (m*(n+1),) and additive bias B (m*(n+1), d)."""

    w: np.ndarray
    bias: np.ndarray
    m: int
    n: int
    d: int

    def __post_init__(self):
        w = as_vector(np.asarray(self.w, dtype=np.float64), "w")
        bias = as_matrix(np.asarray(self.bias, dtype=np.float64), "B")
        rows = self.m * (self.n + 1)
        if w.shape[0] != rows:
            raise ShapeMismatch(f"w has length {w.shape[0]}, expected {rows}")
        if bias.shape != (rows, self.d):
            raise ShapeMismatch(f"B is {bias.shape}, expected {(rows, self.d)}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "bias", bias)

    # -- constructors ------------------------------------------------------
    @staticmethod
    def identity(m: int, n: int, d: int) -> "ReweightParams":
        return ReweightParams(np.ones(m * (n + 1)), np.zeros((m * (n + 1), d)), m, n, d)

    @staticmethod
    def gaussian(m: int, n: int, d: int, rng: RngStream) -> "ReweightParams":
        w = rng.generator().standard_normal(m * (n + 1))
        return ReweightParams(w, np.zeros((m * (n + 1), d)), m, n, d)

    # -- block views -------------------------------------------------------
    def weight_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """(m, n) per-row weights and (m,) target weights."""
        return split_weight_vector(self.w, self.m, self.n)

    def bias_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """(m, n, d) per-row biases and (m, d) target biases."""
        blocks = self.bias.reshape(self.m, self.n + 1, self.d)
        return blocks[:, : self.n, :], blocks[:, self.n, :]

    def replace(self, w=None, bias=None) -> "ReweightParams":
        return ReweightParams(
            self.w if w is None else w,
            self.bias if bias is None else bias,
            self.m,
            self.n,
            self.d,
        )


def apply_reweight(prefix: Prefix, params: ReweightParams) -> Prefix:
    """Reweighted prefix; block i is (diag(w_a_i) A_i + B_a_i, w_b_i b_i + B_b_i).

    Built block-by-block; the result's assembled matrix is bitwise equal to
    the full-matrix form w[:, None] * assembled + B (same multiply-add).
    """
    if (prefix.m, prefix.n, prefix.d) != (params.m, params.n, params.d):
        raise ShapeMismatch(
            f"prefix is (m={prefix.m}, n={prefix.n}, d={prefix.d}) but params are "
            f"(m={params.m}, n={params.n}, d={params.d})"
        )
    w_a, w_b = params.weight_blocks()
    b_a, b_b = params.bias_blocks()
    out = []
    for i, ex in enumerate(prefix.examples):
        a_new = w_a[i][:, None] * ex.a + b_a[i]
        b_new = w_b[i] * ex.b + b_b[i]
        out.append(Example(a_new, b_new))
    return assemble_prefix(out)


def lift_scalar_weights(w_softmax, examples) -> ReweightParams:
    """Lift per-example scalar weights into reweighting parameters.

    Produces w_a = 1, B_a = 0, w_b_i = sqrt(w_i), B_b_i = (sqrt(w_i) - 1) b_i.
    Negative scalar weights have no square root and raise NegativeWeight.
    """
    w_softmax = as_vector(np.asarray(w_softmax, dtype=np.float64), "w_softmax")
    examples = list(examples)
    if w_softmax.shape[0] != len(examples):
        raise ShapeMismatch(
            f"{len(examples)} examples but {w_softmax.shape[0]} scalar weights"
        )
    if np.any(w_softmax < 0):
        raise NegativeWeight("scalar weights must be nonnegative to lift")
    a_stack, b_stack = stack_examples(examples)
    m, n, d = a_stack.shape
    if n != d:
        raise ShapeMismatch(f"lifting needs square examples, got {n}x{d}")
    root = np.sqrt(w_softmax)
    w_a = np.ones((m, n))
    b_a = np.zeros((m, n, d))
    b_b = (root - 1.0)[:, None] * b_stack
    w = merge_weight_vector(w_a, root)
    bias = np.concatenate([b_a, b_b[:, None, :]], axis=1).reshape(m * (n + 1), d)
    return ReweightParams(w, bias, m, n, d)


def transformer_residuals(x, examples, params: ReweightParams) -> np.ndarray:
    """Stacked residuals w_b_i * f(A~_i x) - (b_i + B_b_i), shape (m, n)."""
    a_stack, b_stack = stack_examples(examples)
    if (params.m, params.n, params.d) != a_stack.shape:
        raise ShapeMismatch("params do not match the example shapes")
    w_a, w_b = params.weight_blocks()
    b_a, b_b = params.bias_blocks()
    a_tilde = w_a[..., None] * a_stack + b_a
    f = batch_predict(a_tilde, as_vector(x, "x"))
    return w_b[:, None] * f - (b_stack + b_b)


def transformer_loss(x, examples, params: ReweightParams) -> float:
    """Sum of squared reweighted residuals (no 1/2 factor).

    Identity parameters give sum_i ||f(A_i x) - b_i||^2, i.e. exactly twice
    the summed softmax-regression loss.
    """
    r = transformer_residuals(x, examples, params)
    return float(np.sum(r * r))


@dataclass(frozen=True)
class RegConfig:
    gamma: float = 1.0


def reg_term(params: ReweightParams, examples, cfg: RegConfig) -> float:
    """gamma * sum_i (||diag(w_a_i) A_i + B_a_i - A_i||_F^2 + ||B_b_i - (w_b_i - 1) b_i||^2).

    Zero iff every block satisfies the scalar-lift conditions; requires
    w_b >= 0 (a negative target weight has no scalar-weight preimage).
    """
    a_stack, b_stack = stack_examples(examples)
    m, n, d = a_stack.shape
    if (params.m, params.n, params.d) != (m, n, d):
        raise ShapeMismatch("params do not match the example shapes")
    w_a, w_b = params.weight_blocks()
    if np.any(w_b < 0):
        raise NegativeWeight("target-row weights must be nonnegative in reg_term")
    b_a, b_b = params.bias_blocks()
    a_gap = w_a[..., None] * a_stack + b_a - a_stack
    b_gap = b_b - (w_b - 1.0)[:, None] * b_stack
    return float(cfg.gamma) * (frobenius_norm_sq(a_gap) + frobenius_norm_sq(b_gap))
