"""Dense linear-algebra kernel and deterministic RNG streams.

Conventions, frozen for the whole library:

- Matrices are 2-D float64 ``numpy`` arrays in row-major (C) order; vectors
  are 1-D float64 arrays. All public entry points validate shape/finiteness
  where a contract depends on it and raise :class:`ShapeMismatch`.
- ``vec`` is row-major flattening. Under that convention
  ``vec(A1 @ X @ A2.T) == kron(A1, A2) @ vec(X)`` holds exactly, which is the
  identity the reweighting algebra relies on.
- Randomness comes from :class:`RngStream`, a value type (seed, stream_id).
  The same (seed, stream_id) always reproduces the same draws, on every
  platform: the pair is fed to numpy's ``SeedSequence`` and drives a PCG64
  generator; normal variates use numpy's ziggurat ``standard_normal``, whose
  stream is frozen by numpy's cross-version stability policy. Substreams are
  derived with SplitMix64 (documented 64-bit mixer below), so parallel cells
  can each own an independent stream keyed by structure, not execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, SingularSystem

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    """One SplitMix64 scrambling round (public-domain constants)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix64(a: int, b: int) -> int:
    """Mix two 64-bit values into one; used to derive substream ids."""
    return _splitmix64((a & _MASK64) ^ _splitmix64(b & _MASK64))


@dataclass(frozen=True)
class RngStream:
    """A named, replayable source of randomness.

    Value semantics: the stream does not advance. Every ``generator()`` call
    returns a fresh generator positioned at the start of the stream, so any
    operation given the same RngStream produces identical output.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence((self.seed & _MASK64, self.stream_id & _MASK64))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngStream":
        """Derive the index-th child stream via the documented 64-bit mix."""
        return RngStream(self.seed, mix64(self.stream_id, index))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def as_vector(a, name: str = "vector") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got ndim={a.ndim}")
    return a


def gauss_matrix(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """Matrix with i.i.d. standard-normal entries drawn from ``rng``.

    Deterministic for a fixed stream: the generator is re-derived per call.
    """
    if rows <= 0 or cols <= 0:
        raise ShapeMismatch(f"gauss_matrix needs positive dims, got {rows}x{cols}")
    return rng.generator().standard_normal((rows, cols))


def gauss_vector(n: int, rng: RngStream) -> np.ndarray:
    if n <= 0:
        raise ShapeMismatch(f"gauss_vector needs positive length, got {n}")
    return rng.generator().standard_normal(n)


def least_squares(a, b, ridge: float = 0.0) -> np.ndarray:
    """argmin_x ||A x - b||_2^2 + ridge * ||x||_2^2.

    Solved through the SVD of A (a factorization; no explicit inverse is ever
    formed). With ridge = 0 the result equals (A^T A)^{-1} A^T b whenever
    A^T A is nonsingular; if the condition estimate of A^T A exceeds
    1/eps_machine and no ridge was requested, raises :class:`SingularSystem`.
    """
    a = as_matrix(a, "A")
    b = as_vector(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if ridge == 0.0:
        smax = s[0] if s.size else 0.0
        smin = s[-1] if s.size else 0.0
        # cond(A^T A) = (smax/smin)^2; compare in squared form.
        if smin == 0.0 or (smax / smin) ** 2 > 1.0 / np.finfo(np.float64).eps:
            raise SingularSystem(
                "A^T A is numerically singular (condition above 1/eps); "
                "pass ridge > 0 to regularize"
            )
        return vt.T @ ((u.T @ b) / s)
    # Ridge: filter factors s/(s^2 + ridge) on the SVD basis.
    return vt.T @ ((s * (u.T @ b)) / (s * s + ridge))


def kron(a, b) -> np.ndarray:
    """Kronecker product (delegates to numpy)."""
    return np.kron(as_matrix(a, "A"), as_matrix(b, "B"))


def vec(x) -> np.ndarray:
    """Row-major flattening of a matrix (frozen convention, see module doc)."""
    return as_matrix(x, "X").ravel(order="C").copy()


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = as_vector(v, "v")
    if v.shape[0] != rows * cols:
        raise ShapeMismatch(f"cannot reshape length {v.shape[0]} into {rows}x{cols}")
    return v.reshape(rows, cols)


def operator_norm(a, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Spectral norm ||A||_2 via power iteration on A^T A.

    The start vector is a fixed pseudorandom direction (deterministic in the
    matrix shape), which is generic with overwhelming probability; iteration
    stops when the Rayleigh estimate changes by at most ``tol`` relatively.
    Returns 0.0 for the zero matrix.
    """
    a = as_matrix(a, "A")
    if not np.all(np.isfinite(a)):
        raise ShapeMismatch("operator_norm requires finite entries")
    if not a.size or not np.any(a):
        return 0.0
    n = a.shape[1]
    v = RngStream(0x5EED0A17, n).generator().standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v landed exactly in the null space; restart deterministically.
            v = RngStream(0x5EED0A18, n).generator().standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v_next = w / nw
        est_next = float(np.sqrt(nw))  # ||A^T A v|| -> top eigenvalue of A^T A
        if abs(est_next - est) <= tol * max(est_next, 1e-300):
            return est_next
        est, v = est_next, v_next
    return est


def frobenius_norm_sq(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sum(a * a))
