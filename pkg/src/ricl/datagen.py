"""Synthetic task generation for the benchmark and the property suite.

A task is a hidden square regression vector x_true; every generated pair is
(A, b) with b = softmax(A @ x_true) plus optional corruption. Prefix kinds:

- random:            A entries ~ N(0, 1), clean targets.
- imbalanced(mean):  A entries ~ N(mean, 1), clean targets.
- noisy(std):        A entries ~ N(0, 1), targets plus std * N(0, I).
- imbalanced-noisy:  both shifts at once (canonically mean = std = 0.4).

The "std" knob is the per-coordinate standard deviation of the additive
noise (eps = std * standard_normal), and "mean" shifts every entry of A.
Orientation is softmax(A @ x) everywhere in this package.

Determinism: generation is a pure function of an RngStream. Example i draws
its A from substream(2i) and its noise from substream(2i+1); the noise draw
happens for every kind and is scaled by std, so noisy(std=0) and
imbalanced(mean=0) reproduce random's output bit for bit on the same stream.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, ShapeMismatch
from .inner import Example
from .linalg import RngStream
from .softmax import softmax_predict

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TaskSpec:
    n: int
    d: int
    m: int
    x_true: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_true, dtype=np.float64)
        if x.shape != (self.d,):
            raise ShapeMismatch(f"x_true must have shape ({self.d},), got {x.shape}")
        if self.n <= 0 or self.d <= 0 or self.m <= 0:
            raise ShapeMismatch("n, d, m must all be positive")
        object.__setattr__(self, "x_true", x)


@dataclass(frozen=True)
class PrefixKind:
    """Corruption recipe for a prefix; see the module docstring."""

    label: str
    mean: float = 0.0
    std: float = 0.0

    _LABELS = ("random", "imbalanced", "noisy", "imbalanced-noisy")

    def __post_init__(self):
        if self.label not in self._LABELS:
            raise ValueError(f"unknown prefix kind {self.label!r}")
        if self.std < 0:
            raise ValueError("noise std must be >= 0")

    @property
    def param(self) -> float:
        """The scalar reported in benchmark rows (0 for random)."""
        if self.label == "random":
            return 0.0
        if self.label == "imbalanced":
            return self.mean
        return self.std

    @staticmethod
    def random() -> "PrefixKind":
        return PrefixKind("random")

    @staticmethod
    def imbalanced(mean: float) -> "PrefixKind":
        return PrefixKind("imbalanced", mean=mean)

    @staticmethod
    def noisy(std: float) -> "PrefixKind":
        return PrefixKind("noisy", std=std)

    @staticmethod
    def imbalanced_noisy(mean: float = 0.4, std: float = 0.4) -> "PrefixKind":
        return PrefixKind("imbalanced-noisy", mean=mean, std=std)


def gen_task(n: int, d: int, rng: RngStream, m: int = 40) -> TaskSpec:
    """Draw the hidden vector x_true ~ N(0, I_d)."""
    x_true = rng.generator().standard_normal(d)
    return TaskSpec(n=n, d=d, m=m, x_true=x_true)


def _gen_pair(kind: PrefixKind, task: TaskSpec, pair_stream: RngStream, index: int) -> Example:
    a = pair_stream.substream(2 * index).generator().standard_normal((task.n, task.d))
    a = a + kind.mean
    noise = pair_stream.substream(2 * index + 1).generator().standard_normal(task.n)
    b = softmax_predict(a, task.x_true) + kind.std * noise
    return Example(a, b)


def gen_examples(kind: PrefixKind, task: TaskSpec, rng: RngStream) -> list[Example]:
    """The m prefix pairs for a task under the given corruption kind."""
    return [_gen_pair(kind, task, rng, i) for i in range(task.m)]


def gen_eval_set(count: int, task: TaskSpec, rng: RngStream) -> list[Example]:
    """Clean evaluation pairs; callers use distinct streams for val and test."""
    if count <= 0:
        raise ShapeMismatch("eval set size must be positive")
    clean = PrefixKind.random()
    return [_gen_pair(clean, task, rng, i) for i in range(count)]


def robustness_grid() -> dict:
    """The corruption grids swept by the benchmark."""
    grid = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6]
    return {"means": list(grid), "stds": list(grid)}


@dataclass(frozen=True)
class SizePreset:
    name: str
    n: int
    d: int
    m: int
    n_val: int
    n_test: int


PRESETS = {
    # Full-size generation settings used by the original experiments.
    "paper": SizePreset("paper", n=16, d=16, m=40, n_val=4000, n_test=4000),
    # Desk-scale settings for CI and the acceptance suite.
    "ci": SizePreset("ci", n=8, d=8, m=20, n_val=200, n_test=200),
}


def get_preset(name: str) -> SizePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# Serialization: one .npz per example set, version + provenance in a JSON
# header stored inside the archive. CSV export is a long-format inspection
# table: example,field,row,col,value.
# ---------------------------------------------------------------------------


def save_dataset(path, examples, *, seed: int, kind: PrefixKind, x_true=None) -> None:
    a = np.stack([ex.a for ex in examples])
    b = np.stack([ex.b for ex in examples])
    header = {
        "format_version": DATASET_FORMAT_VERSION,
        "m": int(a.shape[0]),
        "n": int(a.shape[1]),
        "d": int(a.shape[2]),
        "seed": int(seed),
        "kind": kind.label,
        "mean": float(kind.mean),
        "std": float(kind.std),
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8),
              "a": a, "b": b}
    if x_true is not None:
        arrays["x_true"] = np.asarray(x_true, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_dataset(path) -> tuple[list[Example], dict]:
    with np.load(path) as z:
        try:
            header = json.loads(bytes(z["header"].tobytes()).decode("utf-8"))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"not a dataset file: {exc}") from exc
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise SchemaError(
                f"unsupported dataset format version {header.get('format_version')}"
            )
        a, b = z["a"], z["b"]
        if a.shape[:2] != b.shape or a.shape[0] != header["m"]:
            raise SchemaError("dataset arrays disagree with their header")
        examples = [Example(a[i], b[i]) for i in range(a.shape[0])]
        if "x_true" in z:
            header["x_true"] = np.array(z["x_true"])
        return examples, header


def export_dataset_csv(examples) -> str:
    """Long-format dump (example,field,row,col,value) for eyeballing."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["example", "field", "row", "col", "value"])
    for i, ex in enumerate(examples):
        for j in range(ex.a.shape[0]):
            for k in range(ex.a.shape[1]):
                writer.writerow([i, "A", j, k, repr(float(ex.a[j, k]))])
        for j in range(ex.b.shape[0]):
            writer.writerow([i, "b", j, 0, repr(float(ex.b[j]))])
    return out.getvalue()
