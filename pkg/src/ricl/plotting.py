"""Static SVG charts rendered from benchmark CSV files.

Output bytes are deterministic for a fixed input: the SVG hash salt is
pinned, and the date metadata that matplotlib would otherwise embed is
stripped.  Charts aggregate the mean MSE across seeds per (method, param)
and draw one series per method against the corruption parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bench import load_rows
from .errors import EmptySeries

_HASHSALT = "ricl-static-plot"


@dataclass(frozen=True)
class PlotSpec:
    out_path: str
    kind: str | None = None  # None = all kinds in the file
    methods: tuple | None = None  # None = all methods present
    value: str = "mse"  # "mse" | "mse_scaled"
    title: str = ""
    log_y: bool = False

    def __post_init__(self):
        if self.value not in ("mse", "mse_scaled"):
            raise ValueError(f"unknown value column {self.value!r}")


def _series(rows, spec: PlotSpec) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    picked = [
        r
        for r in rows
        if r.status == "ok"
        and (spec.kind is None or r.kind == spec.kind)
        and (spec.methods is None or r.method in spec.methods)
        and np.isfinite(getattr(r, spec.value))
    ]
    if not picked:
        raise EmptySeries("no rows match the plot filter")
    by_method: dict[str, dict[float, list[float]]] = {}
    for r in picked:
        by_method.setdefault(r.method, {}).setdefault(r.param, []).append(
            getattr(r, spec.value)
        )
    out = {}
    for method in sorted(by_method):
        params = np.array(sorted(by_method[method]))
        means = np.array([np.mean(by_method[method][p]) for p in params])
        out[method] = (params, means)
    return out


def emit_plot(csv_path, spec: PlotSpec) -> str:
    """Render one chart from a benchmark CSV; returns the output path."""
    import matplotlib

    matplotlib.use("svg", force=False)
    from matplotlib import rc_context
    from matplotlib.figure import Figure

    rows = load_rows(csv_path)
    series = _series(rows, spec)

    with rc_context({"svg.hashsalt": _HASHSALT}):
        fig = Figure(figsize=(6.4, 4.2))
        ax = fig.add_subplot(111)
        for method, (params, means) in series.items():
            ax.plot(params, means, marker="o", label=method)
        ax.set_xlabel("corruption parameter")
        ax.set_ylabel("mean test MSE" if spec.value == "mse" else "scaled test MSE")
        if spec.log_y:
            ax.set_yscale("log")
        if spec.title:
            ax.set_title(spec.title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(spec.out_path, format="svg", metadata={"Date": None})
    return str(spec.out_path)
