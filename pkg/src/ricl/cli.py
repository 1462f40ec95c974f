"""Command-line front end.

Subcommands: gen, train-ricl, train-laricl, bench, sweep, verify, plot.
Every command is a pure function of (argv, config file, input files): the
same invocation writes byte-identical artifacts.

Settings resolve in three layers: explicit flags beat config-file entries,
which beat built-in defaults. The config file is flat ``key = value`` text
(``#`` comments and blank lines allowed); keys use underscores and are shared
across subcommands, so one file can configure a whole experiment. The
``RICL_OUT_DIR`` environment variable supplies the default output directory
when neither a flag nor a config entry names one.

Generating commands (gen, train-*, bench, sweep) require a seed; usage
errors exit 2 with the usage text on standard error, runtime failures exit 1
with a one-line cause.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .bench import BenchSpec, run_benchmark, robustness_sweep, summarize, summary_to_csv, write_csv
from .datagen import PrefixKind, gen_task, gen_examples, gen_eval_set, get_preset, save_dataset, export_dataset_csv
from .errors import RiclError
from .inner import InnerConfig
from .laricl import LariclConfig, laricl_train
from .linalg import RngStream
from .plotting import PlotSpec, emit_plot
from .ricl import FiniteDifference, OneStepLookahead, RiclConfig, Unrolled, ricl_train

OUT_DIR_ENV = "RICL_OUT_DIR"

# master stream id shared with the benchmark cells so a train-* run with the
# same (seed, kind, param) reproduces the matching bench row's data
_CELL_STREAM = 0xBE7C4


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# one option table drives argparse registration, config coercion, and the
# three-layer merge; (name, type, default, help). A None default with
# required=True is enforced after merging so config files can satisfy it.
_COMMON = [
    ("preset", str, "ci", "problem size preset (ci or paper)"),
    ("out_dir", str, None, f"output directory (default ${OUT_DIR_ENV} or ./out)"),
    ("config", str, None, "flat key=value config file merged under explicit flags"),
]

_DATA = [
    ("seed", int, None, "master seed (required)"),
    ("kind", str, "random", "prefix corruption kind: random, noisy, imbalanced, imbalanced-noisy"),
    ("param", float, None, "corruption parameter (noise std or feature mean)"),
]

_INNER = [
    ("inner_steps", int, 200, "inner solver step budget"),
    ("inner_lr", float, 0.25, "inner solver step size"),
    ("inner_tol", float, 1e-10, "inner solver gradient tolerance"),
]

_OPTIONS = {
    "gen": _COMMON + _DATA + [
        ("count", int, None, "number of examples (default: preset prefix size)"),
        ("split", str, "prefix", "which split to emit: prefix, val, or test"),
    ],
    "train-ricl": _COMMON + _DATA + _INNER + [
        ("outer_steps", int, 60, "outer optimization steps"),
        ("outer_lr", float, 1e4, "outer trial step size (backtracked)"),
        ("batch_size", int, 50, "validation minibatch size"),
        ("meta", str, "unrolled", "meta-gradient method: unrolled, lookahead, or fd"),
        ("eta", float, 0.5, "lookahead/fd simulated inner step size"),
        ("mode", str, "scalar", "weight structure: scalar or transformer"),
        ("gamma", float, 0.0, "transformer-mode regularization strength"),
    ],
    "train-laricl": _COMMON + _DATA + [
        ("outer_steps", int, 150, "outer optimization steps"),
        ("outer_lr", float, 0.5, "outer trial step size (backtracked)"),
        ("ridge", float, 0.01, "ridge added to the aggregate normal equations"),
    ],
    "bench": _COMMON + [
        ("seed", int, None, "first of n_seeds consecutive cell seeds (required)"),
        ("n_seeds", int, 5, "number of seeds per cell"),
        ("methods", str, "icl-uniform,ricl,laricl,oracle", "comma-separated methods"),
        ("jobs", int, 1, "parallel workers (output bytes are jobs-independent)"),
    ],
    "sweep": _COMMON + [
        ("seed", int, None, "first of n_seeds consecutive cell seeds (required)"),
        ("n_seeds", int, 5, "number of seeds per cell"),
        ("methods", str, "icl-uniform,ricl,laricl,oracle", "comma-separated methods"),
        ("jobs", int, 1, "parallel workers (output bytes are jobs-independent)"),
    ],
    "verify": [
        ("preset", str, "ci", "accepted for interface symmetry; checks pin their own sizes"),
        ("seed", int, None, "accepted for interface symmetry; checks pin their own streams"),
        ("config", str, None, "flat key=value config file merged under explicit flags"),
        ("only", str, None, "comma-separated check names to run (default: all)"),
    ],
    "plot": _COMMON + [
        ("csv", str, None, "benchmark CSV to read (required)"),
        ("out", str, "plot.svg", "output SVG filename (under the output directory)"),
        ("plot_kind", str, None, "restrict to one corruption kind"),
        ("methods", str, None, "comma-separated methods to draw (default: all present)"),
        ("value", str, "mse", "column to draw: mse or mse_scaled"),
        ("title", str, "", "plot title"),
        ("log_y", bool, False, "logarithmic y axis"),
    ],
}

_GENERATING = ("gen", "train-ricl", "train-laricl", "bench", "sweep")

# every key any command understands, with its type, for config-file coercion
_ALL_KEYS = {name: typ for opts in _OPTIONS.values() for (name, typ, _, _) in opts}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ricl",
        description="Prefix reweighting for in-context softmax regression.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for command, opts in _OPTIONS.items():
        p = sub.add_parser(command, help=f"{command} (see module docs)")
        for name, typ, _default, help_text in opts:
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, action="store_const", const=True,
                               default=None, help=help_text)
            else:
                p.add_argument(flag, dest=name, type=typ, default=None, help=help_text)
    return parser


def _read_config(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise RiclError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            val = val.strip()
            if key not in _ALL_KEYS:
                raise RiclError(f"{path}:{lineno}: unknown config key {key!r}")
            typ = _ALL_KEYS[key]
            try:
                values[key] = _parse_bool(val) if typ is bool else typ(val)
            except ValueError as exc:
                raise RiclError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _merge(args: argparse.Namespace, command: str) -> dict:
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for name, _typ, default, _help in _OPTIONS[command]:
        explicit = getattr(args, name)
        if explicit is not None:
            merged[name] = explicit
        elif name in config:
            merged[name] = config[name]
        else:
            merged[name] = default
    if merged.get("out_dir") is None:
        merged["out_dir"] = os.environ.get(OUT_DIR_ENV, "out")
    return merged


class _UsageError(Exception):
    pass


def _require(merged: dict, command: str, *names: str) -> None:
    for name in names:
        if merged.get(name) is None:
            raise _UsageError(f"{command} requires --{name.replace('_', '-')}")


def _kind_from(merged: dict) -> PrefixKind:
    kind = merged["kind"]
    param = merged["param"]
    if kind == "random":
        return PrefixKind.random()
    if param is None:
        raise _UsageError(f"kind {kind!r} requires --param")
    if kind == "noisy":
        return PrefixKind.noisy(param)
    if kind == "imbalanced":
        return PrefixKind.imbalanced(param)
    if kind == "imbalanced-noisy":
        return PrefixKind.imbalanced_noisy(param, param)
    raise _UsageError(f"unknown kind {kind!r}")


def _cell(merged: dict, kind: PrefixKind):
    """Task, prefix, validation, and test sets for one benchmark-aligned cell."""
    size = get_preset(merged["preset"])
    base = RngStream(merged["seed"], _CELL_STREAM)
    task = gen_task(size.n, size.d, base.substream(0), m=size.m)
    prefix = gen_examples(kind, task, base.substream(1))
    val = gen_eval_set(size.n_val, task, base.substream(2))
    test = gen_eval_set(size.n_test, task, base.substream(3))
    return task, prefix, val, test


def _tag(merged: dict, kind: PrefixKind) -> str:
    return f"{kind.label}-{kind.param:g}-seed{merged['seed']}"


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _vector_csv(values) -> str:
    lines = ["index,value"]
    for i, v in enumerate(np.asarray(values, dtype=np.float64).ravel()):
        lines.append(f"{i},{repr(float(v))}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_gen(merged: dict) -> int:
    _require(merged, "gen", "seed")
    kind = _kind_from(merged)
    task, prefix, val, test = _cell(merged, kind)
    split = merged["split"]
    if split == "prefix":
        examples = prefix
    elif split == "val":
        examples, kind = val, PrefixKind.random()
    elif split == "test":
        examples, kind = test, PrefixKind.random()
    else:
        raise _UsageError(f"unknown split {merged['split']!r}")
    if merged["count"] is not None:
        if not 0 < merged["count"] <= len(examples):
            raise _UsageError(f"--count must be in 1..{len(examples)} for this split")
        examples = examples[: merged["count"]]
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    stem = f"data-{split}-{_tag(merged, kind)}"
    npz_path = os.path.join(out_dir, stem + ".npz")
    save_dataset(npz_path, examples, seed=merged["seed"], kind=kind, x_true=task.x_true)
    csv_path = os.path.join(out_dir, stem + ".csv")
    _write_text(csv_path, export_dataset_csv(examples))
    print(f"wrote {npz_path}")
    print(f"wrote {csv_path}")
    return 0


def _inner_cfg(merged: dict) -> InnerConfig:
    return InnerConfig(
        max_steps=merged["inner_steps"],
        step_size=merged["inner_lr"],
        grad_tol=merged["inner_tol"],
    )


def _cmd_train_ricl(merged: dict) -> int:
    _require(merged, "train-ricl", "seed")
    kind = _kind_from(merged)
    _, prefix, val, test = _cell(merged, kind)
    inner = _inner_cfg(merged)
    meta_name = merged["meta"]
    if meta_name == "unrolled":
        meta = Unrolled(steps=inner.max_steps, step_size=inner.step_size)
    elif meta_name == "lookahead":
        meta = OneStepLookahead(eta=merged["eta"])
    elif meta_name == "fd":
        meta = FiniteDifference(eta=merged["eta"])
    else:
        raise _UsageError(f"unknown meta method {meta_name!r}")
    cfg = RiclConfig(
        mode=merged["mode"],
        outer_steps=merged["outer_steps"],
        outer_lr=merged["outer_lr"],
        inner=inner,
        batch_size=min(merged["batch_size"], len(val)),
        gamma=merged["gamma"],
        meta_method=meta,
        seed=merged["seed"],
    )
    res = ricl_train(prefix, val, cfg)
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    tag = _tag(merged, kind)
    trace_path = os.path.join(out_dir, f"ricl-trace-{tag}.csv")
    _write_text(trace_path, res.trace.to_csv())
    weights = res.weights if merged["mode"] == "scalar" else res.weights.w
    weights_path = os.path.join(out_dir, f"ricl-weights-{tag}.csv")
    _write_text(weights_path, _vector_csv(weights))
    if merged["mode"] == "transformer":
        bias_path = os.path.join(out_dir, f"ricl-bias-{tag}.csv")
        _write_text(bias_path, _vector_csv(res.weights.bias))
        print(f"wrote {bias_path}")
    from .bench import _softmax_test_mse  # same scoring as the benchmark

    print(f"wrote {trace_path}")
    print(f"wrote {weights_path}")
    print(f"final validation loss {repr(res.trace.l_valid[-1])}")
    print(f"test mse {repr(_softmax_test_mse(res.x_star, test))}")
    return 0


def _cmd_train_laricl(merged: dict) -> int:
    _require(merged, "train-laricl", "seed")
    kind = _kind_from(merged)
    _, prefix, val, test = _cell(merged, kind)
    cfg = LariclConfig(
        outer_steps=merged["outer_steps"],
        outer_lr=merged["outer_lr"],
        ridge=merged["ridge"],
    )
    res = laricl_train(prefix, val, cfg)
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    tag = _tag(merged, kind)
    trace_path = os.path.join(out_dir, f"laricl-trace-{tag}.csv")
    _write_text(trace_path, res.trace.to_csv())
    weights_path = os.path.join(out_dir, f"laricl-weights-{tag}.csv")
    _write_text(weights_path, _vector_csv(res.weights))
    from .bench import _linear_test_mse  # same scoring as the benchmark

    print(f"wrote {trace_path}")
    print(f"wrote {weights_path}")
    print(f"final validation loss {repr(res.trace.l_valid[-1])}")
    print(f"test mse {repr(_linear_test_mse(res.x_star, test))}")
    return 0


def _bench_spec(merged: dict) -> BenchSpec:
    methods = tuple(m.strip() for m in merged["methods"].split(",") if m.strip())
    seeds = tuple(range(merged["seed"], merged["seed"] + merged["n_seeds"]))
    return replace(
        BenchSpec(),
        preset=merged["preset"],
        seeds=seeds,
        methods=methods,
        jobs=merged["jobs"],
    )


def _cmd_bench(merged: dict) -> int:
    _require(merged, "bench", "seed")
    rows = run_benchmark(_bench_spec(merged))
    return _emit_rows(merged, rows, "bench")


def _cmd_sweep(merged: dict) -> int:
    _require(merged, "sweep", "seed")
    rows = robustness_sweep(_bench_spec(merged))
    return _emit_rows(merged, rows, "sweep")


def _emit_rows(merged: dict, rows, stem: str) -> int:
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    write_csv(rows, csv_path)
    summary_path = os.path.join(out_dir, f"{stem}-summary.csv")
    _write_text(summary_path, summary_to_csv(summarize(rows)))
    bad = sum(1 for r in rows if r.status != "ok")
    print(f"wrote {csv_path} ({len(rows)} rows, {bad} failed cells)")
    print(f"wrote {summary_path}")
    return 0


def _cmd_verify(merged: dict) -> int:
    from . import checks  # deferred: checks runs CLI commands for purity tests

    names = checks.check_names()
    if merged["only"]:
        wanted = [n.strip() for n in merged["only"].split(",") if n.strip()]
        unknown = sorted(set(wanted) - set(names))
        if unknown:
            raise _UsageError(f"unknown checks: {', '.join(unknown)}")
        names = tuple(wanted)
    failures = 0
    for name in names:
        result = checks.run_check(name)
        failures += not result.passed
        print(f"{'PASS' if result.passed else 'FAIL'} {name}: {result.detail}")
    print(f"{len(names) - failures}/{len(names)} checks passed")
    return 0 if failures == 0 else 1


def _cmd_plot(merged: dict) -> int:
    _require(merged, "plot", "csv")
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, merged["out"])
    methods = None
    if merged["methods"]:
        methods = tuple(m.strip() for m in merged["methods"].split(",") if m.strip())
    spec = PlotSpec(
        out_path=out_path,
        kind=merged["plot_kind"],
        methods=methods,
        value=merged["value"],
        title=merged["title"],
        log_y=bool(merged["log_y"]),
    )
    emit_plot(merged["csv"], spec)
    print(f"wrote {out_path}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train-ricl": _cmd_train_ricl,
    "train-laricl": _cmd_train_laricl,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code or 0)
    try:
        merged = _merge(args, args.command)
        return _COMMANDS[args.command](merged)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 2
    except RiclError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures exit 1 with a one-line cause
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
