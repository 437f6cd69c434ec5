"""CLI entry point, CSV serialization and static SVG line plots."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import harness, langs, models
from .harness import ConfigError, EpochRecord, ExperimentConfig, TrainingFailure

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_TRAINING = 4

OUT_DIR_ENV = "URNLAB_OUT_DIR"

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(x: float) -> str:
    """Render a number with 6 significant digits."""
    return format(float(x), ".6g")


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def emit_csv(records: list[EpochRecord], out_dir, stem: str,
             attractors: dict[int, tuple[int, int]] | None = None,
             by_length: dict[int, tuple[int, int]] | None = None) -> list[Path]:
    """Write the per-epoch file and any breakdown files; returns the paths.

    Files use LF endings and 6-significant-digit numbers, so repeated runs of
    a seeded experiment serialize byte-identically.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    epoch_path = out_dir / f"{stem}.csv"
    lines = ["epoch,trainloss,testloss,accuracy,maxErrRate"]
    for r in records:
        lines.append(",".join([str(r.epoch), _fmt(r.trainloss), _fmt(r.testloss),
                               _fmt(r.accuracy), _fmt(r.max_err_rate)]))
    epoch_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(epoch_path)

    if attractors is not None:
        path = out_dir / f"{stem}_attractors.csv"
        lines = ["metric,accuracy"]
        for bin_id in sorted(attractors):
            total, errors = attractors[bin_id]
            lines.append(f"{bin_id},{_fmt(1.0 - errors / total)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)

    if by_length is not None:
        path = out_dir / f"{stem}_by_length.csv"
        lines = ["p,acc"]
        for p in sorted(by_length):
            total, errors = by_length[p]
            lines.append(f"{p},{_fmt(1.0 - errors / total)}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def read_csv(path) -> tuple[list[str], list[list[float]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = [[float(cell) for cell in line.split(",")] for line in lines[1:] if line]
    return header, rows


# ---------------------------------------------------------------------------
# SVG line plots
# ---------------------------------------------------------------------------

@dataclass
class Series:
    label: str
    xs: list[float]
    ys: list[float]


@dataclass
class PlotSpec:
    title: str
    xlabel: str
    ylabel: str
    reverse_x: bool = False


WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 24, 40, 52


def _axis_range(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def render_plot(series: list[Series], spec: PlotSpec, path) -> Path:
    """Write a standalone SVG with one polyline per non-empty series.

    With reverse_x, decreasing x values run left to right.
    """
    xs_all = [x for s in series for x in s.xs]
    ys_all = [y for s in series for y in s.ys]
    x_lo, x_hi = _axis_range(xs_all)
    y_lo, y_hi = _axis_range(ys_all)
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        frac = (x - x_lo) / (x_hi - x_lo)
        if spec.reverse_x:
            frac = 1.0 - frac
        return MARGIN_L + frac * plot_w

    def py(y: float) -> float:
        return MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{spec.title}</text>',
        f'<line x1="{MARGIN_L}" y1="{HEIGHT - MARGIN_B}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        parts.append(
            f'<text x="{px(xv):.1f}" y="{HEIGHT - MARGIN_B + 18}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{format(xv, '.4g')}</text>")
        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{format(yv, ".4g")}</text>')
    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{spec.xlabel}</text>')
    parts.append(
        f'<text x="18" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2})">{spec.ylabel}</text>')
    for i, s in enumerate(series):
        if not s.xs:
            continue
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        ly = MARGIN_T + 14 + 16 * i
        parts.append(f'<rect x="{WIDTH - MARGIN_R - 130}" y="{ly - 9}" width="12" '
                     f'height="4" fill="{color}"/>')
        parts.append(f'<text x="{WIDTH - MARGIN_R - 112}" y="{ly - 3}" '
                     f'font-family="sans-serif" font-size="11">{s.label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def render_report(out_dir) -> list[Path]:
    """Build the standard figure set from the CSV files in a run directory."""
    out_dir = Path(out_dir)
    plots_dir = out_dir / "plots"
    runs: dict[str, dict[str, dict[str, list[float]]]] = {}
    for path in sorted(out_dir.glob("*.csv")):
        if path.stem.endswith(("_attractors", "_by_length")):
            continue
        header, rows = read_csv(path)
        if header[:2] != ["epoch", "trainloss"]:
            continue
        task, _, label = path.stem.rpartition("_")
        columns = {name: [row[i] for row in rows] for i, name in enumerate(header)}
        runs.setdefault(task, {})[label] = columns
    written = []
    for task, by_model in runs.items():
        err_col = "maxErrRate" if task == "dyck" else None
        figures = [
            ("testloss", PlotSpec(f"{task}: test loss", "epoch", "testloss"),
             "epoch", "testloss"),
            ("error_rate", PlotSpec(f"{task}: error rate", "epoch", "error rate"),
             "epoch", err_col),
            ("error_vs_trainloss",
             PlotSpec(f"{task}: error rate vs training loss", "trainloss",
                      "error rate", reverse_x=True),
             "trainloss", err_col),
        ]
        plots_dir.mkdir(parents=True, exist_ok=True)
        for name, spec, xcol, ycol in figures:
            series = []
            for label in sorted(by_model):
                cols = by_model[label]
                ys = (cols[ycol] if ycol else
                      [1.0 - a for a in cols["accuracy"]])
                series.append(Series(label=label, xs=cols[xcol], ys=ys))
            written.append(render_plot(series, spec, plots_dir / f"{task}_{name}.svg"))
        suffix, xlabel, fig = (("_attractors", "attractors", "error_by_attractors")
                               if task == "dyck" else
                               ("_by_length", "n+m", "error_by_length"))
        series = []
        for label in sorted(by_model):
            path = out_dir / f"{task}_{label}{suffix}.csv"
            if not path.exists():
                continue
            _, rows = read_csv(path)
            series.append(Series(label=label, xs=[r[0] for r in rows],
                                 ys=[1.0 - r[1] for r in rows]))
        if series:
            written.append(render_plot(
                series, PlotSpec(f"{task}: error rate by {xlabel}", xlabel,
                                 "error rate"), plots_dir / f"{task}_{fig}.svg"))
    return written


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

_FLAG_FIELDS = [
    ("--task", "task", str),
    ("--arch", "arch", str),
    ("--units", "units", int),
    ("--vocab-size", "vocab_size", int),
    ("--embed-size", "embed_size", int),
    ("--lr", "lr", float),
    ("--batch", "batch_size", int),
    ("--epochs", "epochs", int),
    ("--dropout", "dropout", float),
    ("--seed", "seed", int),
    ("--train-count", "train_count", int),
    ("--test-count", "test_count", int),
    ("--k-train", "k_train", int),
    ("--k-test", "k_test", int),
    ("--n-pairs", "n_pairs", int),
    ("--pair-count", "pair_count", int),
]


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", choices=("cross-serial", "dyck"),
                        help="start from a shipped preset")
    parser.add_argument("--config", help="start from a config file")
    for flag, dest, kind in _FLAG_FIELDS:
        parser.add_argument(flag, dest=dest, type=kind, default=None)
    parser.add_argument("--depth-train", dest="depth_train", metavar="LO:HI")
    parser.add_argument("--depth-test", dest="depth_test", metavar="LO:HI")
    parser.add_argument("--exclude-empty", action="store_true",
                        help="drop the empty (m, n) = (0, 0) string")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("pass either --preset or --config, not both")
    if args.preset:
        cfg = harness.load_preset(args.preset)
    elif args.config:
        cfg = harness.load_config_file(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for _, dest, _ in _FLAG_FIELDS:
        value = getattr(args, dest)
        if value is not None:
            overrides[dest] = value
    for dest in ("depth_train", "depth_test"):
        value = getattr(args, dest)
        if value is not None:
            overrides[dest] = harness._parse_field(dest, value)
    if args.exclude_empty:
        overrides["include_empty"] = False
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def config_from_meta(meta: dict) -> ExperimentConfig:
    """Rebuild a config from checkpoint metadata."""
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, value in meta.items():
        if key not in fields:
            continue
        if key in ("depth_train", "depth_test"):
            value = (harness._parse_field(key, value)
                     if isinstance(value, str) else tuple(value))
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out or os.environ.get(OUT_DIR_ENV) or "runs"
    return Path(out)


def _write_datasets(config: ExperimentConfig, out: Path) -> list[Path]:
    train, test = harness.build_datasets(config)
    vocab = harness.task_vocab(config)
    base = {"task": config.task, "seed": config.seed}
    if config.task == "cross-serial":
        extra_train = {"k": config.k_train}
        extra_test = {"k": config.k_test}
    else:
        extra_train = {"N": config.n_pairs, "pairs": config.pair_count,
                       "depth": f"{config.depth_train[0]}:{config.depth_train[1]}"}
        extra_test = {"N": config.n_pairs, "pairs": config.pair_count,
                      "depth": f"{config.depth_test[0]}:{config.depth_test[1]}"}
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for split, strings, extra in (("train", train, extra_train),
                                  ("test", test, extra_test)):
        path = out / f"{config.task}_{split}.txt"
        langs.write_dataset(path, strings, vocab,
                            {**base, "split": split, "count": len(strings), **extra})
        paths.append(path)
    return paths


def _cmd_generate(args) -> int:
    config = _config_from_args(args)
    for path in _write_datasets(config, _out_dir(args)):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    out = _out_dir(args)
    _write_datasets(config, out)
    stem = config.run_name
    try:
        result = harness.run_experiment(config, progress=print)
    except TrainingFailure as failure:
        emit_csv(failure.records, out, stem)
        print(f"error: training: {failure}", file=sys.stderr)
        return EXIT_TRAINING
    paths = emit_csv(result.records, out, stem,
                     attractors=result.best_epoch_attractors(),
                     by_length=result.final_by_length())
    ckpt = out / f"{stem}.ckpt"
    models.save_checkpoint(ckpt, result.model, result.vocab, config.to_meta())
    for path in [*paths, ckpt]:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model, _, meta = models.load_checkpoint(args.checkpoint)
    config = config_from_meta(meta)
    _, test_strings = harness.build_datasets(config)
    k = config.k_test if config.task == "cross-serial" else None
    data = harness.encode_dataset(test_strings, config.task, k)
    if config.task == "cross-serial":
        ev = harness.evaluate_cross_serial(model, data, config.k_test)
        print(f"{config.run_name}: testloss {_fmt(ev.testloss)} "
              f"error_rate {_fmt(ev.error_rate)}")
    else:
        ev = harness.evaluate_dyck(model, data, config.pair_count)
        print(f"{config.run_name}: testloss {_fmt(ev.testloss)} "
              f"mean_err {_fmt(ev.mean_err)} maxErrRate {_fmt(ev.max_err_rate)}")
    return EXIT_OK


def _cmd_report(args) -> int:
    written = render_report(_out_dir(args))
    if not written:
        print("error: config: no per-epoch CSV files found", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_selftest(_args) -> int:
    from . import selftest

    return selftest.run_all()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urnlab",
        description="Train and evaluate unitary-evolution and LSTM language "
                    "models on synthetic syntax benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write dataset files")
    _add_config_args(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="run one experiment, write CSVs and checkpoint")
    _add_config_args(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a checkpoint on its test set")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="render SVG figures from run CSVs")
    p.add_argument("--out", help="directory holding the CSV files")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("selftest", help="run the fast property suites")
    p.set_defaults(func=_cmd_selftest)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingFailure as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
