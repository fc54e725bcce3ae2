"""Command-line entry point: ``groupgating <command> [flags]``.

Commands: generate, train, eval, analyze, render, reproduce-table1.
Everything beyond the shared flags comes from the JSON config. Logs are
``key=value`` lines on stderr; data goes to files under ``--out`` (and
training history additionally to stdout).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .analysis import (
    analyze_filters,
    group_statistics,
    phase_difference_table,
    property_histograms,
)
from .config import ConfigError, load_config
from .datagen import generate
from .experiments import (
    StageError,
    accuracy_curves,
    classify,
    dataset_spec,
    reproduce_table1,
    train_model,
)
from .model import FactorModel
from .render import (
    render_mosaic,
    render_phase_scatter,
    render_property_map,
    render_topographic_map,
)
from .training import TrainingDiverged

log = logging.getLogger("groupgating")

SPECTRUM_COLUMNS = ("filter_index", "frequency", "orientation", "phase", "peak_magnitude")


def _out_dir(args, cfg):
    out = Path(args.out or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_whitening(args):
    return io.read_whitening(args.whitening) if args.whitening else None


# --- commands ------------------------------------------------------------------

def cmd_generate(args, cfg):
    out = _out_dir(args, cfg)
    spec = dataset_spec(cfg)
    frames = io.read_frames(args.frames) if args.frames else None
    splits = generate(spec, frames)
    path = out / "dataset.rgd"
    io.write_dataset(path, splits)
    log.info("event=wrote path=%s pairs=%d", path, sum(len(s) for s in splits))
    if splits.whitening is not None:
        io.write_whitening(out / "whitening.rgw", splits.whitening)
        log.info("event=wrote path=%s components=%d", out / "whitening.rgw",
                 splits.whitening.n_components_)
    return [path]


def _read_splits(path):
    header, parts = io.read_dataset(path)
    if len(parts) != 3:
        raise StageError("load", f"{path} does not hold train/valid/test splits")
    return header, parts


def cmd_train(args, cfg):
    out = _out_dir(args, cfg)
    _, (tr, va, _) = _read_splits(args.data)
    rows = []

    def progress(epoch, train_loss, valid_loss):
        train_loss, valid_loss = float(train_loss), float(valid_loss)
        rows.append((epoch, train_loss, valid_loss))
        if not args.quiet:
            print(f"{epoch},{train_loss!r},{valid_loss!r}", flush=True)

    if not args.quiet:
        print("epoch,train_loss,valid_loss", flush=True)
    result = train_model(cfg["model"], cfg["train"], tr, va, progress=progress)
    io.write_csv_report(out / "history.csv", ("epoch", "train_loss", "valid_loss"), rows)
    train_cfg = dict(cfg["train"], model=cfg["model"])
    io.write_model(out / "model.rgm", result.model, train_config=train_cfg)
    log.info("event=wrote path=%s epochs=%d", out / "model.rgm", len(rows))
    return [out / "model.rgm", out / "history.csv"]


def cmd_eval(args, cfg):
    out = _out_dir(args, cfg)
    model, _ = io.read_model(args.model)
    _, splits = _read_splits(args.data)
    clf, valid_acc, report = classify(model, splits, cfg["classifier"])
    doc = dict(report.to_dict(), valid_accuracy=valid_acc,
               validation_scores={repr(k): v for k, v in clf.validation_scores_.items()})
    io.write_json_report(out / "report.json", doc)
    io.write_csv_report(out / "report.csv", ("class", "accuracy"),
                        [(k, float(a)) for k, a in enumerate(report.per_class)])
    log.info("event=evaluated accuracy=%.4f l2=%g", report.accuracy, clf.chosen_l2_)
    return [out / "report.json", out / "report.csv"]


def cmd_analyze(args, cfg):
    out = _out_dir(args, cfg)
    model, _ = io.read_model(args.model)
    if not isinstance(model, FactorModel):
        raise StageError("analyze", "only gated models carry input/output filter pairs")
    inv = _load_whitening(args)
    inv = None if inv is None else inv.inverse_
    written = []
    summary = {}
    for side, W in (("x", model.Wx), ("y", model.Wy)):
        spectra = analyze_filters(W, inv)
        path = out / f"spectra_{side}.csv"
        io.write_csv_report(path, SPECTRUM_COLUMNS, [s.row() for s in spectra])
        written.append(path)
        summary[f"histogram_{side}"] = property_histograms(spectra)
        summary[f"degenerate_{side}"] = sum(s.degenerate for s in spectra)
        if side == "x" and model.core.kind in ("grouped", "topographic"):
            summary["group_statistics"] = group_statistics(spectra, model.core.groups)
    table = phase_difference_table(model, inv)
    path = out / "phase_differences.csv"
    io.write_csv_report(path, ("frequency_bin", "orientation_bin", "input_factor", "output_factor",
                               "phase_difference"),
                        [(k[0], k[1], d, e, delta) for k, d, e, delta in table.pairs])
    written.append(path)
    io.write_json_report(out / "analysis.json", summary)
    written.append(out / "analysis.json")
    log.info("event=analyzed filters=%d phase_pairs=%d", model.Wx.shape[1], len(table.pairs))
    return written


def cmd_render(args, cfg):
    out = _out_dir(args, cfg)
    model, _ = io.read_model(args.model)
    if not isinstance(model, FactorModel):
        raise StageError("render", "only gated models can be rendered")
    wt = _load_whitening(args)
    Wx = model.Wx if wt is None else wt.inverse_ @ model.Wx
    Wy = model.Wy if wt is None else wt.inverse_ @ model.Wy
    written = []
    core = model.core
    for side, W in (("x", Wx), ("y", Wy)):
        path = out / f"filters_{side}.pgm"
        if core.kind == "topographic":
            render_topographic_map(path, W, core.grid_rows, core.grid_cols)
        else:
            render_mosaic(path, W)
        written.append(path)
    spectra = analyze_filters(Wx)
    layout = (core.grid_rows, core.grid_cols) if core.kind == "topographic" else None
    for prop, ext in (("frequency", "pgm"), ("orientation", "ppm"), ("phase", "ppm")):
        path = out / f"{prop}_map.{ext}"
        render_property_map(path, spectra, prop, layout)
        written.append(path)
    path = out / "phase_differences.ppm"
    render_phase_scatter(path, phase_difference_table(model, None if wt is None else wt.inverse_))
    written.append(path)
    log.info("event=rendered images=%d", len(written))
    return written


def cmd_reproduce_table1(args, cfg):
    out = _out_dir(args, cfg)
    rows, runs = reproduce_table1(cfg)
    io.write_csv_report(out / "table1.csv",
                        ("task", "core_kind", "num_filters", "equivalent_filters", "accuracy"), rows)
    detail = [{"task": t, "core_kind": k, "num_filters": f, "learning_rate": r.learning_rate,
               "valid_accuracy": r.valid_accuracy, "report": r.report.to_dict()}
              for (t, k, f), r in runs.items()]
    io.write_json_report(out / "table1.json", detail)
    written = [out / "table1.csv", out / "table1.json"]
    if cfg["curves"]["enabled"]:
        mean_rows, seed_rows = accuracy_curves(cfg)
        io.write_csv_report(out / "curves.csv", ("model", "train_size", "accuracy"), mean_rows)
        io.write_csv_report(out / "curves_by_seed.csv", ("model", "train_size", "seed", "accuracy"),
                            seed_rows)
        written += [out / "curves.csv", out / "curves_by_seed.csv"]
    for row in rows:
        log.info("event=table1_row task=%s core_kind=%s num_filters=%d equivalent_filters=%d "
                 "accuracy=%.4f", *row)
    return written


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "render": cmd_render,
    "reproduce-table1": cmd_reproduce_table1,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="overrides data and training seeds")
    common.add_argument("--out", help="output directory (default: config output_dir)")
    common.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")

    parser = argparse.ArgumentParser(prog="groupgating", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", parents=[common], help="synthesize a dataset")
    p.add_argument("--frames", help="frame container (.rgf) for the natural task")
    p = sub.add_parser("train", parents=[common], help="train a model on a dataset file")
    p.add_argument("--data", required=True)
    p = sub.add_parser("eval", parents=[common], help="classify transformations from mapping units")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    for name, text in (("analyze", "filter spectra and phase differences"),
                       ("render", "filter mosaics and property maps")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--model", required=True)
        p.add_argument("--whitening", help="whitening file to map filters back to pixels")
    sub.add_parser("reproduce-table1", parents=[common],
                   help="diagonal vs grouped accuracy table and training-size curves")
    return parser


class _KeyValueFormatter(logging.Formatter):
    def format(self, record):
        return f"level={record.levelname.lower()} {record.getMessage()}"


def _setup_logging(quiet):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_KeyValueFormatter())
    log.handlers[:] = [handler]
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.quiet)
    try:
        cfg = load_config(args.config, args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            written = COMMANDS[args.command](args, cfg)
        missing = [str(p) for p in written if not os.path.exists(p)]
        if missing:
            raise StageError(args.command, f"missing outputs {missing}")
    except ConfigError as exc:
        log.error("command=%s stage=config error=%s", args.command, json.dumps(str(exc)))
        return 2
    except StageError as exc:
        log.error("command=%s stage=%s error=%s", args.command, exc.stage, json.dumps(str(exc)))
        return 1
    except TrainingDiverged as exc:
        log.error("command=%s stage=train error=%s", args.command, json.dumps(str(exc)))
        return 1
    except (io.FormatError, OSError, ValueError) as exc:
        log.error("command=%s stage=io error=%s", args.command, json.dumps(str(exc)))
        return 1
    log.info("event=done command=%s outputs=%d", args.command, len(written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
