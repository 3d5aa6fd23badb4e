"""Command-line entry point: split / train / predict / fuse / eval / demo.

Exit codes are a stable contract: 0 success, 2 configuration error, 3 data
error, 4 training error, 5 checkpoint error, 6 fusion-input error.  Every
command validates its inputs and computes its results before writing any
output file, so a failing run leaves no partial artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ARCH_NAMES, ConfigError, load_config
from .data import DataError, load_manifest, load_samples, split
from .fusion import (
    FusionInputError,
    decide,
    fuse_scores,
    merge_score_files,
    read_fused_csv,
    weight_sweep,
    write_fused_csv,
    write_single_scores,
    write_sweep_csv,
)
from .metrics import (
    MetricsError,
    confusion,
    metrics_report,
    report_text,
    roc,
    write_report_csv,
    write_roc_csv,
)
from .models import KIND_INCEPTION, ModelConfigError, build_model
from .reports import write_confusion_svg, write_history_csv, write_history_svg, write_roc_svg
from .synthetic import write_dataset
from .training import TrainingError, train

INDEX_FILES = ("train.idx", "val.idx", "test.idx")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
EXIT_CHECKPOINT = 5
EXIT_FUSION = 6

_EXIT_BY_ERROR = (
    (ConfigError, EXIT_CONFIG),
    (ModelConfigError, EXIT_CONFIG),
    (DataError, EXIT_DATA),
    (MetricsError, EXIT_DATA),
    (TrainingError, EXIT_TRAINING),
    (CheckpointError, EXIT_CHECKPOINT),
    (FusionInputError, EXIT_FUSION),
)
_HANDLED_ERRORS = tuple(error for error, _ in _EXIT_BY_ERROR)


def _arch_of(spec):
    return "inception" if spec.kind == KIND_INCEPTION else "densenet"


def _manifest_path(config, flag_value):
    path = flag_value or config.manifest
    if not path:
        raise ConfigError("no manifest given; pass one as an argument or set 'manifest'")
    return Path(path)


def _out_dir(config):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_index_file(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"index file not found: {path}")
    ids = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not ids:
        raise DataError(f"index file {path} is empty")
    return ids


def _indices_for_ids(manifest, ids, source):
    positions = {record.sample_id: i for i, record in enumerate(manifest)}
    indices = []
    for sample_id in ids:
        if sample_id not in positions:
            raise DataError(f"id {sample_id!r} from {source} is not in the manifest")
        indices.append(positions[sample_id])
    return indices


# Pipeline steps (shared between individual commands and `demo`) ------------


def run_split(config, manifest_path):
    manifest = load_manifest(manifest_path)
    parts = split(manifest, config.split_config())
    out = _out_dir(config)
    paths = []
    for name, indices in zip(INDEX_FILES, parts):
        path = out / name
        path.write_text(
            "".join(manifest[i].sample_id + "\n" for i in indices), encoding="utf-8"
        )
        paths.append(path)
    sizes = "/".join(str(len(p)) for p in parts)
    print(f"split {len(manifest)} samples -> {sizes} (train/val/test) in {out}")
    return paths


def run_train(config, manifest_path, arch):
    spec = config.model_spec(arch)
    manifest = load_manifest(manifest_path)
    train_idx, val_idx, _ = split(manifest, config.split_config())
    train_images, train_labels, _ = load_samples(
        manifest, train_idx, smoothing=config.smoothing, input_shape=spec.input_shape
    )
    val_images, val_labels, _ = load_samples(
        manifest, val_idx, smoothing=config.smoothing, input_shape=spec.input_shape
    )
    model = build_model(spec, seed=config.seed)
    history, checkpoint = train(
        model, (train_images, train_labels), (val_images, val_labels), config.train_config()
    )
    out = _out_dir(config)
    checkpoint_path = out / f"{arch}.ckpt"
    save_checkpoint(checkpoint, checkpoint_path)
    write_history_csv(out / f"history_{arch}.csv", history)
    write_history_svg(out / f"curves_{arch}.svg", history, title=f"{arch} training history")
    print(
        f"trained {arch} for {len(history)} epochs; best epoch "
        f"{checkpoint.best_epoch + 1} (val loss {checkpoint.best_val_loss:.6f}) "
        f"-> {checkpoint_path}"
    )
    return checkpoint_path


def run_predict(config, checkpoint_path, split_path, manifest_path, out_path=None):
    checkpoint = load_checkpoint(checkpoint_path)
    model = checkpoint.build_model()
    manifest = load_manifest(manifest_path)
    ids = _read_index_file(split_path)
    indices = _indices_for_ids(manifest, ids, split_path)
    images, labels, ids = load_samples(
        manifest, indices, smoothing=config.smoothing, input_shape=model.spec.input_shape
    )
    rows = []
    for start in range(0, images.shape[0], config.batch_size):
        stop = min(start + config.batch_size, images.shape[0])
        for offset, score in enumerate(model.scores(images[start:stop])):
            i = start + offset
            rows.append((ids[i], float(score), int(labels[i])))
    if out_path is None:
        out_path = _out_dir(config) / f"scores_{_arch_of(model.spec)}.csv"
    write_single_scores(out_path, rows)
    print(f"wrote {len(rows)} scores -> {out_path}")
    return out_path


def run_fuse(config, scores_a, scores_b, sweep=False):
    records = merge_score_files([scores_a, scores_b])
    out = _out_dir(config)
    if sweep:
        weights, table = weight_sweep(
            records, step=config.sweep_step, threshold=config.threshold
        )
        sweep_path = out / "sweep.csv"
        write_sweep_csv(sweep_path, table)
        print(
            f"sweep over {len(table)} weight pairs -> {sweep_path}; "
            f"chosen weights {weights.values[0]:.2f}/{weights.values[1]:.2f}"
        )
    else:
        weights = config.fusion_weights()
    fused_rows = []
    for record in records:
        score = fuse_scores(weights, record)
        fused_rows.append((record.sample_id, score, decide(score, config.threshold), record.label))
    fused_path = out / "fused.csv"
    write_fused_csv(fused_path, fused_rows)
    print(f"fused {len(fused_rows)} samples -> {fused_path}")
    return fused_path


def run_eval(config, fused_path):
    rows = read_fused_csv(fused_path)
    missing = [sample_id for sample_id, _, _, label in rows if label is None]
    if missing:
        raise MetricsError(
            f"eval needs labels; {len(missing)} rows lack one (first: {missing[0]!r})"
        )
    scores = [row[1] for row in rows]
    decisions = [row[2] for row in rows]
    labels = [row[3] for row in rows]
    counts = confusion(decisions, labels)
    report = metrics_report(counts)
    curve = None
    if len(set(labels)) < 2:
        print(
            "warning: labels contain a single class; ROC/AUC omitted", file=sys.stderr
        )
    else:
        curve = roc(scores, labels)
    out = _out_dir(config)
    text = report_text(report)
    (out / "metrics.txt").write_text(text, encoding="utf-8")
    write_report_csv(out / "metrics.csv", report, auc=None if curve is None else curve.auc)
    write_confusion_svg(out / "confusion.svg", counts)
    if curve is not None:
        write_roc_csv(out / "roc.csv", curve)
        write_roc_svg(out / "roc.svg", curve)
        print(f"AUC {curve.auc:.6f}")
    print(text, end="")
    print(f"metrics -> {out / 'metrics.txt'}")
    return report


def run_demo(config):
    out = _out_dir(config)
    data_dir = out / "data"
    manifest_path = write_dataset(
        data_dir, n=config.demo_samples, size=config.demo_size, seed=config.seed
    )
    print(f"demo: {config.demo_samples} synthetic samples -> {data_dir}")
    _, _, test_path = run_split(config, manifest_path)
    score_paths = []
    for arch in ARCH_NAMES:
        checkpoint_path = run_train(config, manifest_path, arch)
        score_paths.append(run_predict(config, checkpoint_path, test_path, manifest_path))
    fused_path = run_fuse(config, *score_paths)
    run_eval(config, fused_path)
    return EXIT_OK


# Argument parsing ----------------------------------------------------------


def _overrides(args):
    keys = ("seed", "out_dir", "arch", "loss", "weights", "threshold", "smoothing")
    return {key: getattr(args, key, None) for key in keys}


def _load(args):
    return load_config(path=args.config, overrides=_overrides(args))


def cmd_split(args):
    config = _load(args)
    run_split(config, _manifest_path(config, args.manifest))
    return EXIT_OK


def cmd_train(args):
    config = _load(args)
    run_train(config, _manifest_path(config, args.manifest), config.arch)
    return EXIT_OK


def cmd_predict(args):
    config = _load(args)
    run_predict(
        config,
        Path(args.checkpoint),
        Path(args.split_file),
        _manifest_path(config, args.manifest),
        out_path=Path(args.out) if args.out else None,
    )
    return EXIT_OK


def cmd_fuse(args):
    config = _load(args)
    run_fuse(config, Path(args.scores_a), Path(args.scores_b), sweep=args.sweep)
    return EXIT_OK


def cmd_eval(args):
    config = _load(args)
    run_eval(config, Path(args.fused))
    return EXIT_OK


def cmd_demo(args):
    return run_demo(_load(args))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lesionfuse",
        description="Toy two-backbone skin-lesion classifier with score-level fusion.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--out-dir", dest="out_dir", metavar="DIR", help="artifact directory")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("split", parents=[common], help="write train/val/test id lists")
    p.add_argument("manifest", nargs="?", help="CSV manifest (id,path,label)")
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train one backbone")
    p.add_argument("manifest", nargs="?", help="CSV manifest (id,path,label)")
    p.add_argument("--arch", choices=ARCH_NAMES, help="backbone to train")
    p.add_argument("--loss", choices=("bce", "softmax"), help="loss head")
    p.add_argument("--smoothing", choices=("none", "mean3", "median3"))
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score a split with a checkpoint")
    p.add_argument("checkpoint", help="checkpoint file from train")
    p.add_argument("split_file", help="id list (one per line), e.g. test.idx")
    p.add_argument("manifest", nargs="?", help="CSV manifest (id,path,label)")
    p.add_argument("--smoothing", choices=("none", "mean3", "median3"))
    p.add_argument("--out", metavar="FILE", help="score CSV path")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("fuse", parents=[common], help="fuse two score CSVs")
    p.add_argument("scores_a", help="first model's score CSV")
    p.add_argument("scores_b", help="second model's score CSV")
    p.add_argument("--weights", metavar="W1,W2", help="fusion weights (default 0.45,0.55)")
    p.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")
    p.add_argument("--sweep", action="store_true", help="pick weights by accuracy sweep")
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="metrics report from a fused CSV")
    p.add_argument("fused", help="fused score CSV with labels")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("demo", parents=[common], help="full pipeline on synthetic data")
    p.add_argument("--loss", choices=("bce", "softmax"), help="loss head")
    p.set_defaults(handler=cmd_demo)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.handler(args)
    except _HANDLED_ERRORS as exc:
        code = next(code for error, code in _EXIT_BY_ERROR if isinstance(exc, error))
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
