"""Experiment runner.

Subcommands::

    sedlab gen-data  --config cfg.ini --out DIR [--seed N]
    sedlab train     --config cfg.ini --data DIR --out DIR [--variant V] [--seed N]
    sedlab postproc  --checkpoint F --data DIR --out DIR --mode global|classwise|sweep
                     [--alpha A] [--beta B] [--split S]
    sedlab eval      --detected CSV --data DIR --out DIR [--split S]
                     [--group NAME=csv1,csv2,...] ...
    sedlab rerun     --manifest F --out DIR

Configs are plain ``key = value`` INI files (see the README for the
schema).  ``--data`` falls back to the ``SEDLAB_DATA_ROOT`` environment
variable.  Every command writes a ``manifest.json`` capturing the fully
resolved configuration, seed, input paths, and dataset hash; ``rerun``
replays a manifest into a fresh output directory and reproduces every
artifact byte for byte.

Exit codes: 0 success, 2 configuration errors, 3 data/format errors,
4 numeric failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DatasetSpec, build_dataset, dataset_hash, load_dataset, reference_events, save_dataset
from .errors import ConfigError, DataError, FormatError, InvalidInputError, NumericError
from .events import EventInterval, read_intervals_csv, write_intervals_csv
from .evaluation import (
    concurrency_stats,
    confusion_matrix_run,
    match_events_run,
    score,
    welch_t,
)
from .network import ConvRecurrentNet, ModelConfig
from .postprocess import (
    alpha_grid,
    beta_grid,
    classwise_postproc,
    fit_classwise_params,
    fit_tail_models,
    global_params,
    sweep_grid,
)
from .scenes import SceneConfig
from .training import (
    TrainConfig,
    load_checkpoint,
    predict_posterior_batch,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# ----------------------------------------------------------------------
# config parsing


def _read_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


def _section(parser, name) -> dict:
    return dict(parser[name]) if parser.has_section(name) else {}


def _get(sec: dict, key: str, cast, default):
    if key not in sec or sec[key] == "":
        return default
    raw = sec[key]
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _int_tuple(raw: str) -> tuple:
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def _float_tuple(raw: str) -> tuple:
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


def scene_from_config(parser) -> SceneConfig:
    sec = _section(parser, "scene")
    return SceneConfig(
        n_classes=_get(_section(parser, "data"), "n_classes", int, 3),
        clip_len=_get(sec, "clip_len", float, 3.2),
        fps=_get(sec, "fps", float, 50.0),
        n_channels=_get(sec, "channels", int, 16),
        duration_range=(
            _get(sec, "duration_lo", float, 0.4),
            _get(sec, "duration_hi", float, 1.6),
        ),
        prototype_seed=_get(sec, "prototype_seed", int, 7),
        max_polyphony=_get(sec, "max_polyphony", int, 2),
        bg_level=_get(sec, "bg_level", float, 0.3),
        event_rate=_get(sec, "event_rate", float, 2.5),
        event_gain=_get(sec, "event_gain", float, 3.0),
        ramp_frac=_get(sec, "ramp_frac", float, 0.2),
        channel_tilt=_get(sec, "channel_tilt", float, 0.3),
        response_jitter=_get(sec, "response_jitter", float, 0.6),
        class_weights=_get(sec, "class_weights", _float_tuple, None),
        class_gains=_get(sec, "class_gains", _float_tuple, None),
        gain_jitter=(
            _get(sec, "gain_jitter_lo", float, 0.8),
            _get(sec, "gain_jitter_hi", float, 1.2),
        ),
        spectral_overlap=_get(sec, "spectral_overlap", float, 0.0),
    )


def dataset_spec_from_config(parser) -> DatasetSpec:
    sec = _section(parser, "data")
    return DatasetSpec(
        scene=scene_from_config(parser),
        n_strong=_get(sec, "strong", int, 200),
        n_weak=_get(sec, "weak", int, 120),
        n_unlabeled=_get(sec, "unlabeled", int, 1000),
        n_validation=_get(sec, "validation", int, 100),
    )


def model_config_from_config(parser, n_mel_in: int, n_classes: int) -> ModelConfig:
    sec = _section(parser, "model")
    return ModelConfig(
        n_mel_in=n_mel_in,
        conv_channels=_get(sec, "conv_channels", _int_tuple, (16, 32, 64)),
        pool_time=_get(sec, "pool_time", _int_tuple, (1, 2, 2)),
        pool_freq=_get(sec, "pool_freq", _int_tuple, (4, 2, 2)),
        rnn_hidden=_get(sec, "rnn_hidden", int, 32),
        rnn_layers=_get(sec, "rnn_layers", int, 1),
        n_classes=n_classes,
        dropout_rate=_get(sec, "dropout", float, 0.5),
    )


def train_config_from_config(parser, variant=None, seed=None) -> TrainConfig:
    sec = _section(parser, "train")
    return TrainConfig(
        variant=variant if variant is not None else _get(sec, "variant", str, "crst"),
        epochs=_get(sec, "epochs", int, 30),
        steps_per_epoch=_get(sec, "steps_per_epoch", int, None),
        batch_strong=_get(sec, "batch_strong", int, 6),
        batch_weak=_get(sec, "batch_weak", int, 6),
        batch_unlabeled=_get(sec, "batch_unlabeled", int, 12),
        lr=_get(sec, "lr", float, 0.001),
        ema_decay=_get(sec, "ema_decay", float, 0.999),
        ema_rampup=_get(sec, "ema_rampup", bool, True),
        ramp_peak=_get(sec, "ramp_peak", float, 3.0),
        consistency_peak=_get(sec, "consistency_peak", float, 2.0),
        perturbation=_get(sec, "perturbation", str, "noise30db"),
        snr_db=_get(sec, "snr_db", float, 30.0),
        shift_sigma=_get(sec, "shift_sigma", float, 40.0),
        pseudo_view=_get(sec, "pseudo_view", str, "own"),
        seed=seed if seed is not None else _get(sec, "seed", int, 0),
    )


# ----------------------------------------------------------------------
# manifests


def write_manifest(out_dir: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["tool_version"] = __version__
    (out_dir / "manifest.json").write_text(json.dumps(payload, sort_keys=True, indent=2))


def _resolve_data_dir(args) -> Path:
    data = getattr(args, "data", None) or os.environ.get("SEDLAB_DATA_ROOT")
    if not data:
        raise ConfigError("no dataset directory: pass --data or set SEDLAB_DATA_ROOT")
    return Path(data)


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    out = _prepare_out(args)
    if args.manifest_payload is None:
        parser = _read_config(args.config)
        spec = dataset_spec_from_config(parser)
        seed = args.seed if args.seed is not None else _get(_section(parser, "data"), "seed", int, 0)
    else:
        payload = args.manifest_payload
        spec = DatasetSpec(
            scene=SceneConfig(**_tupled(
                payload["dataset_spec"]["scene"],
                ("duration_range", "class_weights", "class_gains", "gain_jitter"),
            )),
            **{k: v for k, v in payload["dataset_spec"].items() if k != "scene"},
        )
        seed = payload["seed"]
    ds = build_dataset(spec, seed)
    save_dataset(ds, out, spec=spec, seed=seed)
    write_manifest(out, {
        "command": "gen-data",
        "seed": seed,
        "dataset_spec": {
            "scene": dataclasses.asdict(spec.scene),
            "n_strong": spec.n_strong,
            "n_weak": spec.n_weak,
            "n_unlabeled": spec.n_unlabeled,
            "n_validation": spec.n_validation,
        },
        "outputs": {"dataset_hash": dataset_hash(out)},
    })
    print(f"wrote {sum(ds.split_sizes().values())} clips to {out}")
    return EXIT_OK


def _tupled(d: dict, tuple_keys) -> dict:
    return {
        k: tuple(v) if k in tuple_keys and isinstance(v, list) else v
        for k, v in d.items()
    }


def cmd_train(args) -> int:
    out = _prepare_out(args)
    data_dir = _resolve_data_dir(args)
    ds = load_dataset(data_dir)
    if not ds.strong:
        raise DataError(f"{data_dir}: dataset has no strong clips")
    n_mel = ds.strong[0][1].n_channels

    if args.manifest_payload is None:
        parser = _read_config(args.config)
        model_cfg = model_config_from_config(parser, n_mel, ds.n_classes)
        train_cfg = train_config_from_config(parser, variant=args.variant, seed=args.seed)
    else:
        payload = args.manifest_payload
        model_cfg = ModelConfig(**_tupled(
            payload["model_config"],
            ("conv_channels", "pool_time", "pool_freq", "norm_mean", "norm_std"),
        ))
        train_cfg = TrainConfig(**payload["train_config"])

    state, history = train(ds, model_cfg, train_cfg)
    ckpt_path = out / "checkpoint.bin"
    save_checkpoint(state, ckpt_path)
    with open(out / "history.jsonl", "w") as fh:
        for record in history.records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _write_curves(out / "curves.csv", history)
    write_manifest(out, {
        "command": "train",
        "seed": train_cfg.seed,
        "data": str(data_dir),
        "dataset_hash": dataset_hash(data_dir),
        "model_config": dataclasses.asdict(state.model_cfg),
        "train_config": dataclasses.asdict(train_cfg),
        "outputs": {"checkpoint": "checkpoint.bin", "history": "history.jsonl",
                    "curves": "curves.csv"},
        "best": history.best,
    })
    best = history.best or {}
    print(
        f"trained {train_cfg.variant} for {train_cfg.epochs} epochs; "
        f"best validation macro-f {best.get('macro_f', float('nan')):.4f} "
        f"at epoch {best.get('epoch')}"
    )
    return EXIT_OK


def _write_curves(path, history) -> None:
    """Tidy (step, series, value) rows for external plotting tools."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "series", "value"])
        for rec in history.records:
            step = rec["step"]
            writer.writerow([step, "omega", repr(float(rec["omega"]))])
            for i, bd in enumerate(rec["losses"]):
                suffix = f"_model{i}" if len(rec["losses"]) > 1 else ""
                for part in ("total", "strong_bce", "weak_bce", "expectation"):
                    writer.writerow([step, f"loss_{part}{suffix}", repr(float(bd[part]))])
            if "val_macro_f" in rec:
                for i, f in enumerate(rec["val_macro_f"]):
                    suffix = f"_model{i}" if len(rec["val_macro_f"]) > 1 else ""
                    writer.writerow([step, f"val_macro_f{suffix}", repr(float(f))])


def _split_posteriors(net, params, ds_split, factor):
    """(clip ids, {clip id -> posterior array}, output fps) for one split."""
    ids = [entry[0] for entry in ds_split]
    if not ids:
        return ids, {}, None
    stacked = np.stack([entry[1].data for entry in ds_split])
    posts = predict_posterior_batch(net, params, stacked)
    fps_out = ds_split[0][1].fps / factor
    return ids, {cid: posts[i] for i, cid in enumerate(ids)}, fps_out


def cmd_postproc(args) -> int:
    out = _prepare_out(args)
    data_dir = _resolve_data_dir(args)
    ds = load_dataset(data_dir)
    ckpt = load_checkpoint(args.checkpoint)
    net = ConvRecurrentNet(ckpt.model_cfg)
    params = ckpt.best_params()
    factor = ckpt.model_cfg.time_pool_factor

    split = args.split
    split_clips = getattr(ds, split, None)
    if not split_clips:
        raise DataError(f"dataset has no clips in split {split!r}")
    ids, posts_by_id, fps_out = _split_posteriors(net, params, split_clips, factor)

    mode = args.mode
    if mode == "global":
        params_pp = global_params(ds.n_classes, fps_out)
    elif mode in ("classwise", "sweep"):
        if not ds.weak:
            raise DataError("classwise post-processing needs a weak split to fit on")
        _, weak_posts_by_id, _ = _split_posteriors(net, params, ds.weak, factor)
        weak_posts = [weak_posts_by_id[entry[0]] for entry in ds.weak]
        weak_labels = [entry[2] for entry in ds.weak]
        if mode == "classwise":
            params_pp = fit_classwise_params(
                weak_posts, weak_labels, ds.n_classes,
                alpha=args.alpha, beta_pct=args.beta, fps=fps_out,
            )
        else:
            refs = {
                cid: [EventInterval(c, on, off) for c, on, off in evs]
                for cid, evs in reference_events(data_dir, split).items()
            }
            models = fit_tail_models(weak_posts, weak_labels, ds.n_classes)
            result = sweep_grid(
                weak_posts, weak_labels, posts_by_id, refs, ds.n_classes, fps_out,
                alphas=alpha_grid(), betas=beta_grid(), tail_models=models,
            )
            with open(out / "sweep.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["alpha", "beta", "macro_f"])
                for ai, alpha in enumerate(result.alphas):
                    for bi, beta in enumerate(result.betas):
                        writer.writerow([repr(float(alpha)), repr(float(beta)),
                                         repr(float(result.macro_f[ai, bi]))])
            (out / "sweep_best.json").write_text(json.dumps({
                "alpha": result.best_alpha,
                "beta": result.best_beta,
                "macro_f": result.best_macro_f,
            }, sort_keys=True, indent=2))
            params_pp = fit_classwise_params(
                weak_posts, weak_labels, ds.n_classes,
                alpha=result.best_alpha, beta_pct=result.best_beta, fps=fps_out,
                tail_models=models,
            )
    else:
        raise ConfigError(f"unknown post-processing mode {mode!r}")

    for note in getattr(params_pp, "diagnostics", []):
        if "fallback" in note or "filter_fallback" in note:
            print(f"warning: class {note.get('class')}: fallback used ({note})", file=sys.stderr)

    intervals = {cid: classwise_postproc(posts_by_id[cid], params_pp, fps_out) for cid in ids}
    write_intervals_csv(out / "intervals.csv", intervals)
    (out / "postproc_params.json").write_text(
        json.dumps(params_pp.to_dict(), sort_keys=True, indent=2)
    )
    write_manifest(out, {
        "command": "postproc",
        "checkpoint": str(args.checkpoint),
        "data": str(data_dir),
        "dataset_hash": dataset_hash(data_dir),
        "mode": mode,
        "alpha": args.alpha,
        "beta": args.beta,
        "split": split,
        "outputs": {"intervals": "intervals.csv", "params": "postproc_params.json"},
    })
    print(f"wrote intervals for {len(ids)} {split} clips to {out}")
    return EXIT_OK


def _write_score_csv(path, report, n_classes):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "fscore"])
        for c in range(n_classes):
            writer.writerow([c, repr(float(report.precision[c])),
                             repr(float(report.recall[c])), repr(float(report.fscore[c]))])
        writer.writerow(["macro", "", "", repr(float(report.macro_f))])


def cmd_eval(args) -> int:
    out = _prepare_out(args)
    data_dir = _resolve_data_dir(args)
    refs = {
        cid: [EventInterval(c, on, off) for c, on, off in evs]
        for cid, evs in reference_events(data_dir, args.split).items()
    }
    meta = json.loads((data_dir / "dataset.json").read_text())
    n_classes = int(meta["n_classes"])

    outputs = {}
    if args.detected:
        detected = read_intervals_csv(args.detected)
        match = match_events_run(detected, refs, n_classes=n_classes)
        report = score(match)
        _write_score_csv(out / "scores.csv", report, n_classes)
        confusion = confusion_matrix_run(detected, refs, n_classes=n_classes)
        with open(out / "confusion.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ref_class"] + [f"det_{c}" for c in range(n_classes)] + ["missed"])
            for r in range(n_classes):
                writer.writerow([r] + [int(v) for v in confusion[r]])
        conc = concurrency_stats(refs, n_classes)
        with open(out / "concurrency.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "k1_pct", "k2_pct", "k_gt2_pct"])
            for c in range(n_classes):
                writer.writerow([c] + [repr(float(v)) for v in conc.per_class[c]])
            writer.writerow(["total"] + [repr(float(v)) for v in conc.total])
        outputs.update({
            "scores": "scores.csv",
            "confusion": "confusion.csv",
            "concurrency": "concurrency.csv",
        })
        print(f"macro f-score: {report.macro_f:.4f}")

    if args.group:
        groups = {}
        for spec in args.group:
            if "=" not in spec:
                raise ConfigError(f"--group expects NAME=csv1,csv2,..., got {spec!r}")
            name, paths = spec.split("=", 1)
            values = []
            for p in paths.split(","):
                detected = read_intervals_csv(p.strip())
                values.append(score(match_events_run(detected, refs, n_classes=n_classes)).macro_f)
            groups[name] = values
        names = list(groups)
        with open(out / "comparison.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "n", "mean", "std"] + [f"p_vs_{n}" for n in names])
            for name in names:
                vals = np.asarray(groups[name])
                row = [name, vals.size, repr(float(vals.mean())),
                       repr(float(vals.std(ddof=1))) if vals.size > 1 else ""]
                for other in names:
                    if other == name or vals.size < 2 or len(groups[other]) < 2:
                        row.append("")
                    else:
                        row.append(repr(float(welch_t(vals, groups[other]).pvalue)))
                writer.writerow(row)
        outputs["comparison"] = "comparison.csv"

    if not outputs:
        raise ConfigError("eval needs --detected and/or --group")
    write_manifest(out, {
        "command": "eval",
        "data": str(data_dir),
        "dataset_hash": dataset_hash(data_dir),
        "split": args.split,
        "detected": str(args.detected) if args.detected else None,
        "groups": list(args.group or []),
        "outputs": outputs,
    })
    return EXIT_OK


def cmd_rerun(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    payload = json.loads(manifest_path.read_text())
    command = payload.get("command")
    ns = argparse.Namespace(out=args.out, manifest_payload=payload)
    if command == "gen-data":
        ns.config = None
        ns.seed = None
        return cmd_gen_data(ns)
    if command == "train":
        ns.config = None
        ns.data = payload["data"]
        ns.variant = None
        ns.seed = None
        return cmd_train(ns)
    if command == "postproc":
        ns.checkpoint = payload["checkpoint"]
        ns.data = payload["data"]
        ns.mode = payload["mode"]
        ns.alpha = payload["alpha"]
        ns.beta = payload["beta"]
        ns.split = payload["split"]
        return cmd_postproc(ns)
    if command == "eval":
        ns.data = payload["data"]
        ns.split = payload["split"]
        ns.detected = payload.get("detected")
        ns.group = payload.get("groups") or []
        return cmd_eval(ns)
    raise ConfigError(f"manifest has unknown command {command!r}")


# ----------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sedlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a dataset onto disk")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data, manifest_payload=None)

    p = sub.add_parser("train", help="train one variant on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train, manifest_payload=None)

    p = sub.add_parser("postproc", help="turn a checkpoint's posteriors into intervals")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("global", "classwise", "sweep"), default="global")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=25.0)
    p.add_argument("--split", default="validation")
    p.set_defaults(func=cmd_postproc)

    p = sub.add_parser("eval", help="score detected intervals against references")
    p.add_argument("--detected", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="validation")
    p.add_argument("--group", action="append", default=None,
                   help="NAME=csv1,csv2,... adds a row to the comparison table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rerun", help="replay a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
