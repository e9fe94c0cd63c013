"""``demcl`` command line: one subcommand per pipeline stage plus an end-to-end run.

Sequence files carry a ``.meta`` sidecar (``label``, ``frame_rate``, ``range_bins``)
so later stages know what they hold.  Every output is written atomically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio, plotting
from .config import PipelineConfig
from .errors import DemclError, InvalidInputError
from .features import features_for_samples, features_to_csv
from .mcl import MclDataset, MclModel, evaluate, train_mcl
from .pipeline import (frames_to_rdms, metrics_json, processing_config, rdms_to_tds, run_pipeline,
                       samples_from_rdms, simulate_classes, split_point)
from .radarproc import DenoiseConfig, ProcessingConfig, TimeDopplerSpectrogram, window_starts
from .rdgan import RdGan, parse_mode, train_gan

log = logging.getLogger("demcl")


class CliError(DemclError):
    """Bad command-line usage detected after argument parsing."""


# -- helpers ----------------------------------------------------------------------

def _load_config(path) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def _write_config(path, cfg: PipelineConfig):
    fileio.atomic_write(path, cfg.to_ini())


def _meta_float(meta: dict, key: str, default: float) -> float:
    try:
        return float(meta.get(key, default))
    except ValueError:
        raise InvalidInputError(f"metadata value {key}={meta[key]!r} is not a number") from None


def _meta_label(meta: dict, path) -> int:
    if "label" not in meta:
        raise InvalidInputError(f"{path}: no label in {fileio.meta_path(path).name}")
    try:
        return int(meta["label"])
    except ValueError:
        raise InvalidInputError(f"{path}: label {meta['label']!r} is not an integer") from None


def _read_rdm_sequence(path) -> tuple[np.ndarray, dict]:
    rdms = fileio.read_rdms(path)
    shapes = {r.shape for r in rdms}
    if len(shapes) != 1:
        raise InvalidInputError(f"{path}: maps of differing shapes {sorted(shapes)}")
    return np.stack(rdms).astype(np.float64), fileio.read_meta(path)


def _sequence_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise InvalidInputError(f"{d} is not a directory")
    files = sorted(d.glob("*.rdm"))
    if not files:
        raise InvalidInputError(f"{d} holds no .rdm sequences")
    return files


def _dataset_from_dir(directory, cfg: PipelineConfig, generated: bool) -> MclDataset:
    parts = []
    for f in _sequence_files(directory):
        rdms, meta = _read_rdm_sequence(f)
        c = dataclasses.replace(cfg, radar=dataclasses.replace(
            cfg.radar, frame_rate=_meta_float(meta, "frame_rate", cfg.radar.frame_rate)))
        part = samples_from_rdms(rdms, _meta_label(meta, f), c, generated=generated)
        if part is not None:
            parts.append(part)
    if not parts:
        raise InvalidInputError(f"{directory}: no usable samples")
    return MclDataset.concat(*parts)


def _metrics_csv_rows(metrics: dict) -> dict[str, str]:
    """CSV text per report table."""
    out = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    w.writerow(["accuracy", repr(float(metrics["accuracy"]))])
    for key in ("n_samples", "n_train_real", "n_train_generated"):
        if key in metrics:
            w.writerow([key, metrics[key]])
    out["summary.csv"] = buf.getvalue()
    out["per_class.csv"] = "class,accuracy\n" + "".join(
        f"{i},{'' if v is None else repr(float(v))}\n" for i, v in enumerate(metrics["per_class"]))
    out["confusion.csv"] = confusion_csv(metrics["confusion"])
    hist = metrics.get("loss_history") or []
    if hist:
        out["loss_history.csv"] = "epoch,loss_train,loss_test\n" + "".join(
            f"{h['epoch']},{repr(float(h['loss_train']))},"
            f"{'' if h.get('loss_test') is None else repr(float(h['loss_test']))}\n" for h in hist)
    return out


def confusion_csv(confusion) -> str:
    n = len(confusion)
    lines = ["true\\decided," + ",".join(str(j) for j in range(n))]
    lines += [f"{i}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(confusion)]
    return "\n".join(lines) + "\n"


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    for rec in simulate_classes(cfg):
        path = out / f"class_{rec.label}.rdf"
        fileio.write_frames(path, rec.frames, cfg.radar.frame_rate)
        meta = dict(rec.profile.metadata())
        meta.update(frame_rate=cfg.radar.frame_rate, aliased_frames=int(np.count_nonzero(rec.aliased)))
        fileio.write_meta(path, meta)
        log.info("wrote %s (%d frames)", path, len(rec))
    _write_config(out / "config.ini", cfg)
    return 0


def cmd_rdm(args) -> int:
    frames, rate = fileio.read_frames(args.inp)
    if args.config:
        proc = processing_config(_load_config(args.config))
    else:
        proc = ProcessingConfig(denoise=None, suppress_db=0.0)
    if args.denoise:
        proc.denoise = proc.denoise or DenoiseConfig(scope="global")
    if args.no_denoise:
        proc.denoise = None
    if args.suppress_db is not None:
        proc.suppress_db = args.suppress_db
    if args.suppress_width is not None:
        proc.suppress_width = args.suppress_width
    rdms = frames_to_rdms(frames, proc, rate)
    fileio.write_rdms(args.out, rdms)
    meta = fileio.read_meta(args.inp)
    meta.update(frame_rate=rate, range_bins=rdms.shape[1], denoise=proc.denoise is not None,
                suppress_db=proc.suppress_db, suppress_width=proc.suppress_width)
    fileio.write_meta(args.out, meta)
    return 0


def cmd_split(args) -> int:
    rdms, meta = _read_rdm_sequence(args.inp)
    k = split_point(len(rdms), args.fraction)
    if k == 0 or k == len(rdms):
        raise CliError(f"fraction {args.fraction} leaves one side of the split empty")
    for path, part in ((args.train, rdms[:k]), (args.test, rdms[k:])):
        fileio.write_rdms(path, part)
        fileio.write_meta(path, meta)
    return 0


def cmd_tds(args) -> int:
    rdms, meta = _read_rdm_sequence(args.inp)
    rate = _meta_float(meta, "frame_rate", 15.0)
    tds = rdms_to_tds(rdms, rate)
    fileio.write_tds(args.out, tds.columns)
    meta.update(frame_rate=rate, range_bins=tds.range_bins)
    fileio.write_meta(args.out, meta)
    if args.plot:
        plotting.plot_tds(tds.columns, args.plot, rate)
    return 0


def cmd_features(args) -> int:
    columns = fileio.read_tds(args.inp)
    meta = fileio.read_meta(args.inp)
    tds = TimeDopplerSpectrogram(columns, _meta_float(meta, "frame_rate", 15.0),
                                 range_bins=int(_meta_float(meta, "range_bins", 1)))
    cfg = _load_config(args.config).features
    if args.window is not None:
        cfg = dataclasses.replace(cfg, Z=args.window)
    label = args.label if args.label is not None else int(meta.get("label", -1))
    starts = window_starts(tds.n, args.width, args.stride)
    if not starts:
        raise InvalidInputError(f"TDS of {tds.n} frames is shorter than one {args.width}-column sample")
    feats = features_for_samples(tds, starts, cfg, args.width)
    fileio.atomic_write(args.out, features_to_csv((i, label, f) for i, f in enumerate(feats)))
    return 0


def cmd_gan_train(args) -> int:
    rdms, meta = _read_rdm_sequence(args.data)
    cfg = _load_config(args.config)
    overrides = {k: v for k, v in (("epochs", args.epochs), ("lr", args.lr), ("batch_size", args.batch),
                                   ("seed", args.seed)) if v is not None}
    cfg.gan = dataclasses.replace(cfg.gan, **overrides)
    label = args.label if args.label is not None else _meta_label(meta, args.data)
    frames = rdms[:args.frames] if args.frames else rdms
    gan = train_gan(frames, cfg.gan, label=label,
                    on_epoch=lambda g: log.info("epoch %d %s", len(g.history), g.history[-1]))
    out = Path(args.out)
    gan.save(out)
    gan.save_history(out.with_name(out.name + ".history.csv"))
    _write_config(out.with_name(out.name + ".config.ini"), cfg)
    if args.plot:
        plotting.plot_gan_losses(gan.history, args.plot)
    return 0


def cmd_gan_generate(args) -> int:
    gan = RdGan.load(args.model)
    seeds, meta = _read_rdm_sequence(args.seed_frames)
    mode, depth = parse_mode(args.mode)
    fake = gan.generate(seeds, mode, depth)
    fileio.write_rdms(args.out, fake)
    meta.update(label=gan.label, generated=True, mode=args.mode)
    fileio.write_meta(args.out, meta)
    return 0


def cmd_mcl_train(args) -> int:
    cfg = _load_config(args.config)
    overrides = {k: v for k, v in (("epochs", args.epochs), ("lr", args.lr), ("batch_size", args.batch),
                                   ("seed", args.seed)) if v is not None}
    cfg.train = dataclasses.replace(cfg.train, **overrides)
    real = _dataset_from_dir(args.real, cfg, generated=False)
    train = MclDataset.concat(real, _dataset_from_dir(args.generated, cfg, True)) if args.generated else real
    cfg.mcl = dataclasses.replace(cfg.mcl, doppler_bins=train.windows.shape[2], window=train.windows.shape[1])
    test = _dataset_from_dir(args.test, cfg, False) if args.test else None
    model, history = train_mcl(train, cfg.mcl, cfg.train, test)
    out = Path(args.out)
    model.save(out)
    fileio.atomic_write(out.with_name(out.name + ".history.json"), json.dumps(history, indent=2) + "\n")
    _write_config(out.with_name(out.name + ".config.ini"), cfg)
    log.info("trained on %d real and %d generated samples", int((~train.generated).sum()),
             int(train.generated.sum()))
    return 0


def cmd_mcl_eval(args) -> int:
    model = MclModel.load(args.model)
    cfg = _load_config(args.config)
    cfg.samples = dataclasses.replace(cfg.samples, width=model.cfg.window)
    test = _dataset_from_dir(args.test, cfg, generated=False)
    metrics = evaluate(model, test)
    hist = Path(str(args.model) + ".history.json")
    if hist.exists():
        metrics["loss_history"] = json.loads(hist.read_text())
    if args.report:
        fileio.atomic_write(args.report, metrics_json(metrics))
    if args.confusion:
        fileio.atomic_write(args.confusion, confusion_csv(metrics["confusion"]))
    print(f"accuracy {metrics['accuracy']:.4f} on {metrics['n_samples']} samples")
    return 0


def cmd_report(args) -> int:
    try:
        metrics = json.loads(Path(args.metrics).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{args.metrics}: not valid JSON ({exc.msg})") from None
    for key in ("accuracy", "confusion", "per_class"):
        if key not in metrics:
            raise InvalidInputError(f"{args.metrics}: missing key {key!r}")
    out = Path(args.emit_csv)
    for name, text in _metrics_csv_rows(metrics).items():
        fileio.atomic_write(out / name, text)
    if not args.no_plots:
        plotting.plot_confusion(metrics["confusion"], out / "confusion.png")
        plotting.plot_per_class(metrics["per_class"], out / "per_class.png")
        if metrics.get("loss_history"):
            plotting.plot_loss_curves(metrics["loss_history"], out / "loss_history.png")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    if args.augment:
        cfg.augment.enabled = True
    if args.seed is not None:
        cfg.train.seed = args.seed
    out = Path(args.out)
    _write_config(out / "config.ini", cfg)
    result = run_pipeline(cfg)
    result.model.save(out / "mcl.mdck")
    for label, gan in sorted(result.gans.items()):
        gan.save(out / f"rdgan_class_{label}.mdck")
        gan.save_history(out / f"rdgan_class_{label}.history.csv")
    fileio.atomic_write(out / "metrics.json", metrics_json(result.metrics))
    print(f"accuracy {result.metrics['accuracy']:.4f} on {result.metrics['n_samples']} test samples")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="demcl", description="Radar micro-Doppler pedestrian recognition pipeline.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate pedestrians to RDF1 frame files")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("rdm", help="frames to range-Doppler maps")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="take processing settings from this config")
    s.add_argument("--denoise", action="store_true")
    s.add_argument("--no-denoise", action="store_true")
    s.add_argument("--suppress-db", type=float)
    s.add_argument("--suppress-width", type=int)
    s.set_defaults(func=cmd_rdm)

    s = sub.add_parser("split", help="cut an RDM sequence into contiguous train and test blocks")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--fraction", type=float, default=0.8)
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("tds", help="RDM sequence to a time-Doppler spectrogram")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="also render the spectrogram to this image")
    s.set_defaults(func=cmd_tds)

    s = sub.add_parser("features", help="gait features of every sample window")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--window", type=int, help="feature window Z in frames")
    s.add_argument("--width", type=int, default=45, help="sample width in frames")
    s.add_argument("--stride", type=int, default=5)
    s.add_argument("--label", type=int)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("gan-train", help="train one RDGAN on a pedestrian's RDM sequence")
    s.add_argument("--data", required=True)
    s.add_argument("--label", type=int)
    s.add_argument("--config")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int, help="train on this many leading frames only")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="render the loss curves to this image")
    s.set_defaults(func=cmd_gan_train)

    s = sub.add_parser("gan-generate", help="generate RDMs with a trained RDGAN")
    s.add_argument("--model", required=True)
    s.add_argument("--seed-frames", required=True)
    s.add_argument("--mode", default="one-step", help="one-step or rollout:N")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gan_generate)

    s = sub.add_parser("mcl-train", help="train the fusion classifier on directories of labelled RDM sequences")
    s.add_argument("--real", required=True)
    s.add_argument("--generated")
    s.add_argument("--test", help="also record the test loss per epoch")
    s.add_argument("--config")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mcl_train)

    s = sub.add_parser("mcl-eval", help="evaluate a trained classifier")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--config")
    s.add_argument("--report", help="metrics JSON")
    s.add_argument("--confusion", help="confusion matrix CSV")
    s.set_defaults(func=cmd_mcl_eval)

    s = sub.add_parser("report", help="CSV tables and figures from a metrics JSON")
    s.add_argument("--metrics", required=True)
    s.add_argument("--emit-csv", required=True, help="output directory")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("pipeline", help="simulate, train and evaluate end to end")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--augment", action="store_true", help="add RDGAN-generated samples")
    s.add_argument("--seed", type=int, help="classifier training seed")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DemclError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"demcl {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
