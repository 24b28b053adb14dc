"""Command-line front end: fuse, synth, train, eval, ablate.

Exit codes: 0 success, 2 usage/config problems, 3 numerical or runtime
failure. Every training run directory is self-describing: it holds a
config snapshot whose seed reproduces the run byte for byte.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .data import load_dir, save_split, synth_dataset, write_image
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    FreqAlignError,
    NumericalError,
    ShapeError,
    UsageError,
)
from .fusion import FusionConfig, stff
from .interpolate import resize_bilinear
from .metrics import binarize, iou_dice
from .network import load_checkpoint_model, save_checkpoint
from .training import RunConfig, make_splits, run_training

CSV_HEADER = "epoch,seg_loss,d_loss,g_loss,val_iou,val_dice"

ABLATION_GRID = [
    ("baseline", (False, False, False)),
    ("stff", (True, False, False)),
    ("adl", (False, True, False)),
    ("sfi", (False, False, True)),
    ("stff_adl", (True, True, False)),
    ("stff_sfi", (True, False, True)),
    ("full", (True, True, True)),
]


# -- config file handling --------------------------------------------------------


def _coerce(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def apply_setting(cfg: RunConfig, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if key not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = _coerce(raw, fields[key].type if isinstance(fields[key].type, type)
                        else type(getattr(cfg, key)))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    setattr(cfg, key, value)


def load_config(path) -> RunConfig:
    """Parse a flat `key = value` file with # comments."""
    cfg = RunConfig()
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, "
                              f"got {stripped!r}")
        key, raw = stripped.split("=", 1)
        apply_setting(cfg, key.strip(), raw)
    return cfg


def save_config(path, cfg: RunConfig):
    lines = [f"{f.name} = {getattr(cfg, f.name)}"
             for f in dataclasses.fields(RunConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        apply_setting(cfg, key.strip(), raw)
    return cfg


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


# -- subcommands ------------------------------------------------------------------


def _load_single_image(path) -> np.ndarray:
    from .data import _read_image

    p = Path(path)
    if not p.exists():
        raise DataError(f"no such image: {p}")
    return _read_image(p)


def _spectrum_heatmap(image: np.ndarray) -> np.ndarray:
    from .adversarial import log_normalize
    from .spectral import center_shift, decompose

    spec = center_shift(decompose(image))
    return log_normalize(spec.amplitude).data.mean(axis=0)


def cmd_fuse(args) -> int:
    x_s = _load_single_image(args.source)
    x_t = _load_single_image(args.target)
    if x_t.shape[0] != x_s.shape[0]:
        raise DataError(f"channel mismatch: source has {x_s.shape[0]} channels, "
                        f"target {x_t.shape[0]}")
    if x_t.shape != x_s.shape:
        print(f"warning: resampling target {x_t.shape[-2:]} to source "
              f"{x_s.shape[-2:]}", file=sys.stderr)
        x_t = np.clip(resize_bilinear(x_t, x_s.shape[-2], x_s.shape[-1]), 0.0, 1.0)
    mode = "fixed" if args.alpha is not None else "uniform_random"
    cfg = FusionConfig(beta=args.beta, alpha_mode=mode,
                       alpha=args.alpha if args.alpha is not None else 1.0,
                       seed=args.seed)
    pair = stff(x_s, x_t, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image(out, pair.fused_image)
    print(f"alpha={pair.alpha_used:.6f} beta={args.beta} -> {out}")
    if args.spectra:
        base = out.with_suffix("")
        for tag, img in (("source", x_s), ("target", x_t),
                         ("fused", pair.fused_image)):
            write_image(Path(f"{base}_{tag}_spectrum.png"), _spectrum_heatmap(img))
    return 0


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    source, target, val = synth_dataset(cfg.synth_config())
    save_split(out / "source", source)
    save_split(out / "target", target)
    save_split(out / "target_val", val)
    save_config(out / "synth_config.txt", cfg)
    print(f"wrote {len(source)} source / {len(target)} target / "
          f"{len(val)} validation samples under {out}")
    return 0


def _write_metrics_row(fh, report):
    fh.write(",".join([str(report.epoch), _fmt(report.seg_loss),
                       _fmt(report.d_loss), _fmt(report.g_loss),
                       _fmt(report.val_iou), _fmt(report.val_dice)]) + "\n")
    fh.flush()


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.txt", cfg)
    csv_path = out / "metrics.csv"
    ckpt_path = out / "checkpoint.bin"
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.flush()

        def on_epoch(report, state):
            _write_metrics_row(fh, report)
            save_checkpoint(ckpt_path, state.params)
            if not args.quiet:
                print(f"epoch {report.epoch}: seg_loss {report.seg_loss:.4f} "
                      f"val_iou {report.val_iou:.4f}")

        try:
            reports, _ = run_training(cfg, on_epoch=on_epoch)
        except NumericalError as exc:
            print(f"numerical failure: {exc}; last stable epoch preserved",
                  file=sys.stderr)
            return 3
    final = reports[-1]
    print(f"done: val_iou {final.val_iou:.4f} val_dice {final.val_dice:.4f} "
          f"-> {out}")
    return 0


def _overlay(image: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Prediction highlighted in red over the grayscale image."""
    gray = image.mean(axis=0)
    hot = pred[0] > 0.5
    red = np.clip(gray + 0.5 * hot, 0.0, 1.0)
    dim = gray * (1.0 - 0.35 * hot)
    return np.stack([red, dim, dim])


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    cfg = load_config(run_dir / "config.txt")
    params = load_checkpoint_model(run_dir / "checkpoint.bin")
    if args.data:
        records = load_dir(args.data, with_masks=True)
    else:
        records = make_splits(cfg)[2]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from . import autodiff as ad
    from .autodiff import Tensor
    from .network import forward

    rows = ["id,iou,dice,tp,fp,fn"]
    ious, dices = [], []
    for rec in records:
        with ad.no_grad():
            logits, _ = forward(params, Tensor(rec.image[None]), cfg.flags())
        pred = binarize(ad.sigmoid(logits).data[0])
        m = iou_dice(pred, rec.mask)
        ious.append(m.iou)
        dices.append(m.dice)
        rows.append(f"{rec.id},{_fmt(m.iou)},{_fmt(m.dice)},{m.tp},{m.fp},{m.fn}")
        write_image(out / f"{rec.id}_overlay.png", _overlay(rec.image, pred))
    rows.append(f"mean,{_fmt(np.mean(ious))},{_fmt(np.mean(dices))},,,")
    (out / "metrics.csv").write_text("\n".join(rows) + "\n")
    print(f"mean iou {np.mean(ious):.4f} dice {np.mean(dices):.4f} "
          f"over {len(records)} samples -> {out}")
    return 0


def _ablation_worker(cfg_values: dict, label: str, flags: tuple,
                     out_dir: str) -> tuple:
    cfg = RunConfig(**cfg_values)
    cfg.use_stff, cfg.use_adl, cfg.use_sfi = flags
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.txt", cfg)
    try:
        with open(out / "metrics.csv", "w") as fh:
            fh.write(CSV_HEADER + "\n")

            def on_epoch(report, state):
                _write_metrics_row(fh, report)
                save_checkpoint(out / "checkpoint.bin", state.params)

            reports, _ = run_training(cfg, on_epoch=on_epoch)
        final = reports[-1]
        return label, flags, final.val_iou, final.val_dice, "ok"
    except FreqAlignError as exc:
        return label, flags, None, None, f"failed: {exc}"


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.txt", cfg)
    cfg_values = dataclasses.asdict(cfg)
    jobs = [(cfg_values, label, flags, str(out / label))
            for label, flags in ABLATION_GRID]
    workers = int(os.environ.get("FREQALIGN_THREADS", "1"))
    results = []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ablation_worker, *zip(*[list(j) for j in jobs])))
    else:
        for job in jobs:
            results.append(_ablation_worker(*job))
            label, _, iou, dice, status = results[-1]
            if not args.quiet:
                print(f"{label}: iou {iou if iou is None else f'{iou:.4f}'} "
                      f"[{status}]")
    rows = ["configuration,use_stff,use_adl,use_sfi,val_iou,val_dice,status"]
    failed = False
    for label, flags, iou, dice, status in results:
        failed = failed or status != "ok"
        rows.append(f"{label},{int(flags[0])},{int(flags[1])},{int(flags[2])},"
                    f"{_fmt(iou)},{_fmt(dice)},{status}")
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    print(f"ablation table -> {out / 'summary.csv'}")
    return 3 if failed else 0


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqalign",
        description="Frequency-domain adaptation: fuse spectra, train and "
                    "evaluate the spatial-frequency segmenter.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="frequency style transfer for one image pair")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="fixed mixing coefficient; omit to draw from U(0,1)")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--spectra", action="store_true",
                   help="also write log-amplitude heatmaps")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("synth", help="generate the synthetic two-domain dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run directory")
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--data", default=None,
                   help="labeled data directory (default: the run's val split)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the 7-row ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DataError, ShapeError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
