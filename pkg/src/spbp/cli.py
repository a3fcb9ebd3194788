"""Command-line entry point: ``spbp {train,sr,eval,analyze}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import complexity, imaging, metrics
from .network import DIHEDRAL, NetworkConfig, build_network, forward, self_ensemble_forward
from .train import Adam, TrainConfig, lr_at_epoch, train_epoch
from .weights import load_weights, save_weights

log = logging.getLogger("spbp")

ENSEMBLE_SETS = {"all": DIHEDRAL, "identity": ((0, False),)}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: NetworkConfig
    train: TrainConfig
    manifest: Path
    out_dir: Path
    checkpoint_every: int

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path("."), seed: int | None = None) -> "RunConfig":
        unknown = set(d) - {"model", "train", "manifest", "out_dir", "checkpoint_every"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("manifest", "out_dir"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        try:
            model = dict(d.get("model", {"preset": "S"}))
            preset = model.pop("preset", None)
            net_cfg = NetworkConfig.preset(preset, **model) if preset else NetworkConfig(**model)
            train = dict(d.get("train", {}))
            if seed is not None:
                train["seed"] = seed
            train_cfg = TrainConfig.from_dict(train)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        every = int(d.get("checkpoint_every", train_cfg.decay_every))
        if every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        return cls(net_cfg, train_cfg, base_dir / d["manifest"], base_dir / d["out_dir"], every)


def load_run_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data, path.parent, seed)


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


# -- commands ---------------------------------------------------------------

def cmd_train(config_path, seed: int | None = None) -> int:
    run = load_run_config(config_path, seed)
    manifest = imaging.load_manifest(run.manifest)
    if manifest.scale != run.model.s:
        raise ConfigError(f"manifest scale {manifest.scale} != model scale {run.model.s}")
    pairs = [(lr, hr) for _, lr, hr in manifest.load_pairs()]
    smallest = min(min(lr.shape[:2]) for lr, _ in pairs)
    if run.train.crop_size > smallest:
        raise ConfigError(f"crop size {run.train.crop_size} exceeds smallest LR image ({smallest} px)")

    run.out_dir.mkdir(parents=True, exist_ok=True)
    net = build_network(run.model, run.train.seed)
    opt = Adam(net, run.train)
    with open(run.out_dir / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "mean_loss"])
        for epoch in range(run.train.epochs):
            loss = train_epoch(net, pairs, run.train, epoch, opt)
            writer.writerow([epoch, _fmt(lr_at_epoch(run.train, epoch)), _fmt(loss)])
            fh.flush()
            log.info("epoch %d loss %.6f", epoch, loss)
            if (epoch + 1) % run.checkpoint_every == 0 and epoch + 1 < run.train.epochs:
                save_weights(net, run.out_dir / f"epoch_{epoch + 1:04d}.spbp")
    save_weights(net, run.out_dir / "weights.spbp")
    return 0


def super_resolve(net, img, ensemble: str | None = None):
    x = imaging.to_tensor(img)
    y = forward(net, x) if ensemble is None else self_ensemble_forward(net, x, ENSEMBLE_SETS[ensemble])
    return imaging.from_tensor(y)


def cmd_sr(weights, input_png, output_png, ensemble: str | None = None) -> int:
    net = load_weights(weights)
    img = imaging.load_png(input_png)
    imaging.save_png(super_resolve(net, img, ensemble), output_png)
    return 0


def write_eval_csv(rows: list[tuple[str, float, float]], path) -> None:
    """Per-image rows followed by a ``mean`` row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", "psnr_db", "ssim"])
        for name, p, s in rows:
            w.writerow([name, _fmt(p), _fmt(s)])
        mean_p = math.fsum(r[1] for r in rows) / len(rows)
        mean_s = math.fsum(r[2] for r in rows) / len(rows)
        w.writerow(["mean", _fmt(mean_p), _fmt(mean_s)])


def evaluate(net, manifest, ensemble: str | None = None) -> list[tuple[str, float, float]]:
    if manifest.scale != net.cfg.s:
        raise ConfigError(f"manifest scale {manifest.scale} != model scale {net.cfg.s}")
    rows = []
    for name, lr, hr in manifest.load_pairs():
        sr = super_resolve(net, lr, ensemble)
        hr = hr[: sr.shape[0], : sr.shape[1]]
        q = metrics.score(sr, hr)
        rows.append((name, q.psnr_db, q.ssim))
    return rows


def cmd_eval(weights, manifest_path, out_csv, ensemble: str | None = None) -> int:
    net = load_weights(weights)
    manifest = imaging.load_manifest(manifest_path)
    write_eval_csv(evaluate(net, manifest, ensemble), out_csv)
    return 0


def parse_hr(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def cmd_analyze(cfg: NetworkConfig, hr=(1280, 720), out_csv=None) -> int:
    report = complexity.count_multadds(cfg, *hr)
    text = report.to_csv()
    if out_csv is None:
        sys.stdout.write(text)
    else:
        Path(out_csv).write_text(text)
    print(report.summary())
    return 0


# -- argument parsing -------------------------------------------------------

def _model_from_args(args) -> NetworkConfig:
    extra = {k: getattr(args, k) for k in ("group_indexing", "fusion") if getattr(args, k) is not None}
    explicit = {k: getattr(args, k) for k in ("f", "G", "s") if getattr(args, k) is not None}
    if args.preset:
        return NetworkConfig.preset(args.preset, **explicit, **extra)
    if "f" not in explicit or "G" not in explicit:
        raise ConfigError("analyze needs --preset or both --f and --G")
    return NetworkConfig(**explicit, **extra)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spbp", description="Sub-pixel back-projection super-resolution.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network from a JSON run config")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--seed", type=int)

    s = sub.add_parser("sr", help="super-resolve one PNG")
    s.add_argument("--weights", required=True, type=Path)
    s.add_argument("--in", dest="input", required=True, type=Path)
    s.add_argument("--out", dest="output", required=True, type=Path)
    s.add_argument("--ensemble", action="store_true", help="average over the 8 dihedral transforms")
    s.add_argument("--ensemble-set", choices=sorted(ENSEMBLE_SETS), default="all", help=argparse.SUPPRESS)

    e = sub.add_parser("eval", help="PSNR/SSIM (Y, 2 px crop) over a manifest")
    e.add_argument("--weights", required=True, type=Path)
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--out", dest="output", required=True, type=Path)
    e.add_argument("--ensemble", action="store_true")

    a = sub.add_parser("analyze", help="parameter and Mult-Adds report")
    a.add_argument("--preset", choices=["S", "M", "L"])
    a.add_argument("--f", type=int)
    a.add_argument("--G", type=int)
    a.add_argument("--s", type=int)
    a.add_argument("--group-indexing", choices=["interior", "all"])
    a.add_argument("--fusion", choices=["bottleneck", "direct"])
    a.add_argument("--hr", type=parse_hr, default=(1280, 720), help="HR output size WxH (default 1280x720)")
    a.add_argument("--out", dest="output", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config, args.seed)
        if args.command == "sr":
            return cmd_sr(args.weights, args.input, args.output, args.ensemble_set if args.ensemble else None)
        if args.command == "eval":
            return cmd_eval(args.weights, args.manifest, args.output, "all" if args.ensemble else None)
        return cmd_analyze(_model_from_args(args), args.hr, args.output)
    except (ValueError, OSError) as exc:
        print(f"spbp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
