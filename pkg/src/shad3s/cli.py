"""Command-line entry point: datagen, tam, train, eval, serve, complete.

Every command writes a run_manifest.json beside its outputs with the
resolved configuration, seeds, tool version, and wall time, sufficient to
reproduce the run.  Config precedence: flags > --config file (flat
``key = value`` lines) > defaults.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import torch
from PIL import Image

from . import __version__
from . import tam as tamlib
from .dataset import SubsetSpec, build_dataset, read_manifest
from .geometry import SceneError
from .metrics import (evaluate_pairs, infer_sketch, progressive_eval,
                      PROTOCOLS, write_report)
from .models import build_bundle, load_bundle, save_bundle
from .render import LightSpec, RenderError, render_gnomon_hint
from .training import TensorCorpus, TrainConfig, train as run_training

MODEL_KINDS = {
    "dm": ("direct", "unet"),
    "sp": ("split", "unet"),
    "se": ("direct", "unet_se"),
}


def _parse_config_file(path):
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.UsageError(
                f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _write_run_manifest(out_dir, command, config, outputs, started):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "version": __version__,
        "outputs": sorted(str(p) for p in outputs),
        "wall_time_s": round(time.time() - started, 3),
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))


def _fail(message):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Flat key=value config file; flags override.")
@click.pass_context
def main(ctx, config_path):
    """Hatch-sketch completion toolkit."""
    if config_path:
        values = _parse_config_file(config_path)
        ctx.default_map = {cmd: dict(values) for cmd in main.commands}


def _ensure_catalog(tams_dir, size):
    tams_dir = Path(tams_dir)
    if tams_dir.is_dir() and any(tams_dir.iterdir()):
        return tamlib.load_catalog(tams_dir)
    return tamlib.build_default_catalog(tams_dir, size=size)


@main.command()
@click.option("--max-solids", type=click.IntRange(1, 6), required=True)
@click.option("--scenes", type=int, required=True)
@click.option("--poses", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--size", type=int, default=256, show_default=True)
@click.option("--background-hatch", is_flag=True)
@click.option("--no-shadows", is_flag=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--tams", "tams_dir", type=click.Path(), default=None,
              help="Texture catalog directory [default: OUT/tams].")
def datagen(max_solids, scenes, poses, seed, out_dir, size, background_hatch,
            no_shadows, jobs, tams_dir):
    """Render a dataset subset and write its manifest."""
    started = time.time()
    out_dir = Path(out_dir)
    catalog = _ensure_catalog(tams_dir or out_dir / "tams", 2 * size)
    spec = SubsetSpec(k=max_solids, n_scenes=scenes, n_poses=poses, seed=seed,
                      size=size, background_hatch=background_hatch,
                      no_shadows=no_shadows)
    try:
        rows = build_dataset(out_dir, [spec], catalog, jobs=jobs)
    except (SceneError, RenderError) as exc:
        _fail(str(exc))
    _write_run_manifest(
        out_dir, "datagen",
        {"max_solids": max_solids, "scenes": scenes, "poses": poses,
         "seed": seed, "size": size, "background_hatch": background_hatch,
         "no_shadows": no_shadows, "jobs": jobs},
        [out_dir / "manifest.jsonl"], started)
    click.echo(f"wrote {len(rows)} data points to {out_dir}")


@main.group()
def tam():
    """Tonal texture catalog tools."""


@tam.command()
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--size", type=int, default=1024, show_default=True)
def synth(out_dir, size):
    """Generate the default 6-family texture catalog."""
    started = time.time()
    catalog = tamlib.build_default_catalog(out_dir, size=size)
    _write_run_manifest(out_dir, "tam synth", {"size": size},
                        [Path(out_dir) / fid for fid in sorted(catalog)],
                        started)
    click.echo(f"wrote {len(catalog)} families to {out_dir}")


@tam.command()
@click.option("--dir", "catalog_dir", type=click.Path(exists=True),
              required=True)
def validate(catalog_dir):
    """Check tone nesting and coverage of every family in a catalog."""
    try:
        catalog = tamlib.load_catalog(catalog_dir, validate=False)
    except tamlib.TamError as exc:
        _fail(str(exc))
    failures = []
    for fid in sorted(catalog):
        report = tamlib.validate_tam(catalog[fid].tones)
        status = "ok" if report.accepted else f"FAIL ({report.reason})"
        click.echo(f"{fid}: {status}")
        if not report.accepted:
            failures.append(fid)
    if failures:
        _fail(f"{len(failures)} families failed validation")


@main.command(name="train")
@click.option("--model", "model_kind", type=click.Choice(sorted(MODEL_KINDS)),
              required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True),
              required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--batch-size", type=int, default=4, show_default=True)
@click.option("--lr", type=float, default=2e-4, show_default=True)
@click.option("--adv-weight", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--base-width", type=int, default=64, show_default=True)
@click.option("--max-width", type=int, default=224, show_default=True)
@click.option("--depth", type=int, default=8, show_default=True)
@click.option("--teacher-forcing", is_flag=True)
def train_cmd(model_kind, data_dir, out_dir, epochs, batch_size, lr,
              adv_weight, seed, base_width, max_width, depth,
              teacher_forcing):
    """Train a model on a generated dataset."""
    started = time.time()
    kind, variant = MODEL_KINDS[model_kind]
    rows = read_manifest(Path(data_dir) / "manifest.jsonl")
    train_rows = [r for r in rows if r["split"] == "train"]
    val_rows = [r for r in rows if r["split"] == "val"]
    if not train_rows:
        _fail("no training rows in manifest")
    torch.manual_seed(seed)
    bundle = build_bundle(kind, variant=variant, base_width=base_width,
                          max_width=max_width, depth=depth)
    corpus = TensorCorpus.from_manifest(data_dir, train_rows)
    val_corpus = (TensorCorpus.from_manifest(data_dir, val_rows)
                  if val_rows else None)
    config = TrainConfig(kind=kind, adv_weight=adv_weight, lr=lr,
                         batch_size=batch_size, epochs=epochs,
                         teacher_forcing=teacher_forcing, seed=seed)
    try:
        history = run_training(bundle, corpus, config, out_dir,
                               val_corpus=val_corpus)
    except RuntimeError as exc:
        _fail(str(exc))
    _write_run_manifest(
        out_dir, "train",
        {"model": model_kind, "data": str(data_dir), "epochs": epochs,
         "batch_size": batch_size, "lr": lr, "adv_weight": adv_weight,
         "seed": seed, "base_width": base_width, "max_width": max_width,
         "depth": depth, "teacher_forcing": teacher_forcing},
        [Path(out_dir) / f"ckpt_e{epochs}.bin",
         Path(out_dir) / "metrics.jsonl"], started)
    click.echo(f"final train L1 {history[-1]['g_l1']:.4f}")


@main.command(name="eval")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True),
              required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--progressive", "protocol",
              type=click.Choice(PROTOCOLS), default=None)
@click.option("--tams", "tams_dir", type=click.Path(), default=None)
@click.option("--size", type=int, default=64, show_default=True,
              help="Render size for progressive grids.")
def eval_cmd(ckpt, data_dir, split, out_dir, protocol, tams_dir, size):
    """Evaluate a checkpoint: aggregate metrics, optional factor grids."""
    started = time.time()
    bundle = load_bundle(ckpt).eval()
    rows = [r for r in read_manifest(Path(data_dir) / "manifest.jsonl")
            if r["split"] == split]
    if not rows:
        _fail(f"no rows in split {split!r}")
    from .dataset import load_planes
    preds, targets = [], []
    infer_ms = []
    for row in rows:
        planes, crops = load_planes(data_dir, row)
        tic = time.perf_counter()
        preds.append(infer_sketch(bundle, planes, crops))
        infer_ms.append((time.perf_counter() - tic) * 1000)
        targets.append(planes["sk"])
    report = evaluate_pairs(preds, targets,
                            inference_time_ms=float(np.mean(infer_ms)))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(report, out_dir / "report.json")
    outputs = [out_dir / "report.json"]
    if protocol:
        catalog = _ensure_catalog(tams_dir or Path(data_dir) / "tams",
                                  2 * size)
        progressive_eval(bundle, catalog, protocol, size=size,
                         out_dir=out_dir)
        outputs += [out_dir / f"{protocol}.png", out_dir / f"{protocol}.json"]
    _write_run_manifest(out_dir, "eval",
                        {"ckpt": str(ckpt), "data": str(data_dir),
                         "split": split, "progressive": protocol,
                         "size": size}, outputs, started)
    click.echo(f"psnr {report.psnr:.2f} dB  ssim {report.ssim:.4f}  "
               f"n {report.n_samples}")


@main.command(name="serve")
@click.option("--ckpt-dir", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(ckpt_dir, port, host):
    """Run the HTTP inference service."""
    from .service import serve
    serve(ckpt_dir, port=port, host=host)


@main.command(name="complete")
@click.option("--contour", type=click.Path(exists=True), required=True)
@click.option("--azimuth", type=float, required=True)
@click.option("--elevation", type=float, required=True)
@click.option("--texture", "tam_family_id", required=True)
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--tams", "tams_dir", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
def complete_cmd(contour, azimuth, elevation, tam_family_id, ckpt, tams_dir,
                 out_path, seed):
    """Complete a contour drawing into a hatched sketch, offline."""
    from .service import MODEL_SIZE, letterbox_contour, _request_seed
    started = time.time()
    bundle = load_bundle(ckpt).eval()
    catalog = tamlib.load_catalog(tams_dir)
    if tam_family_id not in catalog:
        _fail(f"unknown texture family {tam_family_id!r}; "
              f"available: {sorted(catalog)}")
    try:
        light = LightSpec.from_angles(azimuth, elevation)
    except ValueError as exc:
        _fail(str(exc))
    raw = Path(contour).read_bytes()
    try:
        image = Image.open(contour)
        image.load()
    except Exception as exc:
        _fail(f"cannot read contour image: {exc}")
    cnt = letterbox_contour(image)
    params = {"azimuth": azimuth, "elevation": elevation,
              "tam_family_id": tam_family_id, "model_id": str(ckpt)}
    crop_seed = seed if seed is not None else _request_seed(raw, params)
    crops = tamlib.crop(catalog[tam_family_id], crop_seed, MODEL_SIZE)
    hint = render_gnomon_hint(light, MODEL_SIZE)
    sketch = infer_sketch(bundle, {"cnt": cnt, "ill": hint}, crops)
    out_img = (np.clip(sketch, 0, 1) * 255).round().astype(np.uint8)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(out_img, mode="L").save(out_path)
    _write_run_manifest(out_path.parent, "complete",
                        {**params, "seed": crop_seed, "ckpt": str(ckpt)},
                        [out_path], started)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
