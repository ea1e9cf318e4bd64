"""Corpus generation: subsets of rendered scenes with manifest and splits.

Layout:
    data/k<k>/scene<id>/pose<i>/{cnt,ill,hi,mid,sha,shw,sk,dif}.png
    data/k<k>/scene<id>/pose<i>/t{1..4}.png  + meta.json
    manifest.jsonl

Seeds derive from a splittable counter scheme (one stream per scene), so
output is independent of execution order and any single data point can be
regenerated byte-identically from its recorded seeds.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import tam as tamlib
from .geometry import sample_scene
from .render import CameraPose, LightSpec, render_planes

DEFAULT_SPLIT_RATIOS = (0.9, 0.05, 0.05)
SPLITS = ("train", "val", "test")
PLANE_NAMES = ("cnt", "ill", "hi", "mid", "sha", "shw", "sk", "dif")


class DatasetError(RuntimeError):
    pass


def _derive_seed(*parts):
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _save_gray(path, arr):
    if arr.dtype == bool:
        data = np.where(arr, 255, 0).astype(np.uint8)
    else:
        data = (np.clip(arr, 0.0, 1.0) * 255).round().astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def load_gray(path):
    return np.asarray(Image.open(path).convert("L"), dtype=float) / 255.0


@dataclass
class SubsetSpec:
    k: int
    n_scenes: int
    n_poses: int
    seed: int
    size: int = 256
    background_hatch: bool = False
    no_shadows: bool = False


def _scene_params(spec, scene_index, family_ids):
    """Everything about one scene that must be derivable without rendering."""
    seed = _derive_seed(spec.seed, spec.k, scene_index)
    rng = np.random.default_rng([seed, 0xA11])
    light_az = float(rng.uniform(0.0, 360.0))
    light_el = float(rng.uniform(15.0, 70.0))
    family = family_ids[int(rng.integers(len(family_ids)))]
    elevations = rng.uniform(10.0, 70.0, size=spec.n_poses)
    jitter = rng.uniform(0.0, 1.0, size=spec.n_poses)
    # azimuth stratified over n_poses sectors
    azimuths = (np.arange(spec.n_poses) + jitter) * (360.0 / spec.n_poses)
    return {
        "scene_id": f"k{spec.k}s{scene_index:04d}",
        "scene_seed": seed,
        "light": {"azimuth": light_az, "elevation": light_el},
        "tam_family_id": family,
        "poses": [{"azimuth": float(a), "elevation": float(e)}
                  for a, e in zip(azimuths, elevations)],
    }


def render_datapoint(spec, params, pose_index, catalog):
    """Render the 8 planes + 4 crops of one data point, deterministically."""
    scene = sample_scene(params["scene_seed"], spec.k)
    pose_meta = params["poses"][pose_index]
    pose = CameraPose(azimuth=pose_meta["azimuth"],
                      elevation=pose_meta["elevation"])
    light = LightSpec.from_angles(params["light"]["azimuth"],
                                  params["light"]["elevation"])
    family = catalog[params["tam_family_id"]]
    crop_seed = _derive_seed(params["scene_seed"], pose_index, 0xC0)
    crops = tamlib.crop(family, crop_seed,
                        min(spec.size, family.resolution))
    planes = render_planes(scene, pose, light, crops, size=spec.size,
                           background_hatch=spec.background_hatch,
                           no_shadows=spec.no_shadows)
    return planes, crops, crop_seed


def _write_datapoint(root, spec, params, pose_index, catalog):
    planes, crops, crop_seed = render_datapoint(spec, params, pose_index,
                                                catalog)
    rel = Path(f"k{spec.k}") / params["scene_id"] / f"pose{pose_index}"
    out = Path(root) / rel
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in planes.as_dict().items():
        _save_gray(out / f"{name}.png", arr)
    for i, c in enumerate(crops, start=1):
        _save_gray(out / f"t{i}.png", c)
    meta = {
        "scene_id": params["scene_id"],
        "pose": pose_index,
        "k": spec.k,
        "size": spec.size,
        "light": params["light"],
        "camera": params["poses"][pose_index],
        "tam_family_id": params["tam_family_id"],
        "seeds": {"scene": params["scene_seed"], "crop": crop_seed},
        "flags": {"background_hatch": spec.background_hatch,
                  "no_shadows": spec.no_shadows},
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))
    return str(rel)


def _build_scene(args):
    root, spec, params, catalog = args
    rows = []
    for pose_index in range(spec.n_poses):
        rel = _write_datapoint(root, spec, params, pose_index, catalog)
        rows.append({
            "path": rel,
            "k": spec.k,
            "scene_id": params["scene_id"],
            "pose": pose_index,
            "light": params["light"],
            "tam_family_id": params["tam_family_id"],
            "seeds": {"scene": params["scene_seed"],
                      "crop": _derive_seed(params["scene_seed"], pose_index,
                                           0xC0)},
        })
    return rows


def build_subset(root, spec, catalog, jobs=1):
    """Generate one subset (fixed max-solids k); returns manifest rows in
    deterministic scene order regardless of execution schedule."""
    if not 1 <= spec.k <= 6:
        raise DatasetError(f"k must be in [1, 6], got {spec.k}")
    family_ids = sorted(catalog)
    all_params = [_scene_params(spec, i, family_ids)
                  for i in range(spec.n_scenes)]
    tasks = [(root, spec, p, catalog) for p in all_params]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_scene = list(pool.map(_build_scene, tasks))
    else:
        per_scene = [_build_scene(t) for t in tasks]
    return [row for rows in per_scene for row in rows]


def split_assign(rows, ratios=DEFAULT_SPLIT_RATIOS):
    """Assign train/val/test per scene by hash of scene_id; all poses of a
    scene land in the same split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"split ratios must sum to 1, got {ratios}")
    bounds = np.cumsum(ratios)
    out = []
    for row in rows:
        digest = hashlib.sha256(row["scene_id"].encode()).digest()
        u = int.from_bytes(digest[:8], "big") / 2 ** 64
        split = SPLITS[int(np.searchsorted(bounds, u, side="right"))]
        out.append({**row, "split": split})
    return out


def build_dataset(root, specs, catalog, ratios=DEFAULT_SPLIT_RATIOS, jobs=1):
    """Generate all subsets and write manifest.jsonl; returns the rows."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in specs:
        rows.extend(build_subset(root, spec, catalog, jobs=jobs))
    rows = split_assign(rows, ratios)
    write_manifest(root / "manifest.jsonl", rows)
    return rows


def write_manifest(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def manifest_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_planes(root, row):
    """Load the stored images of a manifest row as float arrays in [0, 1]."""
    d = Path(root) / row["path"]
    planes = {name: load_gray(d / f"{name}.png") for name in PLANE_NAMES}
    crops = [load_gray(d / f"t{i}.png") for i in range(1, 5)]
    return planes, crops
