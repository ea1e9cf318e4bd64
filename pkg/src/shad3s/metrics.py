"""Image-quality metrics and the progressive evaluation grids.

PSNR and SSIM follow their standard 8-bit forms (SSIM with a uniform 8x8
sliding window).  The inception-style score takes any classifier mapping a
batch of grayscale images to class-probability rows; the default is a small
CNN trained to predict the scene-complexity level (max solid count) of a
sketch, since sketch corpora have no natural ImageNet classes.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from .geometry import CsgScene, Leaf, Primitive, Transform, sample_scene
from .models import forward_direct, forward_split
from .render import CameraPose, LightSpec, render_planes
from . import tam as tamlib


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PSNR / SSIM
# ---------------------------------------------------------------------------

def psnr(x, y, peak=255.0):
    """10*log10(peak^2 / MSE) in dB; identical images give +inf."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(x, y, window=8, c1=(0.01 * 255) ** 2, c2=(0.03 * 255) ** 2):
    """Mean local SSIM over all stride-1 uniform windows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise MetricError(f"image {x.shape} smaller than window {window}")
    wx = sliding_window_view(x, (window, window)).reshape(-1, window * window)
    wy = sliding_window_view(y, (window, window)).reshape(-1, window * window)
    mx, my = wx.mean(axis=1), wy.mean(axis=1)
    vx = wx.var(axis=1)
    vy = wy.var(axis=1)
    cov = (wx * wy).mean(axis=1) - mx * my
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# Inception-style score
# ---------------------------------------------------------------------------

def inception_score(samples, classifier, splits=10):
    """exp(mean KL(p(y|x) || p(y))) per split; returns (mean, std)."""
    n = len(samples)
    if n == 0:
        raise MetricError("empty sample set")
    probs = np.asarray(classifier(samples), dtype=float)
    if probs.ndim != 2 or probs.shape[0] != n:
        raise MetricError(f"classifier returned shape {probs.shape} "
                          f"for {n} samples")
    probs = np.clip(probs, 1e-12, 1.0)
    splits = max(1, min(splits, n))
    scores = []
    for chunk in np.array_split(probs, splits):
        marginal = chunk.mean(axis=0, keepdims=True)
        kl = (chunk * (np.log(chunk) - np.log(marginal))).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


class SubsetClassifier(nn.Module):
    """Small CNN over grayscale images; the default scorer backbone."""

    def __init__(self, n_classes, width=16):
        super().__init__()
        self.n_classes = n_classes
        self.features = nn.Sequential(
            nn.Conv2d(1, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width * 2, width * 4, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(width * 4, n_classes)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))

    def __call__(self, x):
        if isinstance(x, torch.Tensor):
            return super().__call__(x)
        # numpy batch of (N, H, W) images in [0, 1] -> probability rows
        batch = torch.tensor(np.asarray(x), dtype=torch.float32)[:, None]
        self.eval()
        with torch.no_grad():
            return F.softmax(super().__call__(batch), dim=1).numpy()


def train_subset_classifier(images, labels, n_classes, epochs=20,
                            batch_size=16, lr=1e-3, seed=0):
    """Fit the default scorer on (image, class-index) pairs."""
    torch.manual_seed(seed)
    clf = SubsetClassifier(n_classes)
    x = torch.tensor(np.asarray(images), dtype=torch.float32)[:, None]
    y = torch.tensor(np.asarray(labels), dtype=torch.long)
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    order = torch.Generator().manual_seed(seed)
    clf.train()
    for _ in range(epochs):
        perm = torch.randperm(len(x), generator=order)
        for start in range(0, len(x), batch_size):
            idx = perm[start:start + batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(clf(x[idx]), y[idx])
            loss.backward()
            opt.step()
    clf.eval()
    return clf


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    inception_score: float
    inception_score_std: float
    inference_time_ms: float
    n_samples: int


def evaluate_pairs(predictions, targets, classifier=None, splits=10,
                   inference_time_ms=0.0):
    """Aggregate metrics over aligned (prediction, target) image lists;
    images in [0, 1] are scaled to 8-bit range for psnr/ssim."""
    if len(predictions) != len(targets) or not predictions:
        raise MetricError("need equal, nonempty prediction/target lists")
    ps, ss = [], []
    for p, t in zip(predictions, targets):
        p8, t8 = np.asarray(p) * 255.0, np.asarray(t) * 255.0
        ps.append(psnr(p8, t8))
        ss.append(ssim(p8, t8))
    finite = [v for v in ps if math.isfinite(v)]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    if classifier is not None:
        is_mean, is_std = inception_score(predictions, classifier, splits)
    else:
        is_mean, is_std = float("nan"), float("nan")
    return MetricsReport(psnr=mean_psnr, ssim=float(np.mean(ss)),
                         inception_score=is_mean, inception_score_std=is_std,
                         inference_time_ms=inference_time_ms,
                         n_samples=len(predictions))


def write_report(report, path):
    Path(path).write_text(json.dumps(asdict(report), indent=2,
                                     sort_keys=True))


# ---------------------------------------------------------------------------
# Progressive evaluation grids
# ---------------------------------------------------------------------------

PROTOCOLS = ("pose", "pose+lit", "pose+lit+shap", "txr", "all")
_SHAPE_CYCLE = ("box", "sphere", "cylinder", "cone", "torus")


def _single_solid_scene(kind, seed=0):
    params = {"box": (0.8, 0.8, 0.8),
              "sphere": (0.9,),
              "cylinder": (0.6, 1.8),
              "cone": (0.8, 1.6),
              "torus": (0.8, 0.3)}[kind]
    leaf = Leaf(Primitive(kind, params),
                Transform(translation=(0.0, 1.0, 0.0)))
    return CsgScene(root=leaf, seed=seed, max_solids=1)


def _cell_factors(protocol, index, rows, cols, family_ids, seed):
    """The controlled factor assignment of one grid cell."""
    row, col = divmod(index, cols)
    factors = {
        "azimuth": 360.0 * col / max(cols, 1) + 20.0,
        "elevation": 35.0,
        "light_azimuth": 135.0,
        "light_elevation": 45.0,
        "shape": "box",
        "family_id": family_ids[0],
        "scene_seed": None,
    }
    if protocol in ("pose+lit", "pose+lit+shap"):
        factors["light_azimuth"] = (360.0 * row / max(rows, 1) + 45.0) % 360.0
    if protocol == "pose+lit+shap":
        factors["shape"] = _SHAPE_CYCLE[index % len(_SHAPE_CYCLE)]
    if protocol == "txr":
        factors["azimuth"] = 45.0  # pose fixed; only texture varies
        factors["family_id"] = family_ids[index % len(family_ids)]
    if protocol == "all":
        factors["scene_seed"] = seed + index
        factors["azimuth"] = 360.0 * index / (rows * cols)
        factors["light_azimuth"] = (90.0 * index) % 360.0
        factors["family_id"] = family_ids[index % len(family_ids)]
    return factors


def infer_sketch(bundle, planes, crops):
    """Run a bundle on one rendered data point; returns the sketch in [0,1]."""
    c = torch.tensor(planes["cnt"], dtype=torch.float32)[None, None]
    l = torch.tensor(planes["ill"], dtype=torch.float32)[None, None]
    t = torch.stack([torch.tensor(x, dtype=torch.float32)
                     for x in crops])[None]
    bundle.eval()
    with torch.no_grad():
        if bundle.kind == "direct":
            s_hat = forward_direct(bundle.generators["g"], c, l, t)
        else:
            _, s_hat = forward_split(bundle, c, l, t)
    return s_hat[0, 0].numpy()


def progressive_eval(bundle, catalog, protocol, rows=2, cols=3, size=64,
                     seed=0, out_dir=None):
    """Render controlled ground-truth grids, run inference, and report
    per-cell L1; optionally writes grid.png and report cells to out_dir."""
    if protocol not in PROTOCOLS:
        raise MetricError(f"unknown protocol {protocol!r}; "
                          f"expected one of {PROTOCOLS}")
    family_ids = sorted(catalog)
    cells = []
    tiles = []
    start = time.perf_counter()
    for index in range(rows * cols):
        f = _cell_factors(protocol, index, rows, cols, family_ids, seed)
        if f["scene_seed"] is None:
            scene = _single_solid_scene(f["shape"], seed=seed)
        else:
            scene = sample_scene(f["scene_seed"], 6)
        pose = CameraPose(azimuth=f["azimuth"], elevation=f["elevation"])
        light = LightSpec.from_angles(f["light_azimuth"],
                                      f["light_elevation"])
        family = catalog[f["family_id"]]
        crops = tamlib.crop(family, seed + index,
                            min(size, family.resolution))
        planes = render_planes(scene, pose, light, crops, size=size)
        truth = np.clip(planes.sk, 0.0, 1.0)
        pred = infer_sketch(bundle, planes.as_dict(), crops)
        cells.append({**f, "l1": float(np.abs(pred - truth).mean())})
        tiles.append((pred, truth))
    elapsed_ms = (time.perf_counter() - start) * 1000.0 / (rows * cols)
    # tiled figure: prediction atop ground truth per cell
    grid = np.vstack([
        np.hstack([np.vstack(tiles[r * cols + c])
                   for c in range(cols)])
        for r in range(rows)])
    result = {"protocol": protocol, "rows": rows, "cols": cols,
              "cells": cells, "mean_l1": float(np.mean([c["l1"]
                                                        for c in cells])),
              "ms_per_cell": elapsed_ms}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        img = (np.clip(grid, 0, 1) * 255).round().astype(np.uint8)
        Image.fromarray(img, mode="L").save(out_dir / f"{protocol}.png")
        (out_dir / f"{protocol}.json").write_text(
            json.dumps(result, indent=2, sort_keys=True))
    return result, grid
