"""Tonal art maps: ordered stroke textures where every darker tone contains
all strokes of the lighter ones (nesting).

A family holds 4 grayscale tone textures, tone 1 darkest .. tone 4 lightest.
Synthesis builds the lightest tone first and accumulates strokes going
darker, so nesting holds by construction.  ``validate_tam`` is the import
path for externally supplied maps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

N_TONES = 4
INK_THRESHOLD = 0.5  # gray level below which a pixel counts as ink
MAX_VIOLATION = 0.005  # tolerated nesting-violation pixel fraction
DEFAULT_RESOLUTION = 1024

STYLES = ("parallel", "cross", "stipple")


class TamError(ValueError):
    pass


@dataclass
class TamFamily:
    id: str
    tones: list  # 4 float arrays in [0,1], tone 1 darkest .. tone 4 lightest
    style: str = "parallel"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.tones) != N_TONES:
            raise TamError(f"expected {N_TONES} tones, got {len(self.tones)}")
        shapes = {t.shape for t in self.tones}
        if len(shapes) != 1:
            raise TamError(f"tone sizes differ: {shapes}")

    @property
    def resolution(self):
        return self.tones[0].shape[0]


@dataclass
class TamReport:
    accepted: bool
    violation_fractions: list  # per adjacent tone pair, darker -> lighter
    coverages: list  # ink fraction per tone, tone 1 first
    reason: str = ""


def _ink(tone):
    return tone < INK_THRESHOLD


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def _draw_strokes(draw, rng, size, n, angle_deg, width):
    rad = math.radians(angle_deg)
    dx, dy = math.cos(rad), -math.sin(rad)
    span = 2 * size
    for _ in range(n):
        cx = rng.uniform(0, size)
        cy = rng.uniform(0, size)
        jitter = math.radians(rng.normal(0.0, 1.0))
        c, s = math.cos(jitter), math.sin(jitter)
        jx, jy = dx * c - dy * s, dx * s + dy * c
        draw.line([(cx - jx * span, cy - jy * span),
                   (cx + jx * span, cy + jy * span)],
                  fill=0, width=width)


def _draw_stipple(draw, rng, size, n, radius):
    for _ in range(n):
        cx = rng.uniform(0, size)
        cy = rng.uniform(0, size)
        r = radius * rng.uniform(0.7, 1.3)
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=0)


def synthesize_tam(seed, style="parallel", size=DEFAULT_RESOLUTION,
                   angle=45.0, family_id=None):
    """Procedurally build a nested tone family; deterministic in seed."""
    if style not in STYLES:
        raise TamError(f"unknown style {style!r}; choose from {STYLES}")
    rng = np.random.default_rng([seed, STYLES.index(style)])
    img = Image.new("L", (size, size), 255)
    draw = ImageDraw.Draw(img)
    width = max(2, size // 256)
    # lightest tone first; each darker level only adds strokes
    per_level = [int(size * f) for f in (0.012, 0.016, 0.022, 0.03)]
    tones = []
    for level, n in enumerate(per_level):
        if style == "stipple":
            _draw_stipple(draw, rng, size, n * 14, max(2, size // 180))
        elif style == "cross":
            a = angle if level % 2 == 0 else angle + 90.0
            _draw_strokes(draw, rng, size, n, a, width)
        else:
            _draw_strokes(draw, rng, size, n, angle, width)
        tones.append(np.asarray(img, dtype=float) / 255.0)
    tones.reverse()  # tone 1 darkest first
    fid = family_id or f"{style}-{seed}"
    return TamFamily(fid, tones, style=style, seed=seed,
                     meta={"angle": angle, "resolution": size})


# ---------------------------------------------------------------------------
# Cropping
# ---------------------------------------------------------------------------

def crop_window(tam, seed, size):
    """Deterministic crop origin, uniform over all valid positions."""
    res = tam.resolution
    if size > res:
        raise TamError(f"crop size {size} exceeds texture resolution {res}")
    rng = np.random.default_rng([seed])
    top = int(rng.integers(0, res - size + 1))
    left = int(rng.integers(0, res - size + 1))
    return top, left


def crop(tam, seed, size):
    """Aligned crops of all 4 tones; identical window, deterministic in seed."""
    top, left = crop_window(tam, seed, size)
    return [t[top:top + size, left:left + size].copy() for t in tam.tones]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_tam(images, max_violation=MAX_VIOLATION):
    """Check the nesting and coverage-monotonicity invariants.

    ``images`` are 4 grayscale arrays ordered tone 1 (darkest) to tone 4.
    """
    if len(images) != N_TONES:
        raise TamError(f"expected {N_TONES} images, got {len(images)}")
    shapes = {np.asarray(i).shape for i in images}
    if len(shapes) != 1:
        raise TamError(f"mismatched image sizes: {shapes}")
    inks = [_ink(np.asarray(i, dtype=float)) for i in images]
    n_pixels = inks[0].size
    violations = []
    for darker, lighter in zip(inks, inks[1:]):
        violations.append(float((lighter & ~darker).sum()) / n_pixels)
    coverages = [float(i.mean()) for i in inks]
    reasons = []
    if any(v > max_violation for v in violations):
        reasons.append(f"nesting violated: {violations}")
    if any(b >= a for a, b in zip(coverages, coverages[1:])):
        reasons.append(f"ink coverage not strictly decreasing: {coverages}")
    return TamReport(accepted=not reasons, violation_fractions=violations,
                     coverages=coverages, reason="; ".join(reasons))


# ---------------------------------------------------------------------------
# Catalog storage: tams/<family-id>/tone{1..4}.png + meta.json
# ---------------------------------------------------------------------------

DEFAULT_FAMILIES = (
    ("parallel-45", "parallel", 1, 45.0),
    ("parallel-135", "parallel", 2, 135.0),
    ("parallel-0", "parallel", 3, 0.0),
    ("cross-45", "cross", 4, 45.0),
    ("cross-30", "cross", 5, 30.0),
    ("stipple", "stipple", 6, 0.0),
)


def save_family(tam, catalog_dir):
    fdir = Path(catalog_dir) / tam.id
    fdir.mkdir(parents=True, exist_ok=True)
    for i, tone in enumerate(tam.tones, start=1):
        arr = (np.clip(tone, 0, 1) * 255).round().astype(np.uint8)
        Image.fromarray(arr, mode="L").save(fdir / f"tone{i}.png")
    meta = {"style": tam.style, "seed": tam.seed, "license": "CC0", **tam.meta}
    (fdir / "meta.json").write_text(json.dumps(meta, indent=2))


def load_family(family_dir):
    fdir = Path(family_dir)
    meta = json.loads((fdir / "meta.json").read_text())
    tones = []
    for i in range(1, N_TONES + 1):
        img = Image.open(fdir / f"tone{i}.png").convert("L")
        tones.append(np.asarray(img, dtype=float) / 255.0)
    return TamFamily(fdir.name, tones, style=meta.get("style", "parallel"),
                     seed=meta.get("seed", 0), meta=meta)


def build_default_catalog(catalog_dir, size=DEFAULT_RESOLUTION):
    """Write the 6 shipped families; returns the loaded catalog."""
    for fid, style, seed, angle in DEFAULT_FAMILIES:
        tam = synthesize_tam(seed, style, size=size, angle=angle, family_id=fid)
        save_family(tam, catalog_dir)
    return load_catalog(catalog_dir)


def load_catalog(catalog_dir, validate=True):
    """Load all families under a catalog directory, keyed by id."""
    root = Path(catalog_dir)
    families = {}
    for fdir in sorted(p for p in root.iterdir() if p.is_dir()):
        fam = load_family(fdir)
        if validate:
            report = validate_tam(fam.tones)
            if not report.accepted:
                raise TamError(f"family {fam.id} invalid: {report.reason}")
        families[fam.id] = fam
    return families
