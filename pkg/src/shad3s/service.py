"""HTTP inference service.

Stateless endpoints over a checkpoint directory:
    POST /v1/complete      contour PNG + params -> completed sketch PNG
    GET  /v1/illumination  azimuth/elevation -> gnomon hint PNG
    GET  /v1/textures      texture catalog summary with tone thumbnails
    GET  /v1/models        loaded model ids
    GET  /healthz

Configuration: SHAD3S_CKPT_DIR (checkpoints `*.bin` + `tams/` catalog;
the default catalog is generated on first start if absent) and SHAD3S_PORT.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from PIL import Image

from . import tam as tamlib
from .metrics import infer_sketch
from .models import load_bundle
from .render import LightSpec, render_gnomon_hint

MODEL_SIZE = 256


def png_bytes(array):
    """Encode a float image in [0, 1] as 8-bit grayscale PNG."""
    img = (np.clip(array, 0.0, 1.0) * 255).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def letterbox_contour(image, size=MODEL_SIZE):
    """Fit an arbitrary grayscale image onto a white square canvas and
    binarize dark strokes; returns the ink mask as float in {0, 1}."""
    w, h = image.size
    scale = size / max(w, h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = image.convert("L").resize((new_w, new_h), Image.LANCZOS)
    canvas = Image.new("L", (size, size), 255)
    canvas.paste(resized, ((size - new_w) // 2, (size - new_h) // 2))
    arr = np.asarray(canvas, dtype=float) / 255.0
    return (arr < 0.5).astype(float)


def _request_seed(contour_bytes, params):
    digest = hashlib.sha256()
    digest.update(contour_bytes)
    digest.update(json.dumps(params, sort_keys=True).encode())
    return int.from_bytes(digest.digest()[:8], "big")


def _light_or_400(azimuth, elevation):
    try:
        return LightSpec.from_angles(azimuth, elevation)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))


def create_app(ckpt_dir=None, catalog_size=512):
    ckpt_dir = Path(ckpt_dir or os.environ.get("SHAD3S_CKPT_DIR", "ckpts"))
    if not ckpt_dir.is_dir():
        raise FileNotFoundError(f"checkpoint directory {ckpt_dir} not found")
    models = {p.stem: load_bundle(p).eval()
              for p in sorted(ckpt_dir.glob("*.bin"))}
    tams_dir = ckpt_dir / "tams"
    if tams_dir.is_dir():
        catalog = tamlib.load_catalog(tams_dir)
    else:
        catalog = tamlib.build_default_catalog(tams_dir, size=catalog_size)

    app = FastAPI(title="hatch completion service")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": len(models),
                "textures": len(catalog)}

    @app.get("/v1/models")
    def list_models():
        return {"models": [
            {"id": mid, "kind": bundle.kind,
             "variant": next(iter(bundle.specs.values()))["variant"]}
            for mid, bundle in sorted(models.items())]}

    @app.get("/v1/textures")
    def list_textures():
        families = []
        for fid in sorted(catalog):
            fam = catalog[fid]
            thumbs = []
            for tone in fam.tones:
                step = max(1, fam.resolution // 64)
                thumbs.append(base64.b64encode(
                    png_bytes(tone[::step, ::step])).decode())
            families.append({"id": fid, "style": fam.style,
                             "tone_thumbnails_png_base64": thumbs})
        return {"families": families}

    @app.get("/v1/illumination")
    def illumination(azimuth: float, elevation: float,
                     size: int = MODEL_SIZE):
        if not 16 <= size <= 1024:
            raise HTTPException(status_code=400,
                                detail=f"size {size} out of range [16, 1024]")
        light = _light_or_400(azimuth, elevation)
        return Response(content=png_bytes(render_gnomon_hint(light, size)),
                        media_type="image/png")

    @app.post("/v1/complete")
    async def complete(contour: UploadFile = File(...),
                       azimuth: float = Form(...),
                       elevation: float = Form(...),
                       tam_family_id: str = Form(...),
                       model_id: str = Form(...),
                       seed: int | None = Form(None)):
        if model_id not in models:
            raise HTTPException(status_code=404,
                                detail=f"unknown model {model_id!r}")
        if tam_family_id not in catalog:
            raise HTTPException(
                status_code=404,
                detail=f"unknown texture family {tam_family_id!r}")
        light = _light_or_400(azimuth, elevation)
        raw = await contour.read()
        try:
            image = Image.open(io.BytesIO(raw))
            image.load()
        except Exception:
            raise HTTPException(status_code=400,
                                detail="contour is not a decodable image")
        original_size = image.size
        cnt = letterbox_contour(image)
        params = {"azimuth": azimuth, "elevation": elevation,
                  "tam_family_id": tam_family_id, "model_id": model_id}
        crop_seed = seed if seed is not None else _request_seed(raw, params)
        family = catalog[tam_family_id]
        if family.resolution < MODEL_SIZE:
            raise HTTPException(
                status_code=400,
                detail=f"texture family {tam_family_id!r} resolution "
                       f"{family.resolution} below model size {MODEL_SIZE}")
        crops = tamlib.crop(family, crop_seed, MODEL_SIZE)
        hint = render_gnomon_hint(light, MODEL_SIZE)
        sketch = infer_sketch(models[model_id], {"cnt": cnt, "ill": hint},
                              crops)
        out = Image.fromarray(
            (np.clip(sketch, 0, 1) * 255).round().astype(np.uint8), mode="L")
        if original_size != (MODEL_SIZE, MODEL_SIZE):
            out = out.resize(original_size, Image.NEAREST)
        meta = {"model_id": model_id, "tam_family_id": tam_family_id,
                "seed": crop_seed}
        if cnt.sum() == 0:
            meta["low_confidence"] = "contour empty"
        buf = io.BytesIO()
        out.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png",
                        headers={"X-Completion-Meta": json.dumps(
                            meta, sort_keys=True)})

    app.state.models = models
    app.state.catalog = catalog
    return app


def serve(ckpt_dir=None, port=None, host="127.0.0.1"):
    import uvicorn
    port = int(port or os.environ.get("SHAD3S_PORT", "8315"))
    uvicorn.run(create_app(ckpt_dir), host=host, port=port)
