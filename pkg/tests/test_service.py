import base64
import io
import json

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from shad3s.models import build_bundle, save_bundle
from shad3s.render import LightSpec, render_gnomon_hint
from shad3s.service import create_app, letterbox_contour, png_bytes


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    ckpt_dir = tmp_path_factory.mktemp("ckpts")
    torch.manual_seed(0)
    save_bundle(build_bundle("direct", base_width=8, max_width=16, depth=5),
                ckpt_dir / "dm.bin")
    app = create_app(ckpt_dir, catalog_size=512)
    return TestClient(app)


def contour_png(size=(256, 256), draw_circle=True):
    arr = np.full(size[::-1], 255, dtype=np.uint8)
    if draw_circle:
        h, w = arr.shape
        yy, xx = np.mgrid[0:h, 0:w]
        r = np.hypot(yy - h / 2, xx - w / 2)
        arr[np.abs(r - min(h, w) / 4) < 2] = 0
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def complete_request(client, png, **overrides):
    data = {"azimuth": 45.0, "elevation": 30.0,
            "tam_family_id": "parallel-45", "model_id": "dm"}
    data.update(overrides)
    return client.post("/v1/complete",
                       files={"contour": ("c.png", png, "image/png")},
                       data=data)


class TestInfoEndpoints:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["models"] == 1 and body["textures"] == 6

    def test_models(self, client):
        body = client.get("/v1/models").json()
        assert body["models"] == [{"id": "dm", "kind": "direct",
                                   "variant": "unet"}]

    def test_textures_sorted_with_nested_thumbnails(self, client):
        families = client.get("/v1/textures").json()["families"]
        assert len(families) == 6
        ids = [f["id"] for f in families]
        assert ids == sorted(ids)
        for fam in families:
            means = []
            for blob in fam["tone_thumbnails_png_base64"]:
                img = Image.open(io.BytesIO(base64.b64decode(blob)))
                means.append(np.asarray(img, dtype=float).mean())
            # tone 1 darkest: mean brightness strictly increases
            assert all(a < b for a, b in zip(means, means[1:]))


class TestIllumination:
    def test_byte_identical_to_renderer(self, client):
        resp = client.get("/v1/illumination",
                          params={"azimuth": 45, "elevation": 30})
        assert resp.status_code == 200
        expected = png_bytes(render_gnomon_hint(
            LightSpec.from_angles(45.0, 30.0), 256))
        assert resp.content == expected

    def test_repeat_identical(self, client):
        params = {"azimuth": 120.5, "elevation": 55.0, "size": 128}
        a = client.get("/v1/illumination", params=params)
        b = client.get("/v1/illumination", params=params)
        assert a.content == b.content

    def test_horizon_light_rejected(self, client):
        resp = client.get("/v1/illumination",
                          params={"azimuth": 10, "elevation": 0})
        assert resp.status_code == 400

    def test_size_bounds(self, client):
        resp = client.get("/v1/illumination",
                          params={"azimuth": 10, "elevation": 30, "size": 4})
        assert resp.status_code == 400


class TestComplete:
    def test_identical_requests_identical_bytes(self, client):
        png = contour_png()
        a = complete_request(client, png)
        b = complete_request(client, png)
        assert a.status_code == 200
        assert a.headers["content-type"] == "image/png"
        assert a.content == b.content
        assert a.headers["X-Completion-Meta"] == b.headers["X-Completion-Meta"]

    def test_output_matches_input_resolution(self, client):
        resp = complete_request(client, contour_png(size=(100, 80)))
        assert resp.status_code == 200
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (100, 80)

    def test_seed_override_changes_texture_crop(self, client):
        png = contour_png()
        a = complete_request(client, png, seed=1)
        b = complete_request(client, png, seed=2)
        assert json.loads(a.headers["X-Completion-Meta"])["seed"] == 1
        assert a.content != b.content

    def test_empty_contour_flagged(self, client):
        resp = complete_request(client, contour_png(draw_circle=False))
        assert resp.status_code == 200
        meta = json.loads(resp.headers["X-Completion-Meta"])
        assert meta["low_confidence"] == "contour empty"

    def test_unknown_model_404(self, client):
        resp = complete_request(client, contour_png(), model_id="nope")
        assert resp.status_code == 404

    def test_unknown_family_404(self, client):
        resp = complete_request(client, contour_png(), tam_family_id="nope")
        assert resp.status_code == 404

    def test_malformed_image_400(self, client):
        resp = complete_request(client, b"not a png")
        assert resp.status_code == 400

    def test_horizon_light_400(self, client):
        resp = complete_request(client, contour_png(), elevation=0)
        assert resp.status_code == 400


class TestLetterbox:
    def test_round_trip_binarization(self):
        png = contour_png(size=(256, 256))
        mask = letterbox_contour(Image.open(io.BytesIO(png)))
        assert mask.shape == (256, 256)
        assert set(np.unique(mask)) <= {0.0, 1.0}
        assert mask.sum() > 0

    def test_aspect_preserved_with_white_padding(self):
        img = Image.new("L", (100, 50), 0)  # all-ink wide strip
        mask = letterbox_contour(img, size=64)
        rows_with_ink = np.flatnonzero(mask.any(axis=1))
        assert mask.shape == (64, 64)
        # strip occupies roughly the middle half vertically
        assert 24 <= len(rows_with_ink) <= 40
        assert mask[:10].sum() == 0 and mask[-10:].sum() == 0
