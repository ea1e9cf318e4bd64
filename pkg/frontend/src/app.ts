/** Browser wiring: canvas drawing, illumination dial, texture/model
 * pickers, completion overlay, and the gallery.  All rendering decisions
 * happen server-side; this file only moves pixels and state around.
 */

import { ApiClient, IlluminationThrottle } from "./api.js";
import { encodeGrayPng } from "./png.js";
import {
  CANVAS_SIZE,
  clampBrush,
  maskToGray,
  Point,
  Stroke,
} from "./raster.js";
import { GalleryEntry, Session } from "./session.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function bytesToBase64(bytes: Uint8Array): string {
  let bin = "";
  for (const b of bytes) {
    bin += String.fromCharCode(b);
  }
  return btoa(bin);
}

export function startApp(baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  const session = new Session();

  const canvas = byId<HTMLCanvasElement>("canvas");
  canvas.width = CANVAS_SIZE;
  canvas.height = CANVAS_SIZE;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas unavailable");
  }
  const overlay = byId<HTMLImageElement>("overlay");
  const hintImg = byId<HTMLImageElement>("hint");
  const azimuthInput = byId<HTMLInputElement>("azimuth");
  const elevationInput = byId<HTMLInputElement>("elevation");
  const brushInput = byId<HTMLInputElement>("brush");
  const opacityInput = byId<HTMLInputElement>("opacity");
  const textureSelect = byId<HTMLSelectElement>("texture");
  const modelSelect = byId<HTMLSelectElement>("model");
  const statusEl = byId<HTMLElement>("status");
  const galleryEl = byId<HTMLElement>("gallery");

  function redraw(): void {
    ctx!.fillStyle = "#fff";
    ctx!.fillRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
    const mask = session.contour();
    const image = ctx!.createImageData(CANVAS_SIZE, CANVAS_SIZE);
    const gray = maskToGray(mask);
    for (let i = 0; i < gray.length; i++) {
      image.data[4 * i] = gray[i];
      image.data[4 * i + 1] = gray[i];
      image.data[4 * i + 2] = gray[i];
      image.data[4 * i + 3] = 255;
    }
    ctx!.putImageData(image, 0, 0);
  }

  let active: Stroke | null = null;
  const toPoint = (ev: PointerEvent): Point => {
    const rect = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * CANVAS_SIZE,
      y: ((ev.clientY - rect.top) / rect.height) * CANVAS_SIZE,
    };
  };
  canvas.addEventListener("pointerdown", (ev) => {
    active = {
      points: [toPoint(ev)],
      width: clampBrush(Number(brushInput.value)),
    };
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (active) {
      active.points.push(toPoint(ev));
      session.addStroke(active);
      session.undo(); // preview: show stroke-in-progress without committing
      redraw();
      drawPreview(active);
    }
  });
  const drawPreview = (stroke: Stroke): void => {
    ctx!.strokeStyle = "#000";
    ctx!.lineWidth = stroke.width;
    ctx!.lineCap = "round";
    ctx!.beginPath();
    stroke.points.forEach((p, i) =>
      i === 0 ? ctx!.moveTo(p.x, p.y) : ctx!.lineTo(p.x, p.y),
    );
    ctx!.stroke();
  };
  canvas.addEventListener("pointerup", () => {
    if (active) {
      session.addStroke(active);
      active = null;
      redraw();
    }
  });

  byId<HTMLButtonElement>("undo").onclick = () => {
    session.undo();
    redraw();
  };
  byId<HTMLButtonElement>("redo").onclick = () => {
    session.redo();
    redraw();
  };
  byId<HTMLButtonElement>("clear").onclick = () => {
    session.clear();
    redraw();
  };

  const throttle = new IlluminationThrottle((azimuth, elevation) => {
    void api.illumination(azimuth, elevation).then((png) => {
      hintImg.src = `data:image/png;base64,${bytesToBase64(png)}`;
    });
  });
  const onDial = (): void => {
    session.setIllumination(
      Number(azimuthInput.value),
      Number(elevationInput.value),
    );
    throttle.request(session.azimuth, session.elevation);
  };
  azimuthInput.oninput = onDial;
  elevationInput.oninput = onDial;

  opacityInput.oninput = () => {
    overlay.style.opacity = opacityInput.value;
  };

  function renderGallery(): void {
    galleryEl.textContent = "";
    for (const entry of session.gallery) {
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${entry.completionPngBase64}`;
      img.title = `#${entry.id} az ${entry.params.azimuth} el ${entry.params.elevation}`;
      img.onclick = () => void replay(entry);
      galleryEl.appendChild(img);
    }
  }

  async function replay(entry: GalleryEntry): Promise<void> {
    const png = encodeGrayPng(
      maskToGray(
        // re-rasterize the entry's own strokes, not the live canvas
        (await import("./raster.js")).rasterize([...entry.strokes]),
      ),
      CANVAS_SIZE,
      CANVAS_SIZE,
    );
    const result = await api.complete(png, entry.params);
    overlay.src = `data:image/png;base64,${bytesToBase64(result.png)}`;
  }

  byId<HTMLButtonElement>("complete").onclick = async () => {
    if (session.isEmpty()) {
      statusEl.textContent = "canvas is empty — draw a contour first";
      return;
    }
    statusEl.textContent = "completing…";
    const seed = Date.now() % 2 ** 31;
    const params = session.currentParams(seed);
    const png = encodeGrayPng(
      maskToGray(session.contour()),
      CANVAS_SIZE,
      CANVAS_SIZE,
    );
    try {
      const result = await api.complete(png, params);
      const b64 = bytesToBase64(result.png);
      overlay.src = `data:image/png;base64,${b64}`;
      session.addGalleryEntry(params, b64);
      renderGallery();
      statusEl.textContent = result.meta["low_confidence"]
        ? `done (low confidence: ${String(result.meta["low_confidence"])})`
        : "done";
    } catch (err) {
      statusEl.textContent = `error: ${String(err)}`;
    }
  };

  byId<HTMLButtonElement>("export").onclick = () => {
    const blob = new Blob([session.exportJSON()], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session.json";
    a.click();
  };
  byId<HTMLInputElement>("import").onchange = async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file) {
      const imported = Session.importJSON(await file.text());
      Object.assign(session, imported);
      redraw();
      renderGallery();
    }
  };

  void (async () => {
    for (const fam of await api.textures()) {
      const opt = document.createElement("option");
      opt.value = fam.id;
      opt.textContent = `${fam.id} (${fam.style})`;
      textureSelect.appendChild(opt);
    }
    textureSelect.onchange = () => {
      session.tamFamilyId = textureSelect.value;
    };
    for (const model of await api.models()) {
      const opt = document.createElement("option");
      opt.value = model.id;
      opt.textContent = `${model.id} (${model.kind})`;
      modelSelect.appendChild(opt);
    }
    modelSelect.onchange = () => {
      session.modelId = modelSelect.value;
    };
    onDial();
    redraw();
  })();
}
