/** Drawing session: vector strokes with undo/redo, illumination and
 * texture choices, and an immutable completion gallery.  Exported JSON
 * replays to identical gallery results because it carries every parameter
 * the service needs.
 */

import { CANVAS_SIZE, clampBrush, rasterize, Stroke } from "./raster.js";

export interface CompletionParams {
  azimuth: number;
  elevation: number;
  tamFamilyId: string;
  modelId: string;
  seed: number;
}

export interface GalleryEntry {
  readonly id: number;
  readonly params: CompletionParams;
  readonly strokes: readonly Stroke[];
  readonly completionPngBase64: string;
}

export interface SessionState {
  strokes: Stroke[];
  azimuth: number;
  elevation: number;
  tamFamilyId: string;
  modelId: string;
  gallery: GalleryEntry[];
}

export const MIN_ELEVATION = 5;
export const MAX_ELEVATION = 85;

function cloneStrokes(strokes: readonly Stroke[]): Stroke[] {
  return strokes.map((s) => ({
    width: s.width,
    points: s.points.map((p) => ({ x: p.x, y: p.y })),
  }));
}

export class Session {
  private strokes: Stroke[] = [];
  private redoStack: Stroke[] = [];
  private galleryEntries: GalleryEntry[] = [];
  private nextGalleryId = 1;
  azimuth = 45;
  elevation = 30;
  tamFamilyId = "parallel-45";
  modelId = "dm";

  addStroke(stroke: Stroke): void {
    if (stroke.points.length === 0) {
      return;
    }
    this.strokes.push({ ...stroke, width: clampBrush(stroke.width) });
    this.redoStack = [];
  }

  undo(): boolean {
    const stroke = this.strokes.pop();
    if (!stroke) {
      return false;
    }
    this.redoStack.push(stroke);
    return true;
  }

  redo(): boolean {
    const stroke = this.redoStack.pop();
    if (!stroke) {
      return false;
    }
    this.strokes.push(stroke);
    return true;
  }

  clear(): void {
    this.strokes = [];
    this.redoStack = [];
  }

  get strokeCount(): number {
    return this.strokes.length;
  }

  isEmpty(): boolean {
    return this.strokes.length === 0;
  }

  setIllumination(azimuth: number, elevation: number): void {
    this.azimuth = azimuth;
    this.elevation = Math.min(
      MAX_ELEVATION,
      Math.max(MIN_ELEVATION, elevation),
    );
  }

  /** Current canvas as a binary ink raster for submission. */
  contour(size: number = CANVAS_SIZE): Uint8Array {
    return rasterize(this.strokes, size);
  }

  currentParams(seed: number): CompletionParams {
    return {
      azimuth: this.azimuth,
      elevation: this.elevation,
      tamFamilyId: this.tamFamilyId,
      modelId: this.modelId,
      seed,
    };
  }

  addGalleryEntry(
    params: CompletionParams,
    completionPngBase64: string,
  ): GalleryEntry {
    const entry: GalleryEntry = Object.freeze({
      id: this.nextGalleryId++,
      params: Object.freeze({ ...params }),
      strokes: Object.freeze(cloneStrokes(this.strokes)),
      completionPngBase64,
    });
    this.galleryEntries.push(entry);
    return entry;
  }

  get gallery(): readonly GalleryEntry[] {
    return this.galleryEntries;
  }

  exportJSON(): string {
    const state: SessionState = {
      strokes: cloneStrokes(this.strokes),
      azimuth: this.azimuth,
      elevation: this.elevation,
      tamFamilyId: this.tamFamilyId,
      modelId: this.modelId,
      gallery: this.galleryEntries,
    };
    return JSON.stringify(state);
  }

  static importJSON(json: string): Session {
    const state = JSON.parse(json) as SessionState;
    const session = new Session();
    session.strokes = cloneStrokes(state.strokes ?? []);
    session.azimuth = state.azimuth ?? 45;
    session.elevation = state.elevation ?? 30;
    session.tamFamilyId = state.tamFamilyId ?? "parallel-45";
    session.modelId = state.modelId ?? "dm";
    for (const entry of state.gallery ?? []) {
      session.galleryEntries.push(
        Object.freeze({
          id: entry.id,
          params: Object.freeze({ ...entry.params }),
          strokes: Object.freeze(cloneStrokes(entry.strokes)),
          completionPngBase64: entry.completionPngBase64,
        }),
      );
      session.nextGalleryId = Math.max(session.nextGalleryId, entry.id + 1);
    }
    return session;
  }
}
