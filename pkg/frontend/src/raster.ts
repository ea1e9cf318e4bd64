/** Pure polyline rasterizer: vector strokes -> binary contour raster.
 *
 * Strokes are kept as vectors client-side for undo fidelity; the model
 * consumes a 256x256 binary raster, produced here without any canvas
 * dependency so it runs identically in the browser and in tests.
 */

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  points: Point[];
  width: number;
}

export const CANVAS_SIZE = 256;
export const MIN_BRUSH = 1;
export const MAX_BRUSH = 8;

export function clampBrush(width: number): number {
  return Math.min(MAX_BRUSH, Math.max(MIN_BRUSH, Math.round(width)));
}

function markSegment(
  mask: Uint8Array,
  size: number,
  a: Point,
  b: Point,
  width: number,
): void {
  const radius = width / 2;
  const minX = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius));
  const maxX = Math.min(size - 1, Math.ceil(Math.max(a.x, b.x) + radius));
  const minY = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius));
  const maxY = Math.min(size - 1, Math.ceil(Math.max(a.y, b.y) + radius));
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const lengthSq = dx * dx + dy * dy;
  for (let y = minY; y <= maxY; y++) {
    for (let x = minX; x <= maxX; x++) {
      let t = 0;
      if (lengthSq > 0) {
        t = ((x - a.x) * dx + (y - a.y) * dy) / lengthSq;
        t = Math.min(1, Math.max(0, t));
      }
      const px = a.x + t * dx;
      const py = a.y + t * dy;
      const dist = Math.hypot(x - px, y - py);
      if (dist <= radius) {
        mask[y * size + x] = 1;
      }
    }
  }
}

/** Rasterize strokes into a row-major 0/1 ink mask. */
export function rasterize(
  strokes: readonly Stroke[],
  size: number = CANVAS_SIZE,
): Uint8Array {
  const mask = new Uint8Array(size * size);
  for (const stroke of strokes) {
    const width = clampBrush(stroke.width);
    if (stroke.points.length === 1) {
      markSegment(mask, size, stroke.points[0], stroke.points[0], width);
    }
    for (let i = 0; i + 1 < stroke.points.length; i++) {
      markSegment(mask, size, stroke.points[i], stroke.points[i + 1], width);
    }
  }
  return mask;
}

/** Ink mask -> 8-bit grayscale pixels (ink black on white). */
export function maskToGray(mask: Uint8Array): Uint8Array {
  const gray = new Uint8Array(mask.length);
  for (let i = 0; i < mask.length; i++) {
    gray[i] = mask[i] ? 0 : 255;
  }
  return gray;
}
