import { describe, expect, it } from "vitest";
import { Session } from "../src/session.js";
import { Stroke } from "../src/raster.js";

const stroke = (x: number): Stroke => ({
  points: [
    { x, y: 10 },
    { x, y: 100 },
  ],
  width: 2,
});

describe("Session drawing history", () => {
  it("undo restores the pre-draw canvas", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    const before = session.contour().slice();
    session.addStroke(stroke(90));
    expect(session.undo()).toBe(true);
    expect([...session.contour()]).toEqual([...before]);
  });

  it("redo restores an undone stroke", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    const drawn = session.contour().slice();
    session.undo();
    expect(session.redo()).toBe(true);
    expect([...session.contour()]).toEqual([...drawn]);
  });

  it("a new stroke invalidates the redo stack", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    session.undo();
    session.addStroke(stroke(60));
    expect(session.redo()).toBe(false);
  });

  it("clear empties the contour raster", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    session.clear();
    expect(session.isEmpty()).toBe(true);
    expect(session.contour().every((v) => v === 0)).toBe(true);
  });

  it("undo on an empty session is a no-op", () => {
    expect(new Session().undo()).toBe(false);
  });
});

describe("Session illumination", () => {
  it("clamps elevation above the horizon", () => {
    const session = new Session();
    session.setIllumination(120, 0);
    expect(session.elevation).toBe(5);
    session.setIllumination(120, 89);
    expect(session.elevation).toBe(85);
  });
});

describe("Session gallery and export", () => {
  it("gallery entries are immutable snapshots", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    const entry = session.addGalleryEntry(session.currentParams(7), "cGluZw==");
    session.addStroke(stroke(90));
    expect(entry.strokes.length).toBe(1); // unaffected by later drawing
    expect(Object.isFrozen(entry)).toBe(true);
    expect(Object.isFrozen(entry.params)).toBe(true);
  });

  it("export/import round-trips strokes, settings, and gallery", () => {
    const session = new Session();
    session.addStroke(stroke(50));
    session.setIllumination(200, 60);
    session.tamFamilyId = "cross-45";
    session.addGalleryEntry(session.currentParams(3), "YWJj");
    const restored = Session.importJSON(session.exportJSON());
    expect([...restored.contour()]).toEqual([...session.contour()]);
    expect(restored.azimuth).toBe(200);
    expect(restored.elevation).toBe(60);
    expect(restored.tamFamilyId).toBe("cross-45");
    expect(restored.gallery.length).toBe(1);
    expect(restored.gallery[0].params.seed).toBe(3);
    expect(restored.gallery[0].completionPngBase64).toBe("YWJj");
  });

  it("imported sessions continue gallery ids without collision", () => {
    const session = new Session();
    session.addStroke(stroke(40));
    session.addGalleryEntry(session.currentParams(1), "YQ==");
    const restored = Session.importJSON(session.exportJSON());
    const next = restored.addGalleryEntry(restored.currentParams(2), "Yg==");
    expect(next.id).toBe(2);
  });
});
