import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, IlluminationThrottle } from "../src/api.js";

function pngResponse(bytes: Uint8Array, meta?: object): Response {
  return new Response(new Uint8Array(bytes).buffer as ArrayBuffer, {
    status: 200,
    headers: meta
      ? { "X-Completion-Meta": JSON.stringify(meta) }
      : undefined,
  });
}

const params = {
  azimuth: 45,
  elevation: 30,
  tamFamilyId: "parallel-45",
  modelId: "dm",
  seed: 7,
};

describe("ApiClient", () => {
  it("parses texture and model listings", async () => {
    const api = new ApiClient("http://svc", async (url) => {
      if (String(url).endsWith("/v1/textures")) {
        return Response.json({
          families: [{ id: "a", style: "parallel", tone_thumbnails_png_base64: [] }],
        });
      }
      return Response.json({
        models: [{ id: "dm", kind: "direct", variant: "unet" }],
      });
    });
    expect((await api.textures())[0].id).toBe("a");
    expect((await api.models())[0].kind).toBe("direct");
  });

  it("sends completion as multipart and returns bytes plus metadata", async () => {
    let captured: RequestInit | undefined;
    const api = new ApiClient("http://svc", async (_url, init) => {
      captured = init;
      return pngResponse(Uint8Array.from([1, 2, 3]), { seed: 7 });
    });
    const result = await api.complete(Uint8Array.from([9]), params);
    expect([...result.png]).toEqual([1, 2, 3]);
    expect(result.meta.seed).toBe(7);
    const form = captured?.body as FormData;
    expect(form.get("model_id")).toBe("dm");
    expect(form.get("tam_family_id")).toBe("parallel-45");
    expect(form.get("seed")).toBe("7");
    expect(form.get("contour")).toBeInstanceOf(Blob);
  });

  it("keeps at most one completion in flight", async () => {
    const order: string[] = [];
    let release: (() => void) | undefined;
    let calls = 0;
    const api = new ApiClient("http://svc", async () => {
      calls += 1;
      const id = `req${calls}`;
      order.push(`start ${id}`);
      if (id === "req1") {
        await new Promise<void>((resolve) => {
          release = resolve;
        });
      }
      order.push(`end ${id}`);
      return pngResponse(Uint8Array.from([calls]));
    });
    const first = api.complete(Uint8Array.from([0]), params);
    const second = api.complete(Uint8Array.from([0]), params);
    await new Promise((r) => setTimeout(r, 10));
    expect(order).toEqual(["start req1"]); // second is queued, not started
    release!();
    await Promise.all([first, second]);
    expect(order).toEqual(["start req1", "end req1", "start req2", "end req2"]);
  });

  it("continues the queue after a failed completion", async () => {
    let calls = 0;
    const api = new ApiClient("http://svc", async () => {
      calls += 1;
      if (calls === 1) {
        return Response.json({ detail: "boom" }, { status: 400 });
      }
      return pngResponse(Uint8Array.from([calls]));
    });
    await expect(api.complete(Uint8Array.from([0]), params)).rejects.toThrow(
      ApiError,
    );
    const ok = await api.complete(Uint8Array.from([0]), params);
    expect([...ok.png]).toEqual([2]);
  });

  it("raises ApiError with the service detail", async () => {
    const api = new ApiClient("http://svc", async () =>
      Response.json({ detail: "unknown model 'x'" }, { status: 404 }),
    );
    await expect(api.models()).rejects.toMatchObject({
      status: 404,
      message: "unknown model 'x'",
    });
  });
});

describe("IlluminationThrottle", () => {
  function fakeClock() {
    let now = 0;
    const timers: { at: number; cb: () => void }[] = [];
    return {
      now: () => now,
      timer: (cb: () => void, ms: number) => timers.push({ at: now + ms, cb }),
      advance(ms: number) {
        const target = now + ms;
        while (true) {
          const due = timers
            .filter((t) => t.at <= target)
            .sort((a, b) => a.at - b.at)[0];
          if (!due) break;
          timers.splice(timers.indexOf(due), 1);
          now = due.at;
          due.cb();
        }
        now = target;
      },
    };
  }

  it("caps rapid dialing at five requests per second", () => {
    const clock = fakeClock();
    const sent: number[] = [];
    const throttle = new IlluminationThrottle(
      (az) => sent.push(az),
      200,
      clock.now,
      clock.timer,
    );
    for (let i = 0; i < 50; i++) {
      throttle.request(i, 30);
      clock.advance(20); // 50 dial events over 1 s
    }
    clock.advance(500);
    expect(sent.length).toBeLessThanOrEqual(6);
    expect(sent[sent.length - 1]).toBe(49); // latest value wins
  });

  it("sends immediately when idle", () => {
    const clock = fakeClock();
    const sent: [number, number][] = [];
    const throttle = new IlluminationThrottle(
      (az, el) => sent.push([az, el]),
      200,
      clock.now,
      clock.timer,
    );
    throttle.request(10, 20);
    expect(sent).toEqual([[10, 20]]);
    clock.advance(1000);
    throttle.request(30, 40);
    expect(sent).toEqual([
      [10, 20],
      [30, 40],
    ]);
  });
});
