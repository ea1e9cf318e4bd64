/** HTTP client for the completion service.  The UI computes no model math;
 * every pixel of hint and completion comes from the service.
 */

import { CompletionParams } from "./session.js";

export interface TextureFamily {
  id: string;
  style: string;
  tone_thumbnails_png_base64: string[];
}

export interface ModelInfo {
  id: string;
  kind: string;
  variant: string;
}

export interface CompletionResult {
  png: Uint8Array;
  meta: Record<string, unknown>;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function okOrThrow(response: Response): Promise<Response> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) {
        detail = body.detail;
      }
    } catch {
      // non-JSON error body; keep status text
    }
    throw new ApiError(response.status, detail);
  }
  return response;
}

export class ApiClient {
  private completionQueue: Promise<unknown> = Promise.resolve();

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async health(): Promise<Record<string, unknown>> {
    const res = await okOrThrow(await this.fetchImpl(`${this.baseUrl}/healthz`));
    return (await res.json()) as Record<string, unknown>;
  }

  async models(): Promise<ModelInfo[]> {
    const res = await okOrThrow(
      await this.fetchImpl(`${this.baseUrl}/v1/models`),
    );
    return ((await res.json()) as { models: ModelInfo[] }).models;
  }

  async textures(): Promise<TextureFamily[]> {
    const res = await okOrThrow(
      await this.fetchImpl(`${this.baseUrl}/v1/textures`),
    );
    return ((await res.json()) as { families: TextureFamily[] }).families;
  }

  async illumination(
    azimuth: number,
    elevation: number,
    size = 256,
  ): Promise<Uint8Array> {
    const params = new URLSearchParams({
      azimuth: String(azimuth),
      elevation: String(elevation),
      size: String(size),
    });
    const res = await okOrThrow(
      await this.fetchImpl(`${this.baseUrl}/v1/illumination?${params}`),
    );
    return new Uint8Array(await res.arrayBuffer());
  }

  /** POST a contour for completion.  At most one request is in flight;
   * further calls queue behind it. */
  complete(
    contourPng: Uint8Array,
    params: CompletionParams,
  ): Promise<CompletionResult> {
    const run = async (): Promise<CompletionResult> => {
      const form = new FormData();
      form.append(
        "contour",
        new Blob([contourPng.buffer as ArrayBuffer], { type: "image/png" }),
        "contour.png",
      );
      form.append("azimuth", String(params.azimuth));
      form.append("elevation", String(params.elevation));
      form.append("tam_family_id", params.tamFamilyId);
      form.append("model_id", params.modelId);
      form.append("seed", String(params.seed));
      const res = await okOrThrow(
        await this.fetchImpl(`${this.baseUrl}/v1/complete`, {
          method: "POST",
          body: form,
        }),
      );
      const metaHeader = res.headers.get("X-Completion-Meta");
      return {
        png: new Uint8Array(await res.arrayBuffer()),
        meta: metaHeader
          ? (JSON.parse(metaHeader) as Record<string, unknown>)
          : {},
      };
    };
    const queued = this.completionQueue.then(run, run);
    this.completionQueue = queued.catch(() => undefined);
    return queued;
  }
}

type TimerFn = (callback: () => void, ms: number) => unknown;

/** Rate limiter for the illumination dial: at most one request per
 * interval (default 200 ms, i.e. <= 5 requests/s); rapid dialing collapses
 * to the latest value. */
export class IlluminationThrottle {
  private lastFired = -Infinity;
  private pending: { azimuth: number; elevation: number } | null = null;
  private timerArmed = false;

  constructor(
    private readonly send: (azimuth: number, elevation: number) => void,
    private readonly intervalMs = 200,
    private readonly now: () => number = () => Date.now(),
    private readonly timer: TimerFn = (cb, ms) => setTimeout(cb, ms),
  ) {}

  request(azimuth: number, elevation: number): void {
    const t = this.now();
    if (t - this.lastFired >= this.intervalMs && !this.timerArmed) {
      this.lastFired = t;
      this.send(azimuth, elevation);
      return;
    }
    this.pending = { azimuth, elevation };
    if (!this.timerArmed) {
      this.timerArmed = true;
      const wait = Math.max(0, this.intervalMs - (t - this.lastFired));
      this.timer(() => this.flush(), wait);
    }
  }

  private flush(): void {
    this.timerArmed = false;
    if (this.pending) {
      this.lastFired = this.now();
      const { azimuth, elevation } = this.pending;
      this.pending = null;
      this.send(azimuth, elevation);
    }
  }
}
