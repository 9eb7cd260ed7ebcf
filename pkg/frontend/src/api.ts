// Gateway client: the console holds no authoritative state and only ever
// talks to the documented endpoints, so a refresh can rebuild everything
// from GETs plus the push stream.

import type {
  AffectMetric,
  AffectiveSample,
  Alert,
  ArmPose,
  EegWindowWire,
  ExecStatus,
  Markers,
  StreamLine,
} from "./types.js";

type FetchLike = typeof fetch;

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class GatewayClient {
  constructor(
    readonly base: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`);
    const body = await resp.json();
    if (!resp.ok) {
      throw new GatewayError(resp.status, body?.error ?? resp.statusText);
    }
    return body as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new GatewayError(resp.status, body?.error ?? resp.statusText);
    }
    return body as T;
  }

  getPlan(): Promise<ExecStatus> {
    return this.getJson("/api/v1/plan");
  }

  getJoints(): Promise<ArmPose> {
    return this.getJson("/api/v1/joints");
  }

  getMarkers(): Promise<Markers> {
    return this.getJson("/api/v1/markers");
  }

  getAffective(): Promise<AffectiveSample> {
    return this.getJson("/api/v1/affective");
  }

  getAlerts(sinceMs = 0): Promise<{ alerts: Alert[] }> {
    return this.getJson(`/api/v1/alerts?since=${sinceMs}`);
  }

  getRawEeg(windows = 20): Promise<{ windows: EegWindowWire[] }> {
    return this.getJson(`/api/v1/raw_eeg?window=${windows}`);
  }

  control(command: "start" | "stop" | "resume"): Promise<ExecStatus> {
    return this.postJson("/api/v1/control", { command });
  }

  claim(block: string): Promise<ExecStatus> {
    return this.postJson("/api/v1/claim", { block });
  }

  release(block: string): Promise<ExecStatus> {
    return this.postJson("/api/v1/release", { block });
  }

  affectOverride(metric: AffectMetric, value: number): Promise<unknown> {
    return this.postJson("/api/v1/affect_override", { metric, value });
  }

  blink(): Promise<unknown> {
    return this.postJson("/api/v1/blink", {});
  }

  /** Consume the long-lived NDJSON stream; returns a stop function. */
  openStream(
    onLine: (line: StreamLine) => void,
    onStatus: (connected: boolean) => void,
    reconnectMs = 1000,
  ): () => void {
    let stopped = false;
    let controller: AbortController | null = null;

    const connect = async () => {
      while (!stopped) {
        controller = new AbortController();
        try {
          const resp = await this.fetchFn(`${this.base}/api/v1/stream`, {
            signal: controller.signal,
          });
          if (!resp.ok || resp.body === null) {
            throw new GatewayError(resp.status, "stream unavailable");
          }
          onStatus(true);
          const reader = resp.body.getReader();
          const decoder = new TextDecoder();
          const parser = new NdjsonParser();
          for (;;) {
            const { done, value } = await reader.read();
            if (done) break;
            for (const obj of parser.push(decoder.decode(value, { stream: true }))) {
              onLine(obj as StreamLine);
            }
          }
        } catch {
          // fall through to reconnect
        }
        onStatus(false);
        if (!stopped) {
          await new Promise((r) => setTimeout(r, reconnectMs));
        }
      }
    };

    void connect();
    return () => {
      stopped = true;
      controller?.abort();
    };
  }
}

/** Incremental newline-delimited JSON splitter (chunks may split lines). */
export class NdjsonParser {
  private buffer = "";

  push(chunk: string): unknown[] {
    this.buffer += chunk;
    const out: unknown[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (line.length > 0) {
        out.push(JSON.parse(line));
      }
    }
    return out;
  }
}
