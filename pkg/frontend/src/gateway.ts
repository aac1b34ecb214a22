/** HTTP client for the three gateway endpoints, plus a reconnecting event stream.
 *
 * The stream is plain fetch over the SSE wire format rather than
 * EventSource, so the same code runs in the browser and under node-based
 * tests, and so the resync marker (a frame without an id) is visible to us.
 */

import type { CommandBody, EventDoc, ErrorDoc, OpDoc, SceneDoc } from "./types";
import { isSceneDoc } from "./types";

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly reason: string,
    message: string,
  ) {
    super(message);
  }
}

export interface CommandResult {
  accepted: boolean;
  status: number;
  op?: OpDoc;
  reason?: string;
  message?: string;
}

export class GatewayClient {
  constructor(readonly base: string = "") {}

  async fetchScene(): Promise<SceneDoc> {
    const resp = await fetch(`${this.base}/scene`);
    const doc = await resp.json();
    if (!resp.ok) {
      const err = doc as ErrorDoc;
      throw new GatewayError(resp.status, err.error?.reason ?? "http", err.error?.message ?? `scene fetch failed (${resp.status})`);
    }
    if (!isSceneDoc(doc)) {
      throw new GatewayError(resp.status, "malformed", "scene document has an unexpected shape");
    }
    return doc;
  }

  /** POST a command; rejections come back as a result, not an exception. */
  async postCommand(body: CommandBody): Promise<CommandResult> {
    const resp = await fetch(`${this.base}/commands`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const doc = await resp.json();
    if (resp.status === 202) {
      return { accepted: true, status: resp.status, op: doc as OpDoc };
    }
    const err = doc as ErrorDoc;
    return {
      accepted: false,
      status: resp.status,
      reason: err.error?.reason ?? "http",
      message: err.error?.message ?? `command failed (${resp.status})`,
    };
  }
}

export interface EventStreamHandlers {
  /** A regular event frame; seq is the frame id. */
  onEvent: (seq: number, doc: EventDoc) => void;
  /** The server discarded events before our position: refetch the scene. */
  onResync: () => void;
  onStatusChange?: (connected: boolean) => void;
}

const RECONNECT_DELAY_MS = 1000;

/** Reconnecting SSE reader for GET /events?since=SEQ. */
export class EventStream {
  private lastSeq: number;
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(
    readonly base: string,
    readonly handlers: EventStreamHandlers,
    sinceSeq = 0,
  ) {
    this.lastSeq = sinceSeq;
  }

  start(): void {
    this.stopped = false;
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  get position(): number {
    return this.lastSeq;
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      try {
        await this.readOnce();
      } catch {
        // dropped connection; fall through to the retry delay
      }
      this.handlers.onStatusChange?.(false);
      if (this.stopped) return;
      await new Promise((resolve) => setTimeout(resolve, RECONNECT_DELAY_MS));
    }
  }

  private async readOnce(): Promise<void> {
    this.controller = new AbortController();
    const resp = await fetch(`${this.base}/events?since=${this.lastSeq}`, {
      signal: this.controller.signal,
    });
    if (!resp.ok || resp.body === null) {
      throw new GatewayError(resp.status, "http", `event stream refused (${resp.status})`);
    }
    this.handlers.onStatusChange?.(true);

    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffered = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffered += decoder.decode(value, { stream: true });
      let cut: number;
      while ((cut = buffered.indexOf("\n\n")) >= 0) {
        this.dispatchFrame(buffered.slice(0, cut));
        buffered = buffered.slice(cut + 2);
      }
    }
  }

  private dispatchFrame(frame: string): void {
    let id: number | null = null;
    let data = "";
    for (const line of frame.split("\n")) {
      if (line.startsWith("id: ")) id = Number(line.slice(4));
      else if (line.startsWith("data: ")) data = line.slice(6);
      // lines starting with ":" are heartbeats; ignore
    }
    if (data === "") return;
    const doc = JSON.parse(data) as EventDoc;
    if (id === null) {
      // the one id-less frame is the resync marker
      if (doc.kind === "resync") this.handlers.onResync();
      return;
    }
    this.lastSeq = id;
    this.handlers.onEvent(id, doc);
  }
}
