// Thin transport over the session service. fetch and WebSocket are
// injectable so tests can run without a browser.

import type { SessionView, StreamFrame } from "./frames.js";
import { parseFrame } from "./frames.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface WebSocketLike {
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onerror: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  close(): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function jsonOrError(resp: Response): Promise<unknown> {
  let body: Record<string, unknown> = {};
  try {
    body = (await resp.json()) as Record<string, unknown>;
  } catch {
    // non-JSON error body
  }
  if (!resp.ok) {
    throw new ApiError(
      resp.status,
      String(body.error ?? "http_error"),
      String(body.message ?? `request failed with ${resp.status}`),
    );
  }
  return body;
}

export interface GameClient {
  createSession(): Promise<SessionView>;
  getSession(sessionId: string): Promise<SessionView>;
  postTurn(sessionId: string, text: string): Promise<void>;
  postBattleAction(sessionId: string, weapon: string): Promise<void>;
  sceneUrl(path: string | null): string | null;
  openStream(
    sessionId: string,
    onFrame: (frame: StreamFrame) => void,
    onDrop: () => void,
    onOpen: () => void,
  ): WebSocketLike;
}

export class ServerClient implements GameClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
    private wsFactory: WebSocketFactory = (url) => new WebSocket(url) as unknown as WebSocketLike,
  ) {}

  async createSession(): Promise<SessionView> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{}",
    });
    return (await jsonOrError(resp)) as SessionView;
  }

  async getSession(sessionId: string): Promise<SessionView> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`);
    return (await jsonOrError(resp)) as SessionView;
  }

  async postTurn(sessionId: string, text: string): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
    await jsonOrError(resp);
  }

  async postBattleAction(sessionId: string, weapon: string): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/battle/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ weapon }),
    });
    await jsonOrError(resp);
  }

  sceneUrl(path: string | null): string | null {
    return path === null ? null : `${this.baseUrl}${path}`;
  }

  openStream(
    sessionId: string,
    onFrame: (frame: StreamFrame) => void,
    onDrop: () => void,
    onOpen: () => void,
  ): WebSocketLike {
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    const ws = this.wsFactory(`${wsBase}/sessions/${sessionId}/stream`);
    ws.onopen = () => onOpen();
    ws.onmessage = (event) => {
      const frame = parseFrame(String(event.data));
      if (frame) {
        onFrame(frame);
      }
    };
    ws.onclose = () => onDrop();
    ws.onerror = () => {
      // the close handler performs the reconnect
    };
    return ws;
  }
}
