// Session controller: hydrates, follows the stream, submits player actions.
// Mirrors the server's single-writer rule client-side: one in-flight
// mutation, input disabled until the turn's own frame arrives.

import { ApiError, GameClient, WebSocketLike } from "./client.js";
import type { StreamFrame } from "./frames.js";
import { ClientSessionView, FrameSequencer, applyFrame, hydrate } from "./state.js";

export interface AppState {
  view: ClientSessionView | null;
  inputDisabled: boolean;
  banner: string | null; // connection problems
  inlineError: string | null; // rejected submissions
  weaponErrors: Record<string, string>; // rendered on the weapon card
  connected: boolean;
}

type Listener = (state: AppState) => void;

const RECONNECT_BASE_MS = 250;
const RECONNECT_CAP_MS = 8000;

export class GameApp {
  state: AppState = {
    view: null,
    inputDisabled: false,
    banner: null,
    inlineError: null,
    weaponErrors: {},
    connected: false,
  };

  private sequencer = new FrameSequencer(null);
  private listeners: Listener[] = [];
  private socket: WebSocketLike | null = null;
  private sessionId: string | null = null;
  private reconnectAttempts = 0;
  private stopped = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private hydrating = true;
  private buffered: StreamFrame[] = [];

  constructor(
    private client: GameClient,
    private log: (message: string) => void = console.warn,
  ) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Create a session (or attach to an existing one) and follow its stream.

   *  The stream opens before the view hydrates and frames buffer while
   *  hydration is in flight, so no frame can be lost between the two: stale
   *  ones are dropped by seq, newer ones apply on top of the fresh view.
   */
  async start(sessionId?: string): Promise<void> {
    this.sessionId = sessionId ?? (await this.client.createSession()).id;
    await this.openStream();
    await this.adoptLatestView();
    this.emit({ connected: true, banner: null });
  }

  stop(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
    }
    this.socket?.close();
  }

  /** Resolves once the socket is open (or has already failed over to drop). */
  private openStream(): Promise<void> {
    if (this.stopped || this.sessionId === null) {
      return Promise.resolve();
    }
    this.hydrating = true;
    return new Promise((resolve) => {
      let settled = false;
      const settle = () => {
        if (!settled) {
          settled = true;
          resolve();
        }
      };
      this.socket = this.client.openStream(
        this.sessionId!,
        (frame) => this.handleFrame(frame),
        () => {
          settle();
          this.handleDrop();
        },
        settle,
      );
    });
  }

  private async adoptLatestView(): Promise<void> {
    const view = await this.client.getSession(this.sessionId!);
    this.sequencer.rebase(view.transcript_seq);
    this.emit({ view: hydrate(view), inputDisabled: false });
    this.hydrating = false;
    const backlog = [...this.buffered].sort((a, b) => a.seq - b.seq);
    this.buffered = [];
    for (const frame of backlog) {
      this.handleFrame(frame);
    }
  }

  private handleFrame(frame: StreamFrame): void {
    if (this.hydrating || !this.state.view) {
      this.buffered.push(frame);
      return;
    }
    let view = this.state.view;
    let inputDisabled = this.state.inputDisabled;
    for (const ready of this.sequencer.push(frame)) {
      view = applyFrame(view, ready, this.log);
      if (ready.type === "turn_committed" || ready.type === "battle_event") {
        inputDisabled = false; // our mutation's frame has arrived
      }
    }
    this.reconnectAttempts = 0;
    this.emit({ view, inputDisabled });
  }

  private handleDrop(): void {
    if (this.stopped) {
      return;
    }
    const delay = Math.min(RECONNECT_CAP_MS, RECONNECT_BASE_MS * 2 ** this.reconnectAttempts);
    this.reconnectAttempts += 1;
    this.emit({ connected: false, banner: "connection lost, retrying" });
    this.reconnectTimer = setTimeout(() => void this.rehydrate(), delay);
  }

  /** After a drop: resume the stream, then re-read the authoritative view. */
  private async rehydrate(): Promise<void> {
    if (this.stopped || this.sessionId === null) {
      return;
    }
    try {
      await this.openStream();
      await this.adoptLatestView();
      this.emit({ connected: true, banner: null });
    } catch {
      this.handleDrop();
    }
  }

  /** True when a submission went out; false when gated client-side. */
  async submitTurn(text: string): Promise<boolean> {
    const view = this.state.view;
    if (!view || this.state.inputDisabled) {
      return false;
    }
    const trimmed = text.trim();
    if (!trimmed || trimmed.length > view.maxPlayerChars) {
      this.emit({ inlineError: "tell the King something, briefly" });
      return false;
    }
    this.emit({ inputDisabled: true, inlineError: null });
    try {
      await this.client.postTurn(view.sessionId, trimmed);
      return true;
    } catch (error) {
      this.emit({ inputDisabled: false, inlineError: this.describe(error) });
      return false;
    }
  }

  async submitBattleAction(weapon: string): Promise<boolean> {
    const view = this.state.view;
    if (!view || this.state.inputDisabled) {
      return false;
    }
    this.emit({ inputDisabled: true, weaponErrors: {} });
    try {
      await this.client.postBattleAction(view.sessionId, weapon);
      return true;
    } catch (error) {
      this.emit({
        inputDisabled: false,
        weaponErrors: { [weapon]: this.describe(error) },
      });
      return false;
    }
  }

  private describe(error: unknown): string {
    if (error instanceof ApiError) {
      if (error.status === 409) {
        return "the King is still speaking";
      }
      return error.message;
    }
    return "request failed";
  }
}
