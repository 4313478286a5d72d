// Pure view-model: the client renders server state and computes no game
// rules. Every state change comes from a hydration or a stream frame.

import type { SessionView, StreamFrame } from "./frames.js";

export interface ChatMessage {
  role: "player" | "king";
  text: string;
  comment: string;
  rejected: boolean;
  turnIndex: number;
}

export interface BattlePanel {
  playerHp: number;
  kingHp: number;
  arsenal: string[];
  used: string[];
}

export interface ClientSessionView {
  sessionId: string;
  phase: string;
  messages: ChatMessage[];
  weapons: string[];
  weaponThreshold: number;
  maxPlayerChars: number;
  revealFraction: number;
  sceneVersion: number;
  sceneUrl: string | null;
  battle: BattlePanel | null;
  victory: boolean;
  defeat: boolean;
}

function messagesFromTurn(turn: {
  index: number;
  player_text: string;
  king: { is_valid: boolean; comment: string; story: string };
}): ChatMessage[] {
  // A rejected turn keeps the player's text visible with the comment beneath.
  return [
    {
      role: "player",
      text: turn.player_text,
      comment: "",
      rejected: false,
      turnIndex: turn.index,
    },
    {
      role: "king",
      text: turn.king.is_valid ? turn.king.story : "",
      comment: turn.king.comment,
      rejected: !turn.king.is_valid,
      turnIndex: turn.index,
    },
  ];
}

function sceneUrlFor(sessionId: string, version: number): string {
  return `/sessions/${sessionId}/scene.png?v=${version}`;
}

export function hydrate(view: SessionView): ClientSessionView {
  return {
    sessionId: view.id,
    phase: view.phase,
    messages: view.turns.flatMap(messagesFromTurn),
    weapons: view.weapons.map((w) => w.kind),
    weaponThreshold: view.limits.weapon_threshold,
    maxPlayerChars: view.limits.max_player_chars,
    revealFraction: view.scene ? view.scene.reveal : 0,
    sceneVersion: view.scene ? view.scene.version : 0,
    sceneUrl: view.scene ? sceneUrlFor(view.id, view.scene.version) : null,
    battle: view.battle
      ? {
          playerHp: view.battle.player_hp,
          kingHp: view.battle.king_hp,
          arsenal: view.battle.arsenal,
          used: view.battle.used,
        }
      : null,
    victory: view.phase === "ended_won",
    defeat: view.phase === "ended_lost",
  };
}

function withPhase(view: ClientSessionView, phase: string): ClientSessionView {
  return {
    ...view,
    phase,
    victory: phase === "ended_won",
    defeat: phase === "ended_lost",
  };
}

/** One renderer per frame type; unknown types are logged and ignored. */
export function applyFrame(
  view: ClientSessionView,
  frame: StreamFrame,
  log: (message: string) => void = console.warn,
): ClientSessionView {
  switch (frame.type) {
    case "turn_committed": {
      const { turn, outcome } = frame.payload;
      return withPhase(
        {
          ...view,
          messages: [...view.messages, ...messagesFromTurn(turn)],
          weapons: [...view.weapons, ...outcome.weapons_gained],
        },
        outcome.phase_after,
      );
    }
    case "scene_refreshed": {
      const { version, reveal } = frame.payload;
      return {
        ...view,
        sceneVersion: version,
        revealFraction: reveal,
        sceneUrl: sceneUrlFor(view.sessionId, version),
      };
    }
    case "phase_changed":
      return withPhase(view, frame.payload.to);
    case "battle_event": {
      const payload = frame.payload;
      if (payload.event === "started") {
        return {
          ...view,
          battle: {
            playerHp: payload.player_hp,
            kingHp: payload.king_hp,
            arsenal: payload.arsenal,
            used: [],
          },
        };
      }
      if (payload.event === "turn" && view.battle) {
        const [playerHp, kingHp] = payload.hp_after;
        const used =
          payload.actor === "player" && !view.battle.used.includes(payload.detail)
            ? [...view.battle.used, payload.detail]
            : view.battle.used;
        return { ...view, battle: { ...view.battle, playerHp, kingHp, used } };
      }
      return view;
    }
    default:
      log(`ignoring unknown frame type: ${(frame as { type?: string }).type}`);
      return view;
  }
}

/**
 * Applies frames in ascending seq order. Frames at or below the hydration
 * seq are stale and dropped; bursts arriving out of order are sorted before
 * they apply.
 */
export class FrameSequencer {
  private lastApplied: number;
  private pending: StreamFrame[] = [];

  constructor(hydratedSeq: number | null) {
    this.lastApplied = hydratedSeq ?? -1;
  }

  push(frame: StreamFrame): StreamFrame[] {
    if (frame.seq <= this.lastApplied) {
      return [];
    }
    this.pending.push(frame);
    this.pending.sort((a, b) => a.seq - b.seq);
    const ready = this.pending;
    this.pending = [];
    this.lastApplied = ready[ready.length - 1].seq;
    return ready;
  }

  rebase(hydratedSeq: number | null): void {
    this.lastApplied = Math.max(this.lastApplied, hydratedSeq ?? -1);
    this.pending = [];
  }
}
