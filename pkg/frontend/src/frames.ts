// Wire types for the session service: REST views and stream frames.

export interface KingReply {
  is_valid: boolean;
  comment: string;
  story: string;
}

export interface TurnView {
  index: number;
  player_text: string;
  king: KingReply;
  weapons_gained: string[];
  timestamp: string;
}

export interface SceneView {
  version: number;
  reveal: number;
  url: string;
}

export interface BattleView {
  player_hp: number;
  king_hp: number;
  arsenal: string[];
  used: string[];
  outcome: string | null;
}

export interface SessionView {
  id: string;
  phase: string;
  transcript_seq: number | null;
  turns: TurnView[];
  weapons: { kind: string; turn_index: number }[];
  reveal: number;
  scene: SceneView | null;
  battle: BattleView | null;
  limits: { max_player_chars: number; weapon_threshold: number };
}

export interface TurnCommittedFrame {
  type: "turn_committed";
  seq: number;
  payload: {
    turn: TurnView;
    outcome: { kind: string; weapons_gained: string[]; phase_after: string };
  };
}

export interface SceneRefreshedFrame {
  type: "scene_refreshed";
  seq: number;
  payload: { version: number; reveal: number };
}

export interface PhaseChangedFrame {
  type: "phase_changed";
  seq: number;
  payload: { from: string; to: string };
}

export interface BattleEventFrame {
  type: "battle_event";
  seq: number;
  payload:
    | { event: "started"; player_hp: number; king_hp: number; arsenal: string[] }
    | { event: "turn"; actor: string; detail: string; hp_after: [number, number] };
}

export type StreamFrame =
  | TurnCommittedFrame
  | SceneRefreshedFrame
  | PhaseChangedFrame
  | BattleEventFrame;

export function parseFrame(raw: string): (StreamFrame & { seq: number }) | null {
  try {
    const data = JSON.parse(raw);
    if (data && typeof data.type === "string" && typeof data.seq === "number") {
      return data as StreamFrame;
    }
  } catch {
    // fall through
  }
  return null;
}
