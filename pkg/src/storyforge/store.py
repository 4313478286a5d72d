"""Session persistence: one directory per session holding a line-delimited
JSON transcript, a snapshot document and the scene PNGs. Replay reconstructs
a session from its transcript alone, substituting recorded provider replies
for live calls.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path

import numpy as np

from . import raster
from .battle import Actor, BattleConfig, BattleEvent, BattleOutcome, BattleState, battle_turn, start_battle
from .errors import CorruptTranscriptError, SequenceGapError, StorageError
from .imagery import SceneArtifact
from .king import ChatProvider, KingResponse
from .providers import ScriptedChatProvider
from .session import (
    GameSession,
    Phase,
    SessionConfig,
    StoryTurn,
    TurnOutcome,
    Weapon,
    WeaponKind,
    advance_story,
    new_session,
)


class RecordKind(str, Enum):
    SESSION_CREATED = "session_created"
    PLAYER_INPUT = "player_input"
    PROVIDER_EXCHANGE = "provider_exchange"
    TURN_COMMITTED = "turn_committed"
    SCENE_REFRESHED = "scene_refreshed"
    BATTLE_EVENT = "battle_event"
    PHASE_CHANGED = "phase_changed"


@dataclass(frozen=True)
class TranscriptRecord:
    seq: int
    kind: RecordKind
    payload: dict
    ts: str  # ISO-8601 UTC


def _canonical(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def config_to_dict(config: SessionConfig) -> dict:
    return {
        "weapon_threshold": config.weapon_threshold,
        "history_window": config.history_window,
        "max_player_chars": config.max_player_chars,
        "anachronism_blocklist": list(config.anachronism_blocklist),
        "style_prompt": config.style_prompt,
        "image_size": list(config.image_size),
        "horizon_ratio": config.horizon_ratio,
        "model": config.model,
    }


def config_from_dict(data: dict) -> SessionConfig:
    return SessionConfig(
        weapon_threshold=data["weapon_threshold"],
        history_window=data["history_window"],
        max_player_chars=data["max_player_chars"],
        anachronism_blocklist=tuple(data["anachronism_blocklist"]),
        style_prompt=data["style_prompt"],
        image_size=tuple(data["image_size"]),
        horizon_ratio=data["horizon_ratio"],
        model=data["model"],
    )


def king_to_dict(resp: KingResponse) -> dict:
    return {"is_valid": resp.is_valid, "comment": resp.comment, "story": resp.story}


def king_from_dict(data: dict) -> KingResponse:
    return KingResponse(data["is_valid"], data["comment"], data["story"])


def turn_to_dict(turn: StoryTurn) -> dict:
    return {
        "index": turn.index,
        "player_text": turn.player_text,
        "king": king_to_dict(turn.king),
        "king_raw": turn.king_raw,
        "weapons_gained": [k.value for k in turn.weapons_gained],
        "timestamp": turn.timestamp.isoformat(),
    }


def turn_from_dict(data: dict) -> StoryTurn:
    return StoryTurn(
        index=data["index"],
        player_text=data["player_text"],
        king=king_from_dict(data["king"]),
        king_raw=data["king_raw"],
        weapons_gained=tuple(WeaponKind(k) for k in data["weapons_gained"]),
        timestamp=datetime.fromisoformat(data["timestamp"]),
    )


def outcome_to_dict(outcome: TurnOutcome) -> dict:
    return {
        "kind": outcome.kind.value,
        "king": king_to_dict(outcome.king) if outcome.king else None,
        "weapons_gained": [k.value for k in outcome.weapons_gained],
        "phase_after": outcome.phase_after.value,
        "scene_version": outcome.scene_version,
    }


def _raster_to_dict(image: np.ndarray) -> dict:
    # PNG keeps transcripts small; encoding is a pure function of the pixels,
    # so snapshot bytes stay deterministic.
    return {"png": base64.b64encode(raster.png_bytes(image)).decode("ascii")}


def _raster_from_dict(data: dict) -> np.ndarray:
    return raster.png_to_array(base64.b64decode(data["png"]))


def artifact_to_dict(artifact: SceneArtifact) -> dict:
    return {
        "version": artifact.version,
        "reveal": artifact.reveal,
        "raw": _raster_to_dict(artifact.raw),
        "pixelized": _raster_to_dict(artifact.pixelized),
    }


def artifact_from_dict(data: dict) -> SceneArtifact:
    return SceneArtifact(
        version=data["version"],
        reveal=data["reveal"],
        raw=_raster_from_dict(data["raw"]),
        pixelized=_raster_from_dict(data["pixelized"]),
    )


def battle_config_to_dict(config: BattleConfig) -> dict:
    return {
        "player_hp0": config.player_hp0,
        "king_attack": config.king_attack,
        "weapon_damage": {k.value: v for k, v in config.weapon_damage.items()},
    }


def battle_config_from_dict(data: dict) -> BattleConfig:
    return BattleConfig(
        player_hp0=data["player_hp0"],
        king_attack=data["king_attack"],
        weapon_damage={WeaponKind(k): v for k, v in data["weapon_damage"].items()},
    )


def battle_event_to_dict(event: BattleEvent) -> dict:
    return {"actor": event.actor.value, "detail": event.detail, "hp_after": list(event.hp_after)}


def battle_event_from_dict(data: dict) -> BattleEvent:
    return BattleEvent(Actor(data["actor"]), data["detail"], tuple(data["hp_after"]))


def battle_state_to_dict(state: BattleState) -> dict:
    return {
        "player_hp": state.player_hp,
        "king_hp": state.king_hp,
        "arsenal": [k.value for k in state.arsenal],
        "used": sorted(k.value for k in state.used),
        "turn_log": [battle_event_to_dict(e) for e in state.turn_log],
        "outcome": state.outcome.value if state.outcome else None,
        "config": battle_config_to_dict(state.config),
    }


def battle_state_from_dict(data: dict) -> BattleState:
    return BattleState(
        player_hp=data["player_hp"],
        king_hp=data["king_hp"],
        arsenal=tuple(WeaponKind(k) for k in data["arsenal"]),
        used=frozenset(WeaponKind(k) for k in data["used"]),
        turn_log=tuple(battle_event_from_dict(e) for e in data["turn_log"]),
        outcome=BattleOutcome(data["outcome"]) if data["outcome"] else None,
        config=battle_config_from_dict(data["config"]),
    )


def session_to_dict(session: GameSession) -> dict:
    return {
        "id": session.id,
        "phase": session.phase.value,
        "turns": [turn_to_dict(t) for t in session.turns],
        "weapons": [{"kind": w.kind.value, "turn_index": w.turn_index} for w in session.weapons],
        "scene": artifact_to_dict(session.scene) if session.scene else None,
        "rng_seed": session.rng_seed,
        "config": config_to_dict(session.config),
        "battle": battle_state_to_dict(session.battle) if session.battle else None,
    }


def session_from_dict(data: dict) -> GameSession:
    return GameSession(
        id=data["id"],
        phase=Phase(data["phase"]),
        turns=tuple(turn_from_dict(t) for t in data["turns"]),
        weapons=tuple(Weapon(WeaponKind(w["kind"]), w["turn_index"]) for w in data["weapons"]),
        scene=artifact_from_dict(data["scene"]) if data["scene"] else None,
        rng_seed=data["rng_seed"],
        config=config_from_dict(data["config"]),
        battle=battle_state_from_dict(data["battle"]) if data["battle"] else None,
    )


def snapshot_bytes(session: GameSession, transcript_seq: int) -> bytes:
    """Canonical snapshot document; byte-stable for determinism checks."""
    doc = {"session": session_to_dict(session), "transcript_seq": transcript_seq}
    return (_canonical(doc) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

class SessionStore:
    """Per-session directory layout under one root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._last_seq: dict[str, int] = {}

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def transcript_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "transcript.jsonl"

    def snapshot_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "snapshot.json"

    def scene_path(self, session_id: str, version: int) -> Path:
        return self.session_dir(session_id) / f"scene_v{version}.png"

    def create(self, session_id: str) -> None:
        try:
            self.session_dir(session_id).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create session directory: {exc}") from exc

    def list_sessions(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if (p / "transcript.jsonl").exists())

    def last_seq(self, session_id: str) -> int:
        """Highest persisted seq, or -1. Scans the file once, then caches."""
        if session_id in self._last_seq:
            return self._last_seq[session_id]
        path = self.transcript_path(session_id)
        seq = -1
        if path.exists():
            with path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        seq = json.loads(line)["seq"]
        self._last_seq[session_id] = seq
        return seq

    def append(self, session_id: str, record: TranscriptRecord) -> int:
        """Durably append one record; seq must directly follow the last one."""
        expected = self.last_seq(session_id) + 1
        if record.seq != expected:
            raise SequenceGapError(
                f"record seq {record.seq} does not follow last persisted seq {expected - 1}"
            )
        line = _canonical(
            {"seq": record.seq, "kind": record.kind.value, "payload": record.payload, "ts": record.ts}
        )
        try:
            with self.transcript_path(session_id).open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"transcript append failed: {exc}") from exc
        self._last_seq[session_id] = record.seq
        return record.seq

    def read_records(self, session_id: str) -> list[TranscriptRecord]:
        """Load and frame-check the transcript; contiguous seqs from 0 required."""
        path = self.transcript_path(session_id)
        if not path.exists():
            raise CorruptTranscriptError("transcript missing", seq=0)
        records: list[TranscriptRecord] = []
        with path.open("r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    data = json.loads(line)
                    record = TranscriptRecord(
                        seq=data["seq"],
                        kind=RecordKind(data["kind"]),
                        payload=data["payload"],
                        ts=data["ts"],
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise CorruptTranscriptError(f"bad record at line {i}: {exc}", seq=i) from exc
                if record.seq != len(records):
                    raise CorruptTranscriptError(
                        f"sequence gap: expected {len(records)}, found {record.seq}", seq=record.seq
                    )
                records.append(record)
        return records

    def write_snapshot(self, session: GameSession, transcript_seq: int) -> None:
        try:
            self.snapshot_path(session.id).write_bytes(snapshot_bytes(session, transcript_seq))
        except OSError as exc:
            raise StorageError(f"snapshot write failed: {exc}") from exc

    def read_snapshot(self, session_id: str) -> tuple[GameSession, int]:
        path = self.snapshot_path(session_id)
        if not path.exists():
            raise StorageError(f"no snapshot for session {session_id}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        return session_from_dict(doc["session"]), doc["transcript_seq"]

    def write_scene_png(self, session_id: str, artifact: SceneArtifact) -> Path:
        path = self.scene_path(session_id, artifact.version)
        try:
            path.write_bytes(raster.png_bytes(artifact.pixelized))
        except OSError as exc:
            raise StorageError(f"scene write failed: {exc}") from exc
        return path


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def _king_exchange_replies(records: list[TranscriptRecord]) -> list[str]:
    return [
        r.payload["raw_reply"]
        for r in records
        if r.kind == RecordKind.PROVIDER_EXCHANGE and r.payload.get("purpose") == "king"
    ]


def replay(
    store: SessionStore, session_id: str, provider: ChatProvider | None = None
) -> GameSession:
    """Rebuild a session by re-running its recorded inputs.

    Recorded provider replies substitute for live calls (pass a provider only
    to override that); scene artifacts come from their refresh records. Raises
    CorruptTranscriptError when the transcript cannot reproduce the session.
    """
    records = store.read_records(session_id)
    if not records or records[0].kind != RecordKind.SESSION_CREATED:
        raise CorruptTranscriptError("transcript does not start with session_created", seq=0)

    created = records[0].payload
    session = new_session(
        config_from_dict(created["config"]), created["seed"], session_id=created["session_id"]
    )
    substitute = provider or ScriptedChatProvider(_king_exchange_replies(records))

    for record in records[1:]:
        payload = record.payload
        try:
            if record.kind == RecordKind.PLAYER_INPUT:
                when = datetime.fromisoformat(payload["timestamp"])
                session, _ = advance_story(
                    session, payload["text"], substitute, clock=lambda w=when: w
                )
            elif record.kind == RecordKind.TURN_COMMITTED:
                replayed = turn_to_dict(session.turns[-1])
                if replayed != payload["turn"]:
                    raise CorruptTranscriptError(
                        f"replayed turn diverges from record at seq {record.seq}", seq=record.seq
                    )
            elif record.kind == RecordKind.SCENE_REFRESHED:
                session = replace(session, scene=artifact_from_dict(payload["artifact"]))
            elif record.kind == RecordKind.BATTLE_EVENT:
                if payload["event"] == "started":
                    session = replace(
                        session, battle=start_battle(session, battle_config_from_dict(payload["config"]))
                    )
                elif payload["actor"] == Actor.PLAYER.value:
                    battle = battle_turn(session.battle, WeaponKind(payload["detail"]))
                    session = replace(session, battle=battle)
                    if battle.outcome is not None:
                        ended = Phase.ENDED_WON if battle.outcome == BattleOutcome.WON else Phase.ENDED_LOST
                        session = replace(session, phase=ended)
                else:  # King counterattack: already applied by battle_turn; verify
                    if list(session.battle.turn_log[-1].hp_after) != payload["hp_after"]:
                        raise CorruptTranscriptError(
                            f"battle hp diverges at seq {record.seq}", seq=record.seq
                        )
            elif record.kind == RecordKind.PHASE_CHANGED:
                if session.phase.value != payload["to"]:
                    raise CorruptTranscriptError(
                        f"phase diverges at seq {record.seq}: {session.phase.value} != {payload['to']}",
                        seq=record.seq,
                    )
            # provider_exchange records are consumed via the substitute provider
        except CorruptTranscriptError:
            raise
        except Exception as exc:
            raise CorruptTranscriptError(
                f"replay failed at seq {record.seq}: {exc}", seq=record.seq
            ) from exc
    return session
