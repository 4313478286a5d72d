"""Turn orchestration over the store: records every exchange, commits turns
durably before acknowledging them, triggers scene refreshes on weapon
milestones and drives the battle once the threshold is reached.
"""

from __future__ import annotations

import hashlib
import logging
import secrets
import threading
import uuid
from dataclasses import replace
from datetime import datetime, timezone
from typing import Callable

from . import store as storemod
from .battle import BattleConfig, BattleOutcome, battle_turn, start_battle
from .errors import BattleOverError, WrongPhaseError
from .imagery import ImageService, refresh_scene
from .king import ChatProvider, PromptBundle, audit_limits
from .session import (
    GameSession,
    Phase,
    SessionConfig,
    TurnOutcome,
    WeaponKind,
    advance_story,
    new_session,
)
from .store import RecordKind, SessionStore, TranscriptRecord

log = logging.getLogger(__name__)

Clock = Callable[[], datetime]


def utc_clock() -> datetime:
    return datetime.now(timezone.utc)


def counter_clock(start: datetime | None = None) -> Clock:
    """Deterministic clock for simulations: fixed epoch, one second per call."""
    base = start or datetime(2001, 1, 1, tzinfo=timezone.utc)
    state = {"n": 0}

    def tick() -> datetime:
        value = datetime.fromtimestamp(base.timestamp() + state["n"], tz=timezone.utc)
        state["n"] += 1
        return value

    return tick


def bundle_hash(bundle: PromptBundle) -> str:
    """Stable digest of an outgoing prompt, for transcript request hashes."""
    doc = {
        "messages": [[m.role.value, m.content] for m in bundle.messages],
        "params": [bundle.params.temperature, bundle.params.max_tokens, bundle.params.model],
    }
    return hashlib.sha256(repr(doc).encode("utf-8")).hexdigest()


class _RecordingProvider:
    """Buffers every (request hash, raw reply) exchange made through it."""

    def __init__(self, inner: ChatProvider, purpose: str):
        self.inner = inner
        self.purpose = purpose
        self.exchanges: list[dict] = []

    def complete(self, bundle: PromptBundle) -> str:
        raw = self.inner.complete(bundle)
        self.exchanges.append(
            {"purpose": self.purpose, "request_hash": bundle_hash(bundle), "raw_reply": raw}
        )
        return raw


class GameRunner:
    """Owns the live sessions of one store and serializes their mutations.

    Callers (service layer, CLI) are responsible for not running two
    mutations on the same session concurrently; distinct sessions are
    independent.
    """

    def __init__(
        self,
        store: SessionStore,
        provider: ChatProvider,
        image_service: ImageService | None = None,
        clock: Clock = utc_clock,
        battle_config: BattleConfig | None = None,
        on_record: Callable[[str, TranscriptRecord], None] | None = None,
    ):
        self.store = store
        self.provider = provider
        self.image_service = image_service
        self.clock = clock
        self.battle_config = battle_config or BattleConfig()
        self.on_record = on_record
        self.sessions: dict[str, GameSession] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, session_id: str) -> threading.RLock:
        """One re-entrant mutation lock per session: turns, battle actions and
        scene-refresh commits never interleave. Session values are immutable,
        so readers need no lock."""
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.RLock())

    # -- plumbing -----------------------------------------------------------

    def _append(self, session_id: str, kind: RecordKind, payload: dict) -> TranscriptRecord:
        record = TranscriptRecord(
            seq=self.store.last_seq(session_id) + 1,
            kind=kind,
            payload=payload,
            ts=self.clock().isoformat(),
        )
        self.store.append(session_id, record)
        if self.on_record is not None:
            self.on_record(session_id, record)
        return record

    def _commit(self, session: GameSession) -> None:
        self.sessions[session.id] = session
        self.store.write_snapshot(session, self.store.last_seq(session.id))

    # -- lifecycle ----------------------------------------------------------

    def create_session(
        self,
        config: SessionConfig | None = None,
        seed: int | None = None,
        session_id: str | None = None,
    ) -> GameSession:
        config = config or SessionConfig()
        if seed is None:
            seed = secrets.randbits(64)
        if session_id is None:
            session_id = uuid.uuid4().hex
        session = new_session(config, seed, session_id=session_id)
        with self._lock_for(session.id):
            self.store.create(session.id)
            self._append(
                session.id,
                RecordKind.SESSION_CREATED,
                {
                    "session_id": session.id,
                    "seed": session.rng_seed,
                    "config": storemod.config_to_dict(config),
                },
            )
            self._commit(session)
        return session

    def get(self, session_id: str) -> GameSession | None:
        return self.sessions.get(session_id)

    def snapshot(self, session_id: str) -> tuple[GameSession, int]:
        """Session plus its transcript seq, captured atomically: stream
        clients use the seq to drop frames already folded into the view."""
        with self._lock_for(session_id):
            return self.sessions[session_id], self.store.last_seq(session_id)

    # -- storytelling -------------------------------------------------------

    def submit_turn(
        self, session_id: str, text: str, auto_refresh: bool = True
    ) -> tuple[GameSession, TurnOutcome]:
        """One storytelling turn: provider call, commit, optional scene refresh.

        The turn's records (input, exchanges, commit, phase change) are
        persisted before this returns; nothing is written when the turn
        errors, matching the session's atomicity.
        """
        with self._lock_for(session_id):
            session = self.sessions[session_id]
            when = self.clock()
            recorder = _RecordingProvider(self.provider, "king")
            updated, outcome = advance_story(session, text, recorder, clock=lambda: when)

            turn = updated.turns[-1]
            audit = audit_limits(turn.king)
            if audit.comment_over or audit.story_over:
                log.info(
                    "reply over word limits (advisory): comment=%d story=%d",
                    audit.comment_words,
                    audit.story_words,
                )
            self._append(
                session_id,
                RecordKind.PLAYER_INPUT,
                {"turn_index": turn.index, "text": turn.player_text, "timestamp": when.isoformat()},
            )
            for exchange in recorder.exchanges:
                self._append(session_id, RecordKind.PROVIDER_EXCHANGE, exchange)
            self._append(
                session_id,
                RecordKind.TURN_COMMITTED,
                {"turn": storemod.turn_to_dict(turn), "outcome": storemod.outcome_to_dict(outcome)},
            )
            if updated.phase != session.phase:
                self._append(
                    session_id,
                    RecordKind.PHASE_CHANGED,
                    {"from": session.phase.value, "to": updated.phase.value},
                )
            if updated.phase == Phase.BATTLE and updated.battle is None:
                updated = replace(updated, battle=start_battle(updated, self.battle_config))
                self._append(session_id, RecordKind.BATTLE_EVENT, self._started_payload(updated))
            self._commit(updated)

        if auto_refresh and outcome.weapons_gained:
            self.refresh_scene_now(session_id)
            updated = self.sessions[session_id]
        return updated, outcome

    def refresh_scene_now(self, session_id: str) -> GameSession:
        """Run the scene pipeline for the current milestone and persist it.

        Generation runs against an immutable snapshot without blocking other
        mutations; the artifact then attaches to the latest session state
        under the lock (and is dropped if a newer version landed meanwhile).
        Failures leave the prior artifact and the transcript untouched.
        """
        session = self.sessions[session_id]
        if self.image_service is None:
            return session
        recorder = _RecordingProvider(self.provider, "summary")
        artifact = refresh_scene(session, recorder, self.image_service)
        prior_version = session.scene.version if session.scene else 0
        if artifact is None or artifact.version <= prior_version:
            return session  # refresh failed; recorded exchanges are dropped
        with self._lock_for(session_id):
            latest = self.sessions[session_id]
            latest_version = latest.scene.version if latest.scene else 0
            if artifact.version != latest_version + 1:
                return latest  # superseded while generating
            for exchange in recorder.exchanges:
                self._append(session_id, RecordKind.PROVIDER_EXCHANGE, exchange)
            self._append(
                session_id,
                RecordKind.SCENE_REFRESHED,
                {
                    "version": artifact.version,
                    "reveal": artifact.reveal,
                    "artifact": storemod.artifact_to_dict(artifact),
                },
            )
            self.store.write_scene_png(session_id, artifact)
            updated = replace(latest, scene=artifact)
            self._commit(updated)
            return updated


    def _started_payload(self, session: GameSession) -> dict:
        """Battle-started record: config for replay, initial view for clients."""
        battle = session.battle
        return {
            "event": "started",
            "config": storemod.battle_config_to_dict(self.battle_config),
            "player_hp": battle.player_hp,
            "king_hp": battle.king_hp,
            "arsenal": [k.value for k in battle.arsenal],
        }

    # -- battle -------------------------------------------------------------

    def submit_battle_action(self, session_id: str, kind: WeaponKind) -> GameSession:
        """Use one weapon; records the resulting events and any phase change."""
        with self._lock_for(session_id):
            session = self.sessions[session_id]
            if session.phase.ended:
                raise BattleOverError(f"session already {session.phase.value}")
            if session.phase != Phase.BATTLE:
                raise WrongPhaseError(f"no battle during phase {session.phase.value}")
            battle = session.battle
            if battle is None:
                battle = start_battle(session, self.battle_config)
                self._append(
                    session_id,
                    RecordKind.BATTLE_EVENT,
                    self._started_payload(replace(session, battle=battle)),
                )
            after = battle_turn(battle, kind)
            updated = replace(session, battle=after)
            for event in after.turn_log[len(battle.turn_log):]:
                self._append(
                    session_id,
                    RecordKind.BATTLE_EVENT,
                    {"event": "turn", **storemod.battle_event_to_dict(event)},
                )
            if after.outcome is not None:
                ended = Phase.ENDED_WON if after.outcome == BattleOutcome.WON else Phase.ENDED_LOST
                updated = replace(updated, phase=ended)
                self._append(
                    session_id,
                    RecordKind.PHASE_CHANGED,
                    {"from": Phase.BATTLE.value, "to": ended.value},
                )
            self._commit(updated)
            return updated
