"""Game state machine: sessions, turns, weapon detection and phase transitions.

Everything here is functional: operations return new session values and never
mutate their arguments, which is what makes turn commits atomic and replays
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable

from .errors import (
    EmptyInputError,
    InputTooLongError,
    InvalidConfigError,
    WrongPhaseError,
)
from .king import ChatProvider, KingResponse, assemble_messages, complete_with_repair

if TYPE_CHECKING:
    from .battle import BattleState
    from .imagery import SceneArtifact

SEED_MASK = (1 << 64) - 1


class Phase(str, Enum):
    STORYTELLING = "storytelling"
    BATTLE = "battle"
    ENDED_WON = "ended_won"
    ENDED_LOST = "ended_lost"

    @property
    def ended(self) -> bool:
        return self in (Phase.ENDED_WON, Phase.ENDED_LOST)


class WeaponKind(str, Enum):
    SWORD = "sword"
    SHIELD = "shield"
    DAGGER = "dagger"
    KNIFE = "knife"
    BLADE = "blade"
    WAND = "wand"


# Singular and plural surface forms, lowercase. The lexicon is closed: these
# twelve strings are the only ones that materialize weapons.
SURFACE_FORMS: dict[WeaponKind, tuple[str, str]] = {
    WeaponKind.SWORD: ("sword", "swords"),
    WeaponKind.SHIELD: ("shield", "shields"),
    WeaponKind.DAGGER: ("dagger", "daggers"),
    WeaponKind.KNIFE: ("knife", "knives"),
    WeaponKind.BLADE: ("blade", "blades"),
    WeaponKind.WAND: ("wand", "wands"),
}

DEFAULT_STYLE_PROMPT = (
    "purple, bright, Arabian night, 16bitscene, game art, Persian-style, "
    "Arabian style, retro, masterpiece, mid shot in a scene with ground, "
    "Islamic style, Islamic art"
)


@dataclass(frozen=True)
class SessionConfig:
    weapon_threshold: int = 4
    history_window: int = 15
    max_player_chars: int = 280
    anachronism_blocklist: tuple[str, ...] = ()
    style_prompt: str = DEFAULT_STYLE_PROMPT
    image_size: tuple[int, int] = (512, 512)
    horizon_ratio: float = 0.6
    model: str = "gpt-4"

    def validate(self) -> None:
        if not 1 <= self.weapon_threshold <= len(WeaponKind):
            raise InvalidConfigError(
                f"weapon_threshold must be in 1..{len(WeaponKind)}, got {self.weapon_threshold}"
            )
        if self.history_window < 1:
            raise InvalidConfigError("history_window must be >= 1")
        if self.max_player_chars < 1:
            raise InvalidConfigError("max_player_chars must be >= 1")
        if not 0.0 <= self.horizon_ratio <= 1.0:
            raise InvalidConfigError("horizon_ratio must be in [0, 1]")
        width, height = self.image_size
        if width < 1 or height < 1:
            raise InvalidConfigError("image_size must be at least 1x1")
        for term in self.anachronism_blocklist:
            if not term or term != term.lower():
                raise InvalidConfigError(f"blocklist terms must be lowercase: {term!r}")


@dataclass(frozen=True)
class Weapon:
    kind: WeaponKind
    turn_index: int  # provenance: the turn whose story materialized it


@dataclass(frozen=True)
class StoryTurn:
    index: int
    player_text: str
    king: KingResponse
    king_raw: str  # verbatim provider reply, replayed as assistant history
    weapons_gained: tuple[WeaponKind, ...]
    timestamp: datetime


class OutcomeKind(str, Enum):
    CONTINUED = "continued"
    REJECTED = "rejected"
    ERROR = "error"


@dataclass(frozen=True)
class TurnOutcome:
    kind: OutcomeKind
    king: KingResponse | None
    weapons_gained: tuple[WeaponKind, ...]
    phase_after: Phase
    scene_version: int | None  # milestone scheduled by this turn, if any


@dataclass(frozen=True)
class GameSession:
    id: str
    phase: Phase
    turns: tuple[StoryTurn, ...]
    weapons: tuple[Weapon, ...]
    scene: "SceneArtifact | None"
    rng_seed: int
    config: SessionConfig
    battle: "BattleState | None" = None

    @property
    def weapon_kinds(self) -> set[WeaponKind]:
        return {w.kind for w in self.weapons}


def new_session(config: SessionConfig, seed: int, session_id: str | None = None) -> GameSession:
    """Create a fresh storytelling-phase session."""
    config.validate()
    seed &= SEED_MASK
    return GameSession(
        id=session_id or f"sess-{seed:016x}",
        phase=Phase.STORYTELLING,
        turns=(),
        weapons=(),
        scene=None,
        rng_seed=seed,
        config=config,
    )


def _find_whole(text_lower: str, needle: str, start: int = 0) -> int:
    """First occurrence of needle with no letter touching either end, else -1."""
    i = text_lower.find(needle, start)
    while i != -1:
        end = i + len(needle)
        before_ok = i == 0 or not text_lower[i - 1].isalpha()
        after_ok = end == len(text_lower) or not text_lower[end].isalpha()
        if before_ok and after_ok:
            return i
        i = text_lower.find(needle, i + 1)
    return -1


def detect_weapons(
    story_text: str, already_collected: Iterable[WeaponKind] = ()
) -> list[WeaponKind]:
    """Weapon kinds whose surface form appears as a whole word in the story.

    Case-insensitive, ordered by first occurrence, deduplicated, excluding
    kinds already collected. A letter adjacent to the form breaks the match
    ("swordsman" yields nothing).
    """
    lower = story_text.lower()
    collected = set(already_collected)
    hits: list[tuple[int, WeaponKind]] = []
    for kind, forms in SURFACE_FORMS.items():
        if kind in collected:
            continue
        positions = [p for form in forms if (p := _find_whole(lower, form)) != -1]
        if positions:
            hits.append((min(positions), kind))
    hits.sort(key=lambda item: item[0])
    return [kind for _, kind in hits]


def anachronism_guard(story_text: str, blocklist: Iterable[str]) -> str | None:
    """Return the first blocklisted term appearing as a whole phrase, else None.

    Matching is case-insensitive with word boundaries at the phrase ends, so
    "machine gun" does not fire on "machinery" or "machine gunner".
    """
    lower = story_text.lower()
    for term in blocklist:
        if term and _find_whole(lower, term) != -1:
            return term
    return None


def check_phase_transition(session: GameSession) -> Phase:
    """Battle once the threshold is met during storytelling; otherwise unchanged."""
    if (
        session.phase == Phase.STORYTELLING
        and len(session.weapons) >= session.config.weapon_threshold
    ):
        return Phase.BATTLE
    return session.phase


def reveal_fraction(session: GameSession) -> float:
    """Share of the scene revealed: weapons collected over the threshold, capped at 1."""
    return min(1.0, len(session.weapons) / session.config.weapon_threshold)


def advance_story(
    session: GameSession,
    player_text: str,
    provider: ChatProvider,
    max_retries: int = 2,
    clock: Callable[[], datetime] | None = None,
) -> tuple[GameSession, TurnOutcome]:
    """Run one storytelling turn end-to-end and return the committed session.

    The input session is never mutated; on any raised error the caller still
    holds the untouched pre-call value. Weapons are detected in the King's
    story only, and the phase flips to battle once the threshold is reached.
    """
    if session.phase != Phase.STORYTELLING:
        raise WrongPhaseError(f"cannot narrate during phase {session.phase.value}")
    text = player_text.strip()
    if not text:
        raise EmptyInputError("player text is empty")
    if len(text) > session.config.max_player_chars:
        raise InputTooLongError(
            f"player text is {len(text)} chars, cap is {session.config.max_player_chars}"
        )

    bundle = assemble_messages(session, text)
    blocklist = session.config.anachronism_blocklist
    guard = (lambda story: anachronism_guard(story, blocklist)) if blocklist else None
    resp, raw, _attempts = complete_with_repair(
        provider, bundle, max_retries=max_retries, story_guard=guard
    )

    when = clock() if clock is not None else datetime.now(timezone.utc)
    if resp.is_valid:
        gained = tuple(detect_weapons(resp.story, session.weapon_kinds))
        kind = OutcomeKind.CONTINUED
    else:
        gained = ()
        kind = OutcomeKind.REJECTED

    turn = StoryTurn(
        index=len(session.turns),
        player_text=text,
        king=resp,
        king_raw=raw,
        weapons_gained=gained,
        timestamp=when,
    )
    weapons = session.weapons + tuple(Weapon(k, turn.index) for k in gained)
    updated = replace(session, turns=session.turns + (turn,), weapons=weapons)
    updated = replace(updated, phase=check_phase_transition(updated))

    scene_version = None
    if gained:
        scene_version = (session.scene.version if session.scene else 0) + 1
    outcome = TurnOutcome(
        kind=kind,
        king=resp,
        weapons_gained=gained,
        phase_after=updated.phase,
        scene_version=scene_version,
    )
    return updated, outcome
