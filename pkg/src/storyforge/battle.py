"""Turn-based battle with a structural win guarantee: the King's hit points
equal the summed damage of the collected arsenal, so using every weapon always
lands the killing blow. The config validator keeps the player alive through
the counterattacks in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Mapping

from .errors import (
    BattleOverError,
    InvalidConfigError,
    WeaponAlreadyUsedError,
    WeaponNotOwnedError,
    WrongPhaseError,
)
from .session import Phase, WeaponKind

if TYPE_CHECKING:
    from .session import GameSession


class Actor(str, Enum):
    PLAYER = "player"
    KING = "king"


class BattleOutcome(str, Enum):
    WON = "won"
    LOST = "lost"


def _default_damage() -> dict[WeaponKind, int]:
    return {kind: 30 for kind in WeaponKind}


@dataclass(frozen=True)
class BattleConfig:
    player_hp0: int = 100
    king_attack: int = 10
    weapon_damage: Mapping[WeaponKind, int] = field(default_factory=_default_damage)

    def validate(self) -> None:
        if self.player_hp0 < 1:
            raise InvalidConfigError("player_hp0 must be positive")
        if self.king_attack < 1:
            raise InvalidConfigError("king_attack must be positive")
        # Zero damage is legal (a weapon may contribute nothing); negatives are not.
        for kind, damage in self.weapon_damage.items():
            if damage < 0:
                raise InvalidConfigError(f"weapon_damage[{kind.value}] must be >= 0")


@dataclass(frozen=True)
class BattleEvent:
    actor: Actor
    detail: str  # weapon kind for the player, damage dealt for the King
    hp_after: tuple[int, int]  # (player_hp, king_hp)


@dataclass(frozen=True)
class BattleState:
    player_hp: int
    king_hp: int
    arsenal: tuple[WeaponKind, ...]
    used: frozenset[WeaponKind]
    turn_log: tuple[BattleEvent, ...]
    outcome: BattleOutcome | None
    config: BattleConfig


def _decide_outcome(player_hp: int, king_hp: int) -> BattleOutcome | None:
    if king_hp == 0:
        return BattleOutcome.WON
    if player_hp == 0:
        return BattleOutcome.LOST
    return None


def start_battle(session: "GameSession", config: BattleConfig | None = None) -> BattleState:
    """Open combat: King hit points are exactly the arsenal's total damage."""
    if session.phase != Phase.BATTLE:
        raise WrongPhaseError(f"cannot start battle during phase {session.phase.value}")
    config = config or BattleConfig()
    config.validate()
    kinds = tuple(w.kind for w in session.weapons)
    missing = [k.value for k in kinds if k not in config.weapon_damage]
    if missing:
        raise InvalidConfigError(f"no weapon_damage configured for: {', '.join(missing)}")
    # The guarantee needs the player to survive a counterattack per weapon but one.
    worst_case = config.king_attack * (len(kinds) - 1)
    if config.player_hp0 <= worst_case:
        raise InvalidConfigError(
            f"player_hp0 ({config.player_hp0}) must exceed king_attack x (weapons - 1) "
            f"({worst_case}); the all-weapons win would not be guaranteed"
        )
    king_hp = sum(config.weapon_damage[k] for k in kinds)
    return BattleState(
        player_hp=config.player_hp0,
        king_hp=king_hp,
        arsenal=kinds,
        used=frozenset(),
        turn_log=(),
        outcome=_decide_outcome(config.player_hp0, king_hp),
        config=config,
    )


def battle_turn(state: BattleState, kind: WeaponKind) -> BattleState:
    """Player strikes with one unused weapon; the King counters if still alive."""
    if state.outcome is not None:
        raise BattleOverError(f"battle already {state.outcome.value}")
    if kind not in state.arsenal:
        raise WeaponNotOwnedError(f"{kind.value} is not in the arsenal")
    if kind in state.used:
        raise WeaponAlreadyUsedError(f"{kind.value} was already used")

    king_hp = max(0, state.king_hp - state.config.weapon_damage[kind])
    player_hp = state.player_hp
    events = [BattleEvent(Actor.PLAYER, kind.value, (player_hp, king_hp))]
    if king_hp > 0:
        player_hp = max(0, player_hp - state.config.king_attack)
        events.append(BattleEvent(Actor.KING, str(state.config.king_attack), (player_hp, king_hp)))
    return replace(
        state,
        player_hp=player_hp,
        king_hp=king_hp,
        used=state.used | {kind},
        turn_log=state.turn_log + tuple(events),
        outcome=_decide_outcome(player_hp, king_hp),
    )
