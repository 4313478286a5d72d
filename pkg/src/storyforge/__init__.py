"""Storytelling game engine: a player steers an LLM narrator toward weapon
words, mentioned weapons materialize, a generated scene gradually invades the
play view, and a turn-based battle ends the session. All generative models
sit behind pluggable clients with deterministic offline stand-ins.
"""

from .battle import BattleConfig, BattleEvent, BattleOutcome, BattleState, battle_turn, start_battle
from .errors import StoryforgeError
from .imagery import (
    ImagePrompt,
    SceneArtifact,
    SceneSummary,
    SegmentationHint,
    StubImageService,
    build_image_prompt,
    make_segmentation_hint,
    refresh_scene,
    summarize_scene,
)
from .king import (
    ChatMessage,
    KingResponse,
    LimitAudit,
    PromptBundle,
    audit_limits,
    assemble_messages,
    build_system_prompt,
    complete_with_repair,
    parse_king_response,
)
from .providers import HttpChatProvider, ScriptedChatProvider
from .raster import composite_reveal, pixelize
from .session import (
    GameSession,
    Phase,
    SessionConfig,
    StoryTurn,
    TurnOutcome,
    Weapon,
    WeaponKind,
    advance_story,
    anachronism_guard,
    check_phase_transition,
    detect_weapons,
    new_session,
    reveal_fraction,
)
from .store import SessionStore, replay
from .runtime import GameRunner

__version__ = "0.1.0"
