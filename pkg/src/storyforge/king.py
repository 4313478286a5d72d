"""Narrator gateway: prompt assembly, provider calls, and structured-reply parsing.

The narrator (the King) must answer every turn with a three-field JSON object:
isValid / comment / story. Real models wrap that object in fences, prose, or
broken syntax, so parsing is tolerant and failures trigger a repair retry.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Protocol

from .errors import ParseFailure, ProviderFailure

if TYPE_CHECKING:
    from .session import GameSession


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        if self.role in (Role.SYSTEM, Role.ASSISTANT) and not self.content:
            raise ValueError(f"{self.role.value} message must not be empty")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.8
    max_tokens: int = 300
    model: str = "gpt-4"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[ChatMessage, ...]
    params: GenerationParams = GenerationParams()

    def __post_init__(self):
        system_positions = [i for i, m in enumerate(self.messages) if m.role == Role.SYSTEM]
        if system_positions != [0]:
            raise ValueError("bundle must contain exactly one system message, first")


@dataclass(frozen=True)
class KingResponse:
    is_valid: bool
    comment: str
    story: str

    def to_json(self) -> str:
        """Canonical serialization of the reply contract."""
        return json.dumps(
            {"isValid": self.is_valid, "comment": self.comment, "story": self.story},
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class LimitAudit:
    comment_words: int
    story_words: int
    comment_over: bool
    story_over: bool


class ChatProvider(Protocol):
    """Anything that can turn a prompt bundle into a raw reply string."""

    def complete(self, bundle: PromptBundle) -> str: ...


# The four system-prompt blocks. Byte-frozen: tests golden-match them and the
# scripted replays depend on the exact prompt text.

KING_PERSONA = (
    "Starting from now, you are the volatile and haughty King Sasanian from 'One "
    "Thousand and One Nights'. He never apologizes, nor does he answer anyone's "
    "questions. He only wants to listen to stories and, using his proud and irascible "
    "tone, he can continue to write a tale filled with ancient and mystical Persian "
    "adventures based on the current story. King Shahryar is a ruthless tyrant, as "
    "well as a poetic storyteller. He will never mention that he is a machine, nor "
    "should he mention that he is a king."
)

STORY_CONTEXT = (
    "When my story is appropriate for swords, shields, daggers, knives, blades, "
    "daggers or wands, King Sasanian will find a way to incorporate at least one of "
    "these elements into the story. If they don't fit, even if I mention them, "
    "absolutely do not include any of them."
)

RESPONSE_FORMAT = """Every time, you must respond in the following JSON format, and absolutely will not use any format other than JSON
{
"isValid": bool, True when the story is valid, false when you suspect the protagonist is disrespectful,
"comment": string, Write here when you want to comment, must be within 30 words! For example, "Ha, you'd better make the story clearer, or... I will order you to be dragged down and beheaded!" "Do you want to live...!?" Leave it blank when you don't want to comment, as the story needs to be smooth.
"story": When isValid is true, post your continued story, must be within 40 words!Empty when isValid is false
}"""

EXAMPLE_EXCHANGE = """User: This is an ancient Persian tale
Assistant:
{
"isValid": true,
"comment":"Ha, you'd better narrate it well! "
"story": "This will be a tale imbued with mystery... "
}"""

REPAIR_INSTRUCTION = (
    "Your previous reply could not be used. Respond again with exactly one JSON "
    'object holding the keys "isValid", "comment" and "story", and no other text.'
)


def build_system_prompt(config) -> str:
    """Concatenate the persona, story-context, format and example blocks, in order."""
    del config  # reserved: the blocks are fixed verbatim
    return "\n\n".join((KING_PERSONA, STORY_CONTEXT, RESPONSE_FORMAT, EXAMPLE_EXCHANGE))


def assemble_messages(session: "GameSession", player_text: str) -> PromptBundle:
    """Build the narrator prompt: system block, windowed history, then the new text.

    Each prior turn replays as a User(player text) / Assistant(raw reply JSON)
    pair; only the last ``history_window`` turns are kept.
    """
    config = session.config
    messages = [ChatMessage(Role.SYSTEM, build_system_prompt(config))]
    for turn in session.turns[-config.history_window:]:
        messages.append(ChatMessage(Role.USER, turn.player_text))
        messages.append(ChatMessage(Role.ASSISTANT, turn.king_raw))
    messages.append(ChatMessage(Role.USER, player_text))
    assert len(messages) <= 2 * config.history_window + 2
    return PromptBundle(tuple(messages), GenerationParams(model=config.model))


_BOOL_WORDS = {"true": True, "false": False}

# Value endings that may legally precede the next key when a comma went missing.
_MISSING_COMMA_RE = re.compile(r'(["\]}0-9]|true|false|null)\s*\n(\s*")')

_JSON_STRING = r'"((?:[^"\\]|\\.)*)"'
_IS_VALID_RE = re.compile(r'"isValid"\s*:\s*(true|false|"true"|"false")', re.IGNORECASE)
_COMMENT_RE = re.compile(r'"comment"\s*:\s*' + _JSON_STRING, re.DOTALL)
_STORY_RE = re.compile(r'"story"\s*:\s*' + _JSON_STRING, re.DOTALL)


def _first_balanced_object(text: str) -> str | None:
    """Return the first top-level {...} span, honoring string literals and escapes."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _coerce_is_valid(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in _BOOL_WORDS:
        return _BOOL_WORDS[value.strip().lower()]
    raise ParseFailure(f"isValid is not coercible to a boolean: {value!r}")


def _coerce_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def _unescape(raw: str) -> str:
    try:
        return json.loads(f'"{raw}"')
    except (json.JSONDecodeError, ValueError):
        return raw


def _extract_fields(candidate: str) -> KingResponse:
    """Last-resort field-wise extraction for objects json.loads refuses."""
    m = _IS_VALID_RE.search(candidate)
    if m is None:
        raise ParseFailure("isValid field not found")
    is_valid = _coerce_is_valid(m.group(1).strip('"'))
    comment_m = _COMMENT_RE.search(candidate)
    story_m = _STORY_RE.search(candidate)
    comment = _unescape(comment_m.group(1)) if comment_m else ""
    story = _unescape(story_m.group(1)) if story_m else ""
    return KingResponse(is_valid, comment, story)


def parse_king_response(raw: str) -> KingResponse:
    """Parse a raw provider reply into a KingResponse.

    Tolerates code fences, surrounding prose, string-typed booleans, missing
    optional fields and missing commas between members. Raises ParseFailure
    when no balanced object exists, isValid cannot be read, or the reply is
    unusable (valid flag set but no story).
    """
    if not isinstance(raw, str):
        raise ParseFailure("reply is not text")
    candidate = _first_balanced_object(raw)
    if candidate is None:
        raise ParseFailure("no balanced JSON object in reply")

    obj = None
    try:
        obj = json.loads(candidate)
    except (json.JSONDecodeError, ValueError, RecursionError):
        repaired = _MISSING_COMMA_RE.sub(r"\1,\n\2", candidate)
        try:
            obj = json.loads(repaired)
        except (json.JSONDecodeError, ValueError, RecursionError):
            obj = None

    if isinstance(obj, dict):
        if "isValid" not in obj:
            raise ParseFailure("isValid field missing")
        resp = KingResponse(
            _coerce_is_valid(obj["isValid"]),
            _coerce_text(obj.get("comment")),
            _coerce_text(obj.get("story")),
        )
    elif obj is not None:
        raise ParseFailure("top-level JSON value is not an object")
    else:
        resp = _extract_fields(candidate)

    if not resp.is_valid:
        # Schema says a rejected turn carries no story; normalize violators.
        return KingResponse(False, resp.comment, "")
    if not resp.story.strip():
        raise ParseFailure("isValid is true but story is empty")
    return resp


def complete_with_repair(
    provider: ChatProvider,
    bundle: PromptBundle,
    max_retries: int = 2,
    story_guard: Callable[[str], str | None] | None = None,
) -> tuple[KingResponse, str, int]:
    """Call the provider until a usable KingResponse arrives.

    On ParseFailure, or when ``story_guard`` flags a term inside a valid story,
    the prior raw reply plus a corrective instruction are appended and the
    provider is asked again. Returns (response, raw, attempts).
    """
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    messages = list(bundle.messages)
    last_error = "no attempt made"
    for attempt in range(1, max_retries + 2):
        raw = provider.complete(PromptBundle(tuple(messages), bundle.params))
        correction = None
        try:
            resp = parse_king_response(raw)
        except ParseFailure as exc:
            last_error = str(exc)
            correction = REPAIR_INSTRUCTION
        else:
            term = story_guard(resp.story) if story_guard and resp.is_valid else None
            if term is None:
                return resp, raw, attempt
            last_error = f"story mentioned blocked term {term!r}"
            correction = (
                f'Your previous story mentioned "{term}", which does not exist in this '
                "world. Retell the continuation without it, in the same JSON format."
            )
        if raw:
            messages.append(ChatMessage(Role.ASSISTANT, raw))
        messages.append(ChatMessage(Role.USER, correction))
    raise ProviderFailure(
        f"no usable reply after {max_retries + 1} attempts: {last_error}"
    )


def audit_limits(resp: KingResponse) -> LimitAudit:
    """Advisory word-count audit; words are whitespace-delimited runs."""
    comment_words = len(resp.comment.split())
    story_words = len(resp.story.split())
    return LimitAudit(
        comment_words=comment_words,
        story_words=story_words,
        comment_over=comment_words > 30,
        story_over=story_words > 40,
    )
