"""Scene imagery pipeline: story summary, image prompt, segmentation hint,
generation via a pluggable image service, pixelization and reveal bookkeeping.

A scene refresh runs once per weapon milestone and must never fail the turn
that triggered it: any internal error leaves the previous artifact in place.
"""

from __future__ import annotations

import base64
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np
import requests

from . import raster
from .errors import EmptyHistoryError, EmptySummaryError, ProviderFailure, TimeoutFailure
from .king import ChatMessage, ChatProvider, GenerationParams, PromptBundle, Role
from .session import SEED_MASK, reveal_fraction

if TYPE_CHECKING:
    from .session import GameSession, SessionConfig

log = logging.getLogger(__name__)

SUMMARY_INSTRUCTION = (
    "Summarize the environment depicted in the story above in English, ensuring the "
    "description is vivid and concentrated. No mention of protagonists or characters "
    "is allowed. Keep it within 50 words."
)

SUMMARY_WORD_TARGET = 50

# Flat label colors for the sky/ground regions of the segmentation hint.
SKY_COLOR = (230, 230, 6)
GROUND_COLOR = (140, 120, 240)

# Per-milestone seed stride (splitmix increment) so scene seeds decorrelate.
_SEED_GAMMA = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SceneSummary:
    text: str
    source_turn_count: int


@dataclass(frozen=True)
class ImagePrompt:
    positive: str
    negative: str
    seed: int
    size: tuple[int, int]


@dataclass(frozen=True)
class SegmentationHint:
    horizon_row: int
    sky: tuple[int, int, int]
    ground: tuple[int, int, int]
    size: tuple[int, int]

    @property
    def raster(self) -> np.ndarray:
        return raster.two_band_raster(self.size, self.horizon_row, self.sky, self.ground)


@dataclass(frozen=True, eq=False)
class SceneArtifact:
    version: int
    raw: np.ndarray
    pixelized: np.ndarray
    reveal: float

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneArtifact):
            return NotImplemented
        return (
            self.version == other.version
            and self.reveal == other.reveal
            and np.array_equal(self.raw, other.raw)
            and np.array_equal(self.pixelized, other.pixelized)
        )


class ImageService(Protocol):
    """Anything that renders an image prompt under a segmentation hint."""

    def generate(self, prompt: ImagePrompt, hint: SegmentationHint) -> np.ndarray: ...


def summarize_scene(session: "GameSession", provider: ChatProvider) -> SceneSummary:
    """Ask the provider to condense the story so far into a scene description."""
    lines: list[str] = []
    for turn in session.turns:
        if turn.king.is_valid:
            lines.append(turn.player_text)
            lines.append(turn.king.story)
    if not lines:
        raise EmptyHistoryError("no continued turns to summarize")
    bundle = PromptBundle(
        (
            ChatMessage(Role.SYSTEM, "\n".join(lines)),
            ChatMessage(Role.USER, SUMMARY_INSTRUCTION),
        ),
        GenerationParams(model=session.config.model),
    )
    text = provider.complete(bundle).strip()
    if not text:
        raise ProviderFailure("summary reply was empty")
    if len(text.split()) > SUMMARY_WORD_TARGET:
        log.info("scene summary exceeds %d words (advisory)", SUMMARY_WORD_TARGET)
    return SceneSummary(text=text, source_turn_count=len(session.turns))


def build_image_prompt(summary: SceneSummary, config: "SessionConfig", seed: int) -> ImagePrompt:
    """Summary first, style prompt second; seed and size pass through."""
    if not summary.text:
        raise EmptySummaryError("cannot build an image prompt from an empty summary")
    return ImagePrompt(
        positive=f"{summary.text}, {config.style_prompt}",
        negative="",
        seed=seed & SEED_MASK,
        size=config.image_size,
    )


def make_segmentation_hint(
    size: tuple[int, int],
    horizon_ratio: float,
    sky: tuple[int, int, int] = SKY_COLOR,
    ground: tuple[int, int, int] = GROUND_COLOR,
) -> SegmentationHint:
    """Two flat regions: sky above round(ratio x height), ground below."""
    width, height = size
    if width < 1 or height < 1:
        raise ValueError(f"size must be at least 1x1, got {size}")
    if not 0.0 <= horizon_ratio <= 1.0:
        raise ValueError(f"horizon_ratio must be in [0, 1], got {horizon_ratio}")
    return SegmentationHint(
        horizon_row=round(horizon_ratio * height), sky=sky, ground=ground, size=size
    )


def scene_seed(session_seed: int, version: int) -> int:
    """Deterministic per-milestone image seed."""
    return (session_seed + _SEED_GAMMA * version) & SEED_MASK


def refresh_scene(
    session: "GameSession",
    provider: ChatProvider,
    service: ImageService,
    cell: int = 8,
    palette_size: int = 32,
) -> "SceneArtifact | None":
    """Regenerate the scene for the current weapon milestone.

    Returns the new artifact (version = prior + 1, reveal per the session's
    weapon count). Any failure is logged and the prior artifact (possibly
    None) is returned unchanged; a committed turn never fails here.
    """
    prior = session.scene
    try:
        version = (prior.version if prior else 0) + 1
        summary = summarize_scene(session, provider)
        prompt = build_image_prompt(
            summary, session.config, scene_seed(session.rng_seed, version)
        )
        hint = make_segmentation_hint(session.config.image_size, session.config.horizon_ratio)
        generated = service.generate(prompt, hint)
        pixelized = raster.pixelize(generated, cell=cell, palette_size=palette_size)
        return SceneArtifact(
            version=version,
            raw=generated,
            pixelized=pixelized,
            reveal=reveal_fraction(session),
        )
    except Exception:
        log.exception("scene refresh failed; keeping prior artifact")
        return prior


class StubImageService:
    """Offline stand-in: a seeded two-band gradient honoring the hint's horizon."""

    def generate(self, prompt: ImagePrompt, hint: SegmentationHint) -> np.ndarray:
        return raster.render_scene_stub(prompt.positive, prompt.seed, prompt.size, hint.horizon_row)


class HttpImageService:
    """Client for a txt2img endpoint guided by a segmentation-hint control image."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def generate(self, prompt: ImagePrompt, hint: SegmentationHint) -> np.ndarray:
        width, height = prompt.size
        payload = {
            "prompt": prompt.positive,
            "negative_prompt": prompt.negative,
            "seed": prompt.seed,
            "width": width,
            "height": height,
            "controlnet": {
                "module": "segmentation",
                "image": base64.b64encode(raster.png_bytes(hint.raster)).decode("ascii"),
            },
        }
        try:
            resp = requests.post(f"{self.base_url}/txt2img", json=payload, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except requests.Timeout as exc:
            raise TimeoutFailure(f"image service timed out: {exc}") from exc
        except (requests.RequestException, ValueError) as exc:
            raise ProviderFailure(f"image service failed: {exc}") from exc
        encoded = body.get("image") if isinstance(body, dict) else None
        if encoded is None and isinstance(body, dict) and body.get("images"):
            encoded = body["images"][0]
        if not isinstance(encoded, str):
            raise ProviderFailure("image service reply carried no image")
        return raster.png_to_array(base64.b64decode(encoded))
