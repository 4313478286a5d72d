"""Service configuration: one TOML file wires providers, game rules and storage.

Secrets never live in the file; the chat section names an environment
variable instead. A chat section may point at a script file and the image
section may be omitted entirely, which selects the offline stand-ins.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InvalidConfigError
from .imagery import HttpImageService, ImageService, StubImageService
from .king import ChatProvider
from .providers import HttpChatProvider, ScriptedChatProvider
from .session import SessionConfig


@dataclass(frozen=True)
class ChatProviderConfig:
    base_url: str = ""
    model: str = "gpt-4"
    api_key_env: str = ""
    script: str = ""  # path to a scripted-reply file; overrides base_url


@dataclass(frozen=True)
class ImageServiceConfig:
    base_url: str = ""  # empty selects the deterministic stub


@dataclass(frozen=True)
class AppConfig:
    chat: ChatProviderConfig = ChatProviderConfig()
    image: ImageServiceConfig = ImageServiceConfig()
    game: SessionConfig = SessionConfig()
    storage_root: str = "sessions"
    static_dir: str = ""  # optional: serve a built web client at /ui/


def _game_config(data: dict, model: str) -> SessionConfig:
    defaults = SessionConfig()
    image_size = data.get("image_size", list(defaults.image_size))
    if not (isinstance(image_size, (list, tuple)) and len(image_size) == 2):
        raise InvalidConfigError(f"game.image_size must be [width, height], got {image_size!r}")
    return SessionConfig(
        weapon_threshold=data.get("weapon_threshold", defaults.weapon_threshold),
        history_window=data.get("history_window", defaults.history_window),
        max_player_chars=data.get("max_player_chars", defaults.max_player_chars),
        anachronism_blocklist=tuple(data.get("anachronism_blocklist", ())),
        style_prompt=data.get("style_prompt", defaults.style_prompt),
        image_size=(int(image_size[0]), int(image_size[1])),
        horizon_ratio=data.get("horizon_ratio", defaults.horizon_ratio),
        model=model,
    )


def load_config(path: str | Path) -> AppConfig:
    """Parse and validate a TOML config file."""
    path = Path(path)
    if not path.exists():
        raise InvalidConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"config file is not valid TOML: {exc}") from exc

    providers = data.get("providers", {})
    chat_data = providers.get("chat", {})
    chat = ChatProviderConfig(
        base_url=chat_data.get("base_url", ""),
        model=chat_data.get("model", "gpt-4"),
        api_key_env=chat_data.get("api_key_env", ""),
        script=chat_data.get("script", ""),
    )
    image = ImageServiceConfig(base_url=providers.get("image", {}).get("base_url", ""))
    game = _game_config(data.get("game", {}), chat.model)
    game.validate()
    storage_root = data.get("storage", {}).get("root", "sessions")
    static_dir = data.get("server", {}).get("static_dir", "")
    return AppConfig(
        chat=chat, image=image, game=game, storage_root=storage_root, static_dir=static_dir
    )


def make_chat_provider(config: AppConfig) -> ChatProvider:
    if config.chat.script:
        return ScriptedChatProvider.from_file(config.chat.script)
    if config.chat.base_url:
        return HttpChatProvider(config.chat.base_url, api_key_env=config.chat.api_key_env)
    raise InvalidConfigError("providers.chat needs either base_url or script")


def make_image_service(config: AppConfig) -> ImageService:
    if config.image.base_url:
        return HttpImageService(config.image.base_url)
    return StubImageService()
