"""Chat providers: a deterministic scripted stand-in and a live HTTP client."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

import requests

from .errors import ProviderFailure, TimeoutFailure
from .king import PromptBundle


class ScriptedChatProvider:
    """Replays an ordered list of raw reply strings, one per call.

    A pure function of (script, call index): thread-safe and deterministic,
    which is what makes offline games and replays exact.
    """

    def __init__(self, replies: list[str]):
        self._replies = list(replies)
        self._index = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatProvider":
        """Load a script: either a bare JSON array of raw replies, or an
        object whose ``provider_replies`` field holds them."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data.get("provider_replies", [])
        if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
            raise ProviderFailure(f"script {path} is not a list of reply strings")
        return cls(data)

    @property
    def calls_made(self) -> int:
        return self._index

    @property
    def remaining(self) -> int:
        return len(self._replies) - self._index

    def complete(self, bundle: PromptBundle) -> str:
        del bundle  # scripted replies ignore the prompt
        with self._lock:
            if self._index >= len(self._replies):
                raise ProviderFailure(
                    f"script exhausted after {len(self._replies)} replies"
                )
            reply = self._replies[self._index]
            self._index += 1
            return reply


class HttpChatProvider:
    """OpenAI-compatible chat-completions client.

    The API key is read from the environment variable named by
    ``api_key_env`` at call time; only the variable name lives in config.
    """

    def __init__(self, base_url: str, api_key_env: str = "", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout

    def complete(self, bundle: PromptBundle) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise ProviderFailure(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": bundle.params.model,
            "messages": [{"role": m.role.value, "content": m.content} for m in bundle.messages],
            "temperature": bundle.params.temperature,
            "max_tokens": bundle.params.max_tokens,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except requests.Timeout as exc:
            raise TimeoutFailure(f"chat provider timed out: {exc}") from exc
        except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderFailure(f"chat provider failed: {exc}") from exc
