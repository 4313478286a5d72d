"""HTTP + WebSocket service over a GameRunner.

Per-session writes are serialized: while one turn (or battle action) is in
flight, concurrent mutations get 409. Reads never block on writers. The
stream endpoint pushes turn, scene, battle and phase frames as they commit.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from functools import partial

import numpy as np
from aiohttp import WSMsgType, web

from . import store as storemod
from .config import AppConfig, make_chat_provider, make_image_service
from .errors import (
    BattleOverError,
    BindFailure,
    EmptyInputError,
    InputTooLongError,
    ProviderFailure,
    WeaponAlreadyUsedError,
    WeaponNotOwnedError,
    WrongPhaseError,
)
from .raster import composite_reveal, png_bytes
from .runtime import GameRunner
from .session import GameSession, WeaponKind, reveal_fraction
from .store import RecordKind, SessionStore, TranscriptRecord

log = logging.getLogger(__name__)

# Record kinds forwarded to stream subscribers.
STREAM_KINDS = {
    RecordKind.TURN_COMMITTED,
    RecordKind.SCENE_REFRESHED,
    RecordKind.BATTLE_EVENT,
    RecordKind.PHASE_CHANGED,
}

BACKDROP_COLOR = (18, 12, 28)


def _json_error(status: int, code: str, message: str) -> web.Response:
    return web.json_response({"error": code, "message": message}, status=status)


def session_view(session: GameSession, transcript_seq: int | None = None) -> dict:
    """Client-facing session state; the UI derives everything from this.

    transcript_seq lets stream clients drop frames older than this hydration.
    """
    scene = None
    if session.scene is not None:
        scene = {
            "version": session.scene.version,
            "reveal": session.scene.reveal,
            "url": f"/sessions/{session.id}/scene.png?v={session.scene.version}",
        }
    battle = None
    if session.battle is not None:
        battle = {
            "player_hp": session.battle.player_hp,
            "king_hp": session.battle.king_hp,
            "arsenal": [k.value for k in session.battle.arsenal],
            "used": sorted(k.value for k in session.battle.used),
            "outcome": session.battle.outcome.value if session.battle.outcome else None,
        }
    return {
        "id": session.id,
        "phase": session.phase.value,
        "transcript_seq": transcript_seq,
        "turns": [
            {
                "index": t.index,
                "player_text": t.player_text,
                "king": storemod.king_to_dict(t.king),
                "weapons_gained": [k.value for k in t.weapons_gained],
                "timestamp": t.timestamp.isoformat(),
            }
            for t in session.turns
        ],
        "weapons": [{"kind": w.kind.value, "turn_index": w.turn_index} for w in session.weapons],
        "reveal": reveal_fraction(session),
        "scene": scene,
        "battle": battle,
        "limits": {
            "max_player_chars": session.config.max_player_chars,
            "weapon_threshold": session.config.weapon_threshold,
        },
    }


def _stream_frame(record: TranscriptRecord) -> dict:
    payload = record.payload
    if record.kind == RecordKind.SCENE_REFRESHED:
        # rasters stay out of the stream; clients reload scene.png
        payload = {"version": payload["version"], "reveal": payload["reveal"]}
    return {"type": record.kind.value, "seq": record.seq, "payload": payload}


class GameService:
    """Owns the runner, the per-session write gate and the stream fan-out."""

    def __init__(self, config: AppConfig, host: str = "127.0.0.1", port: int = 8750):
        self.config = config
        self.host = host
        self.port = port
        self.store = SessionStore(config.storage_root)
        self.runner = GameRunner(
            self.store,
            provider=make_chat_provider(config),
            image_service=make_image_service(config),
            on_record=self._on_record,
        )
        self.busy: set[str] = set()
        self.subscribers: dict[str, set[asyncio.Queue]] = {}
        self.refresh_pending: set[str] = set()
        self.refreshing: set[str] = set()
        self.loop: asyncio.AbstractEventLoop | None = None
        self.actual_port: int | None = None
        self._stop: asyncio.Event | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._startup_error: BaseException | None = None

    # -- stream fan-out -----------------------------------------------------

    def _on_record(self, session_id: str, record: TranscriptRecord) -> None:
        if record.kind not in STREAM_KINDS or self.loop is None:
            return
        frame = _stream_frame(record)
        self.loop.call_soon_threadsafe(self._dispatch, session_id, frame)

    def _dispatch(self, session_id: str, frame: dict) -> None:
        for queue in self.subscribers.get(session_id, set()):
            queue.put_nowait(frame)

    # -- handlers -----------------------------------------------------------

    async def _run_blocking(self, fn, *args, **kwargs):
        return await asyncio.get_running_loop().run_in_executor(None, partial(fn, *args, **kwargs))

    def _session_or_none(self, request: web.Request) -> GameSession | None:
        return self.runner.get(request.match_info["session_id"])

    def _view(self, session: GameSession) -> dict:
        latest, seq = self.runner.snapshot(session.id)
        return session_view(latest, transcript_seq=seq)

    async def create_session(self, request: web.Request) -> web.Response:
        body = {}
        if request.can_read_body:
            try:
                body = await request.json()
            except json.JSONDecodeError:
                return _json_error(400, "bad_json", "request body must be JSON")
        seed = body.get("seed") if isinstance(body, dict) else None
        if seed is not None and not isinstance(seed, int):
            return _json_error(400, "bad_seed", "seed must be an integer")
        session = await self._run_blocking(self.runner.create_session, self.config.game, seed)
        return web.json_response(self._view(session), status=201)

    async def get_session(self, request: web.Request) -> web.Response:
        session = self._session_or_none(request)
        if session is None:
            return _json_error(404, "unknown_session", "no such session")
        return web.json_response(self._view(session))

    async def post_turn(self, request: web.Request) -> web.Response:
        session = self._session_or_none(request)
        if session is None:
            return _json_error(404, "unknown_session", "no such session")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _json_error(400, "bad_json", "request body must be JSON")
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            return _json_error(400, "bad_text", "body must carry a text string")

        sid = session.id
        if sid in self.busy:
            return _json_error(409, "turn_in_flight", "another turn is being told")
        self.busy.add(sid)
        try:
            updated, outcome = await self._run_blocking(
                self.runner.submit_turn, sid, text, auto_refresh=False
            )
        except EmptyInputError as exc:
            return _json_error(400, "empty_input", str(exc))
        except InputTooLongError as exc:
            return _json_error(400, "input_too_long", str(exc))
        except WrongPhaseError as exc:
            return _json_error(409, "wrong_phase", str(exc))
        except ProviderFailure as exc:
            return _json_error(502, "provider_failure", str(exc))
        finally:
            self.busy.discard(sid)

        if outcome.weapons_gained:
            self._schedule_refresh(sid)
        return web.json_response(
            {"outcome": storemod.outcome_to_dict(outcome), "session": self._view(updated)}
        )

    def _schedule_refresh(self, session_id: str) -> None:
        """At most one refresh in flight per session; a newer milestone
        requested meanwhile supersedes the older one on the next pass."""
        self.refresh_pending.add(session_id)
        if session_id not in self.refreshing:
            asyncio.get_running_loop().create_task(self._refresh_worker(session_id))

    async def _refresh_worker(self, session_id: str) -> None:
        self.refreshing.add(session_id)
        try:
            while session_id in self.refresh_pending:
                self.refresh_pending.discard(session_id)
                try:
                    await self._run_blocking(self.runner.refresh_scene_now, session_id)
                except Exception:
                    log.exception("scene refresh crashed for %s", session_id)
        finally:
            self.refreshing.discard(session_id)

    async def post_battle_turn(self, request: web.Request) -> web.Response:
        session = self._session_or_none(request)
        if session is None:
            return _json_error(404, "unknown_session", "no such session")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _json_error(400, "bad_json", "request body must be JSON")
        name = body.get("weapon") if isinstance(body, dict) else None
        try:
            kind = WeaponKind(name)
        except ValueError:
            return _json_error(400, "unknown_weapon", f"unknown weapon: {name!r}")

        sid = session.id
        if sid in self.busy:
            return _json_error(409, "turn_in_flight", "another action is being resolved")
        self.busy.add(sid)
        try:
            updated = await self._run_blocking(self.runner.submit_battle_action, sid, kind)
        except WeaponNotOwnedError as exc:
            return _json_error(400, "weapon_not_owned", str(exc))
        except WeaponAlreadyUsedError as exc:
            return _json_error(400, "weapon_already_used", str(exc))
        except (BattleOverError, WrongPhaseError) as exc:
            return _json_error(409, "wrong_phase", str(exc))
        finally:
            self.busy.discard(sid)
        return web.json_response(self._view(updated))

    async def get_scene_png(self, request: web.Request) -> web.Response:
        session = self._session_or_none(request)
        if session is None:
            return _json_error(404, "unknown_session", "no such session")
        if session.scene is None:
            return _json_error(404, "no_scene", "no scene artifact yet")
        artifact = session.scene
        backdrop = np.full_like(artifact.pixelized, 0)
        backdrop[:, :] = BACKDROP_COLOR
        composed = composite_reveal(backdrop, artifact.pixelized, artifact.reveal)
        return web.Response(body=png_bytes(composed), content_type="image/png")

    async def get_transcript(self, request: web.Request) -> web.Response:
        session = self._session_or_none(request)
        if session is None:
            return _json_error(404, "unknown_session", "no such session")
        records = await self._run_blocking(self.store.read_records, session.id)
        return web.json_response(
            [{"seq": r.seq, "kind": r.kind.value, "payload": r.payload, "ts": r.ts} for r in records]
        )

    async def stream(self, request: web.Request) -> web.WebSocketResponse:
        session = self._session_or_none(request)
        if session is None:
            raise web.HTTPNotFound(text="no such session")
        ws = web.WebSocketResponse(heartbeat=30)
        await ws.prepare(request)
        queue: asyncio.Queue = asyncio.Queue()
        self.subscribers.setdefault(session.id, set()).add(queue)

        async def pump():
            while True:
                await ws.send_json(await queue.get())

        sender = asyncio.create_task(pump())
        try:
            async for msg in ws:
                if msg.type in (WSMsgType.ERROR, WSMsgType.CLOSE):
                    break
        finally:
            sender.cancel()
            self.subscribers[session.id].discard(queue)
        return ws

    # -- app & lifecycle ----------------------------------------------------

    def build_app(self) -> web.Application:
        app = web.Application()
        app.add_routes(
            [
                web.post("/sessions", self.create_session),
                web.get("/sessions/{session_id}", self.get_session),
                web.post("/sessions/{session_id}/turns", self.post_turn),
                web.post("/sessions/{session_id}/battle/turns", self.post_battle_turn),
                web.get("/sessions/{session_id}/scene.png", self.get_scene_png),
                web.get("/sessions/{session_id}/transcript", self.get_transcript),
                web.get("/sessions/{session_id}/stream", self.stream),
            ]
        )
        if self.config.static_dir:
            app.router.add_get("/", self._ui_index)
            app.router.add_get("/ui/", self._ui_index)
            app.router.add_static("/ui", self.config.static_dir)
        return app

    async def _ui_index(self, request: web.Request) -> web.FileResponse:
        del request
        return web.FileResponse(f"{self.config.static_dir}/index.html")

    async def _main(self) -> None:
        self.loop = asyncio.get_running_loop()
        self._stop = asyncio.Event()
        app_runner = web.AppRunner(self.build_app())
        await app_runner.setup()
        site = web.TCPSite(app_runner, self.host, self.port)
        try:
            await site.start()
        except OSError as exc:
            await app_runner.cleanup()
            raise BindFailure(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        self.actual_port = app_runner.addresses[0][1]
        self._started.set()
        log.info("serving on %s:%s (storage %s)", self.host, self.actual_port, self.config.storage_root)
        try:
            await self._stop.wait()
        finally:
            await app_runner.cleanup()

    def run(self) -> None:
        """Blocking entry point for the CLI; raises BindFailure on bind errors."""
        try:
            asyncio.run(self._main())
        except KeyboardInterrupt:
            pass

    def start_background(self) -> "GameService":
        """Start in a daemon thread (used by tests and the frontend harness)."""

        def target():
            try:
                asyncio.run(self._main())
            except BaseException as exc:  # noqa: BLE001 - surfaced to the starter
                self._startup_error = exc
                self._started.set()

        self._thread = threading.Thread(target=target, daemon=True)
        self._thread.start()
        self._started.wait(timeout=10)
        if self._startup_error is not None:
            raise self._startup_error
        return self

    def stop(self) -> None:
        if self.loop is not None and self._stop is not None:
            self.loop.call_soon_threadsafe(self._stop.set)
        if self._thread is not None:
            self._thread.join(timeout=10)
