"""Command line entry points: play a game in the terminal, run the service,
replay a stored session, or run a fully scripted simulation for CI.

Exit codes are stable: 0 success, 1 game-level failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .config import AppConfig, load_config, make_chat_provider, make_image_service
from .errors import (
    BindFailure,
    CorruptTranscriptError,
    EmptyInputError,
    InputTooLongError,
    InvalidConfigError,
    ProviderFailure,
    StoryforgeError,
)
from .imagery import StubImageService
from .providers import ScriptedChatProvider
from .runtime import GameRunner, counter_clock
from .server import GameService, session_view
from .session import Phase, WeaponKind
from .store import SessionStore, replay as replay_session

EXIT_OK = 0
EXIT_GAME = 1
EXIT_USAGE = 2


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def load_script(path: str | Path) -> dict:
    """Simulation script: player inputs paired with provider replies.

    Replies are consumed one per provider call, so summary calls after a
    weapon milestone take the next reply in line.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "player_inputs" not in data or "provider_replies" not in data:
        raise InvalidConfigError(
            f"script {path} must be an object with player_inputs and provider_replies"
        )
    data.setdefault("image_stub_seed", 0)
    return data


def _app_config(path: str | None) -> AppConfig:
    return load_config(path) if path else AppConfig()


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulation(script: dict, out_dir: str | Path, config: AppConfig) -> tuple[dict, Path]:
    """Headless full game with scripted provider and stub image service.

    Deterministic: a fixed-epoch clock and the script's image_stub_seed drive
    everything, so two runs produce byte-identical transcripts and PNGs.
    """
    seed = int(script["image_stub_seed"])
    store = SessionStore(out_dir)
    runner = GameRunner(
        store,
        provider=ScriptedChatProvider(script["provider_replies"]),
        image_service=StubImageService(),
        clock=counter_clock(),
    )
    session = runner.create_session(config.game, seed=seed, session_id=f"sim-{seed:016x}")
    sid = session.id

    for text in script["player_inputs"]:
        if session.phase != Phase.STORYTELLING:
            break
        try:
            session, _outcome = runner.submit_turn(sid, text)
        except ProviderFailure as exc:
            _err(f"provider script exhausted mid-game: {exc}")
            break
    if session.phase == Phase.BATTLE:
        for weapon in [w.kind for w in session.weapons]:
            session = runner.submit_battle_action(sid, weapon)

    summary = {
        "session_id": sid,
        "turns": len(session.turns),
        "rejections": sum(1 for t in session.turns if not t.king.is_valid),
        "weapons": len(session.weapons),
        "outcome": session.phase.value.removeprefix("ended_"),
    }
    return summary, store.session_dir(sid)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        script = load_script(args.script)
        config = _app_config(args.config)
    except (OSError, json.JSONDecodeError, InvalidConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    summary, _ = run_simulation(script, args.out, config)
    print(json.dumps(summary))
    if summary["outcome"] not in ("won", "lost"):
        _err("script ended before game end")
        return EXIT_GAME
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def cmd_replay(args: argparse.Namespace) -> int:
    session_dir = Path(args.session)
    store = SessionStore(session_dir.parent)
    try:
        session = replay_session(store, session_dir.name)
    except CorruptTranscriptError as exc:
        _err(f"corrupt transcript (seq {exc.seq}): {exc}")
        return EXIT_GAME
    print(json.dumps(session_view(session)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        service = GameService(config, host=args.host, port=args.port)
    except (InvalidConfigError, ProviderFailure) as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        service.run()
    except BindFailure as exc:
        _err(str(exc))
        return EXIT_GAME
    return EXIT_OK


# ---------------------------------------------------------------------------
# play
# ---------------------------------------------------------------------------

def _print_outcome(outcome, session) -> None:
    king = outcome.king
    if king.comment:
        print(f"King: {king.comment}")
    if king.is_valid:
        print(f"Story: {king.story}")
    else:
        print("The King rejects your story.")
    for kind in outcome.weapons_gained:
        print(f"* A {kind.value} materializes in your world.")
    if outcome.weapons_gained:
        print(f"Arsenal: {', '.join(w.kind.value for w in session.weapons)}")


def _play_battle(runner: GameRunner, session) -> int:
    print("-- battle --")
    while session.phase == Phase.BATTLE:
        unused = [k.value for k in session.battle.arsenal if k not in session.battle.used]
        print(
            f"Your HP {session.battle.player_hp}, King HP {session.battle.king_hp}. "
            f"Weapons: {', '.join(unused)}"
        )
        try:
            choice = input("strike with> ").strip().lower()
        except EOFError:
            _err("input ended during battle")
            return EXIT_GAME
        try:
            kind = WeaponKind(choice)
        except ValueError:
            print(f"No weapon called {choice!r}.")
            continue
        try:
            session = runner.submit_battle_action(session.id, kind)
        except StoryforgeError as exc:
            print(str(exc))
    if session.phase == Phase.ENDED_WON:
        print("The King falls. You have rewritten your fate.")
        return EXIT_OK
    print("You have fallen.")
    return EXIT_GAME


def cmd_play(args: argparse.Namespace) -> int:
    try:
        config = _app_config(args.config)
        if args.scripted:
            provider = ScriptedChatProvider.from_file(args.scripted)
        else:
            provider = make_chat_provider(config)
        image_service = make_image_service(config) if not args.scripted else StubImageService()
    except (OSError, json.JSONDecodeError, InvalidConfigError, ProviderFailure) as exc:
        _err(str(exc))
        return EXIT_USAGE

    out_dir = args.out or tempfile.mkdtemp(prefix="storyforge-play-")
    runner = GameRunner(SessionStore(out_dir), provider=provider, image_service=image_service)
    session = runner.create_session(config.game, seed=args.seed)
    print(f"Session {session.id} (transcript under {out_dir})")
    print("Tell your story to the King. The right words become weapons.")

    while session.phase == Phase.STORYTELLING:
        try:
            text = input("you> ")
        except EOFError:
            _err("input ended before the game did")
            return EXIT_GAME
        try:
            session, outcome = runner.submit_turn(session.id, text)
        except EmptyInputError:
            print("input must be non-empty")
            continue
        except InputTooLongError as exc:
            print(str(exc))
            continue
        except ProviderFailure as exc:
            _err(str(exc))
            return EXIT_GAME
        _print_outcome(outcome, session)
        if session.phase == Phase.BATTLE:
            print("The threshold is met; the world of the story takes over.")
    return _play_battle(runner, session)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storyforge", description="Storytelling game engine and service."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_play = sub.add_parser("play", help="interactive terminal game")
    p_play.add_argument("--config", help="TOML config file")
    p_play.add_argument("--scripted", help="scripted provider replies (JSON)")
    p_play.add_argument("--seed", type=int, default=None)
    p_play.add_argument("--out", help="session storage directory")
    p_play.set_defaults(func=cmd_play)

    p_serve = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p_serve.add_argument("--config", required=True, help="TOML config file")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8750)
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay", help="rebuild a session from its transcript")
    p_replay.add_argument("--session", required=True, help="session directory")
    p_replay.set_defaults(func=cmd_replay)

    p_sim = sub.add_parser("simulate", help="headless scripted game for CI")
    p_sim.add_argument("--script", required=True, help="script JSON file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--config", help="TOML config file")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StoryforgeError as exc:
        _err(str(exc))
        return EXIT_GAME


if __name__ == "__main__":
    sys.exit(main())
