"""Shared fixtures: scripted replies, the golden game script, small configs."""

import json

import pytest

from storyforge.king import EXAMPLE_EXCHANGE
from storyforge.session import SessionConfig


def king_reply(comment: str, story: str, valid: bool = True) -> str:
    """A well-formed raw narrator reply."""
    return json.dumps({"isValid": valid, "comment": comment, "story": story})


def reject_reply(comment: str = "Do you want to live...!?") -> str:
    return json.dumps({"isValid": False, "comment": comment, "story": ""})


# The system prompt's example exchange ends with the example reply JSON;
# reusing it verbatim exercises the parser's missing-comma repair.
EXAMPLE_REPLY_JSON = EXAMPLE_EXCHANGE.split("Assistant:\n", 1)[1]


def golden_script(seed: int = 42) -> dict:
    """Six turns, one rejection, four weapons (one per milestone), then battle.

    Provider replies interleave narrator turns with the scene-summary calls
    that follow each weapon milestone.
    """
    return {
        "player_inputs": [
            "This is an ancient Persian tale",
            "buy cheap potions online",
            "The hero crossed the midnight dunes",
            "He reached the ruined gate at dawn",
            "A veiled stranger beckoned him inside",
            "Above them the old stars awoke",
        ],
        "provider_replies": [
            EXAMPLE_REPLY_JSON,
            reject_reply(),
            king_reply("Go on.", "He drew a gleaming sword from the sands."),
            "A desolate wilderness filled with harsh terrains.",
            king_reply("Hmph.", "A shield of bronze lay by the fallen gate."),
            "Hidden valleys with lush vegetation dominate the landscape.",
            king_reply("Continue.", "She hid a curved dagger beneath her sash."),
            "An oasis at dusk, purple dunes beyond.",
            king_reply("At last.", "With a knife of starlight the tale turned."),
            "A star-lit desert crowned by an ancient citadel.",
        ],
        "image_stub_seed": seed,
    }


@pytest.fixture
def golden():
    return golden_script()


@pytest.fixture
def small_config():
    """Fast config for randomized fleets: tiny images, defaults otherwise."""
    return SessionConfig(image_size=(32, 24))


def write_json(path, data) -> str:
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def random_script(rng) -> tuple[dict, SessionConfig]:
    """A randomized scripted game: mixes rejections, malformed replies needing
    repair, guard violations and weapon milestones. Replies are listed in
    exact provider-consumption order (retries and summaries included)."""
    from storyforge.session import WeaponKind

    threshold = rng.randint(2, 4)
    blocklist = ("machine gun",) if rng.random() < 0.3 else ()
    config = SessionConfig(
        weapon_threshold=threshold,
        image_size=(24, 16),
        anachronism_blocklist=blocklist,
        history_window=rng.choice([1, 3, 15]),
    )
    kinds = list(WeaponKind)
    collected: set = set()
    inputs, replies = [], []
    for i in range(rng.randint(1, 7)):
        if len(collected) >= threshold:
            break
        inputs.append(f"player line {i} about the {rng.choice(['dunes', 'gate', 'citadel'])}")
        if rng.random() < 0.25:
            replies.append(rng.choice(["garbage", "{broken json", "no object here"]))
        if blocklist and rng.random() < 0.2:
            replies.append(king_reply("", "Suddenly a machine gun appeared."))
        if rng.random() < 0.25:
            replies.append(reject_reply())
        else:
            mention = rng.sample(kinds, rng.randint(0, 2))
            story = "The tale wound on" + "".join(f", a {k.value}" for k in mention) + "."
            replies.append(king_reply(f"comment {i}", story))
            new = [k for k in mention if k not in collected]
            if new:
                collected.update(new)
                replies.append(f"scene summary at {len(collected)} weapons")
    script = {
        "player_inputs": inputs,
        "provider_replies": replies,
        "image_stub_seed": rng.getrandbits(64),
    }
    return script, config
