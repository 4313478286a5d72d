"""Session core: construction, detection, guard, transitions, turn atomicity."""

import random
from dataclasses import replace
import re
from itertools import product

import pytest

from conftest import king_reply, reject_reply, EXAMPLE_REPLY_JSON
from storyforge.errors import (
    EmptyInputError,
    InputTooLongError,
    InvalidConfigError,
    ProviderFailure,
    WrongPhaseError,
)
from storyforge.providers import ScriptedChatProvider
from storyforge.session import (
    GameSession,
    Phase,
    SURFACE_FORMS,
    SessionConfig,
    WeaponKind,
    advance_story,
    anachronism_guard,
    check_phase_transition,
    detect_weapons,
    new_session,
    reveal_fraction,
)


class TestNewSession:
    def test_default_config_fresh_state(self):
        session = new_session(SessionConfig(), seed=42)
        assert session.phase == Phase.STORYTELLING
        assert session.turns == ()
        assert session.weapons == ()
        assert session.scene is None

    def test_threshold_above_lexicon_rejected(self):
        with pytest.raises(InvalidConfigError):
            new_session(SessionConfig(weapon_threshold=7), seed=1)

    def test_config_values_echoed(self):
        config = SessionConfig(history_window=15, weapon_threshold=4)
        session = new_session(config, seed=1)
        assert session.config.history_window == 15
        assert session.config.weapon_threshold == 4
        assert session.rng_seed == 1

    @pytest.mark.parametrize(
        "bad",
        [
            SessionConfig(weapon_threshold=0),
            SessionConfig(history_window=0),
            SessionConfig(max_player_chars=0),
            SessionConfig(horizon_ratio=1.5),
            SessionConfig(image_size=(0, 4)),
            SessionConfig(anachronism_blocklist=("Machine Gun",)),
        ],
    )
    def test_invalid_configs(self, bad):
        with pytest.raises(InvalidConfigError):
            new_session(bad, seed=0)


def oracle_detect(text: str, collected=()) -> list[WeaponKind]:
    """Independent scanner: tokenize into letter runs, map tokens to kinds."""
    form_to_kind = {form: kind for kind, forms in SURFACE_FORMS.items() for form in forms}
    first: dict[WeaponKind, int] = {}
    for match in re.finditer(r"[^\W\d_]+", text.lower()):
        kind = form_to_kind.get(match.group(0))
        if kind is not None and kind not in collected and kind not in first:
            first[kind] = match.start()
    return [k for k, _ in sorted(first.items(), key=lambda item: item[1])]


class TestDetectWeapons:
    def test_single_keyword(self):
        assert detect_weapons("He drew a gleaming sword.", set()) == [WeaponKind.SWORD]

    def test_empty_text(self):
        assert detect_weapons("", {WeaponKind.SWORD}) == []

    def test_plural_and_exclusion_ordering(self):
        got = detect_weapons("Swords and shields clashed; the blade sang.", {WeaponKind.SWORD})
        assert got == [WeaponKind.SHIELD, WeaponKind.BLADE]

    def test_whole_word_only(self):
        assert detect_weapons("The swordsman bladed onward", set()) == []

    def test_knives_irregular_plural(self):
        assert detect_weapons("Knives glittered.", set()) == [WeaponKind.KNIFE]

    def test_punctuation_and_digit_boundaries(self):
        assert detect_weapons("A sword, a sword5? Still one sword!", set()) == [WeaponKind.SWORD]

    def test_matches_oracle_on_randomized_texts(self):
        rng = random.Random(1234)
        vocabulary = (
            [form for forms in SURFACE_FORMS.values() for form in forms]
            + ["swordsman", "shielded", "daggers,", "miswand", "bladeless", "knifes"]
            + ["the", "a", "ancient", "tale", "Sword.", "SHIELD!", "(dagger)", "'wand'"]
        )
        for _ in range(300):
            words = [rng.choice(vocabulary) for _ in range(rng.randint(0, 25))]
            text = " ".join(w.upper() if rng.random() < 0.3 else w for w in words)
            collected = set(rng.sample(list(WeaponKind), rng.randint(0, 3)))
            assert detect_weapons(text, collected) == oracle_detect(text, collected)


class TestAnachronismGuard:
    def test_blocked_phrase(self):
        assert anachronism_guard("He fired a machine gun", ["machine gun"]) == "machine gun"

    def test_empty_blocklist(self):
        assert anachronism_guard("anything at all", []) is None

    def test_substring_of_phrase_does_not_trigger(self):
        assert anachronism_guard("The machinery of fate turned", ["machine gun"]) is None

    def test_case_insensitive(self):
        assert anachronism_guard("A MACHINE GUN!", ["machine gun"]) == "machine gun"

    def test_trailing_letters_break_match(self):
        assert anachronism_guard("the machine gunner waits", ["machine gun"]) is None


def make_session(**config_kwargs) -> GameSession:
    return new_session(SessionConfig(**config_kwargs), seed=7)


class TestPhaseAndReveal:
    def test_below_threshold_stays(self):
        session = make_session()
        provider = ScriptedChatProvider(
            [king_reply("", "A sword, a shield and a dagger gleamed.")]
        )
        session, _ = advance_story(session, "begin", provider)
        assert len(session.weapons) == 3
        assert check_phase_transition(session) == Phase.STORYTELLING

    def test_threshold_reached_enters_battle(self):
        session = make_session()
        provider = ScriptedChatProvider(
            [king_reply("", "Sword, shield, dagger and wand: all four shone.")]
        )
        session, outcome = advance_story(session, "begin", provider)
        assert session.phase == Phase.BATTLE
        assert outcome.phase_after == Phase.BATTLE
        assert check_phase_transition(session) == Phase.BATTLE  # idempotent

    def test_reveal_fraction_values(self):
        session = make_session()
        assert reveal_fraction(session) == 0.0
        provider = ScriptedChatProvider([king_reply("", "A sword and a shield.")])
        session, _ = advance_story(session, "go", provider)
        assert reveal_fraction(session) == 0.5
        provider = ScriptedChatProvider([king_reply("", "A dagger and a wand too.")])
        session, _ = advance_story(session, "on", provider)
        assert reveal_fraction(session) == 1.0


class TestAdvanceStory:
    def test_example_reply_from_system_prompt(self):
        session = make_session()
        provider = ScriptedChatProvider([EXAMPLE_REPLY_JSON])
        session, outcome = advance_story(session, "This is an ancient Persian tale", provider)
        assert outcome.kind.value == "continued"
        assert outcome.king.comment == "Ha, you'd better narrate it well! "
        assert outcome.king.story.startswith("This will be a tale imbued with mystery")

    def test_empty_input_leaves_session_unchanged(self):
        session = make_session()
        with pytest.raises(EmptyInputError):
            advance_story(session, "   ", ScriptedChatProvider([]))
        assert session == make_session()

    def test_too_long_input(self):
        session = make_session(max_player_chars=10)
        with pytest.raises(InputTooLongError):
            advance_story(session, "x" * 11, ScriptedChatProvider([]))

    def test_wrong_phase(self):
        session = make_session()
        session = replace(session, phase=Phase.BATTLE)
        with pytest.raises(WrongPhaseError):
            advance_story(session, "hello", ScriptedChatProvider([]))

    def test_weapons_detected_in_story_only(self):
        session = make_session()
        provider = ScriptedChatProvider([king_reply("", "He seized a sword and a shield")])
        session, outcome = advance_story(session, "give me a wand and a dagger", provider)
        assert outcome.weapons_gained == (WeaponKind.SWORD, WeaponKind.SHIELD)
        assert len(session.weapons) == 2

    def test_rejected_turn_gains_nothing(self):
        session = make_session()
        provider = ScriptedChatProvider([reject_reply()])
        session, outcome = advance_story(session, "nonsense", provider)
        assert outcome.kind.value == "rejected"
        assert outcome.weapons_gained == ()
        assert not outcome.king.is_valid
        assert len(session.turns) == 1 and len(session.weapons) == 0

    def test_provider_failure_is_atomic(self):
        before = make_session()
        provider = ScriptedChatProvider(["not json at all", "{also bad", "nope"])
        with pytest.raises(ProviderFailure):
            advance_story(before, "hello", provider)
        assert before == make_session()

    def test_anachronism_triggers_repair_retry(self):
        session = make_session(anachronism_blocklist=("machine gun",))
        provider = ScriptedChatProvider(
            [
                king_reply("", "He fired a machine gun across the dunes."),
                king_reply("", "He hurled a spear across the dunes."),
            ]
        )
        session, outcome = advance_story(session, "the fight begins", provider)
        assert outcome.kind.value == "continued"
        assert "machine gun" not in outcome.king.story
        assert provider.calls_made == 2

    def test_duplicate_kind_is_noop(self):
        session = make_session()
        provider = ScriptedChatProvider(
            [king_reply("", "A sword!"), king_reply("", "Another sword, and a wand.")]
        )
        session, _ = advance_story(session, "one", provider)
        session, outcome = advance_story(session, "two", provider)
        assert outcome.weapons_gained == (WeaponKind.WAND,)
        assert [w.kind for w in session.weapons] == [WeaponKind.SWORD, WeaponKind.WAND]

    def test_weapon_provenance_records_turn(self):
        session = make_session()
        provider = ScriptedChatProvider(
            [king_reply("", "No arms yet."), king_reply("", "Now a dagger.")]
        )
        session, _ = advance_story(session, "one", provider)
        session, _ = advance_story(session, "two", provider)
        assert session.weapons[0].turn_index == 1

    def test_scene_version_scheduled_on_milestones(self):
        session = make_session()
        provider = ScriptedChatProvider(
            [king_reply("", "A sword."), king_reply("", "No more arms."), king_reply("", "A wand.")]
        )
        session, o1 = advance_story(session, "a", provider)
        session, o2 = advance_story(session, "b", provider)
        session, o3 = advance_story(session, "c", provider)
        assert o1.scene_version == 1
        assert o2.scene_version is None
        assert o3.scene_version == 1  # no artifact was stored between milestones


def drive(session, replies_kinds):
    """Apply a sequence of reply archetypes; return the state trajectory."""
    trajectory = [session]
    for archetype in replies_kinds:
        if session.phase != Phase.STORYTELLING:
            break
        raw = {
            "valid_plain": king_reply("", "The tale went on."),
            "valid_two_weapons": king_reply("", "A sword crossed a blade."),
            "invalid": reject_reply(),
        }[archetype]
        session, _ = advance_story(session, "go", ScriptedChatProvider([raw]))
        trajectory.append(session)
    return trajectory


class TestStateMachineProperties:
    def test_exhaustive_bounded_enumeration(self):
        """All reply sequences of length 4 (3^4): monotone counts, legal phases."""
        archetypes = ["valid_plain", "valid_two_weapons", "invalid"]
        for sequence in product(archetypes, repeat=4):
            trajectory = drive(new_session(SessionConfig(weapon_threshold=2), 1), sequence)
            for before, after in zip(trajectory, trajectory[1:]):
                assert len(after.weapons) >= len(before.weapons)
                assert len(after.turns) == len(before.turns) + 1
                kinds = [w.kind for w in after.weapons]
                assert len(kinds) == len(set(kinds))
                # the only legal edge is storytelling -> battle
                if before.phase != after.phase:
                    assert (before.phase, after.phase) == (Phase.STORYTELLING, Phase.BATTLE)
                    assert len(after.weapons) >= after.config.weapon_threshold
            final = trajectory[-1]
            if final.phase == Phase.BATTLE:
                assert len(final.weapons) >= final.config.weapon_threshold

    def test_reveal_monotone_and_saturates_at_threshold(self):
        session = new_session(SessionConfig(weapon_threshold=2), 1)
        fractions = [reveal_fraction(session)]
        for trajectory_session in drive(session, ["valid_plain", "valid_two_weapons"])[1:]:
            fractions.append(reveal_fraction(trajectory_session))
            session = trajectory_session
        assert fractions == sorted(fractions)
        assert session.phase == Phase.BATTLE
        assert fractions[-1] == 1.0
