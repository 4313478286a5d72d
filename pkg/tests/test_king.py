"""Narrator gateway: prompt text, window math, parsing/repair, audits."""

import json
import random

import pytest

from conftest import king_reply, reject_reply, EXAMPLE_REPLY_JSON
from storyforge.errors import ParseFailure, ProviderFailure
from storyforge.king import (
    EXAMPLE_EXCHANGE,
    KING_PERSONA,
    KingResponse,
    RESPONSE_FORMAT,
    STORY_CONTEXT,
    Role,
    assemble_messages,
    audit_limits,
    build_system_prompt,
    complete_with_repair,
    parse_king_response,
)
from storyforge.providers import ScriptedChatProvider
from storyforge.session import SessionConfig, advance_story, new_session


class TestSystemPrompt:
    def test_contains_persona_line(self):
        prompt = build_system_prompt(SessionConfig())
        assert "He never apologizes, nor does he answer anyone's questions" in prompt

    def test_json_keys_in_order(self):
        prompt = build_system_prompt(SessionConfig())
        assert -1 < prompt.find('"isValid"') < prompt.find('"comment"') < prompt.find('"story"')

    def test_byte_stable(self):
        assert build_system_prompt(SessionConfig()) == build_system_prompt(SessionConfig())

    def test_all_four_blocks_verbatim_in_order(self):
        prompt = build_system_prompt(SessionConfig())
        positions = [prompt.find(block) for block in
                     (KING_PERSONA, STORY_CONTEXT, RESPONSE_FORMAT, EXAMPLE_EXCHANGE)]
        assert all(p >= 0 for p in positions)
        assert positions == sorted(positions)


def session_with_turns(n: int, window: int = 15):
    session = new_session(SessionConfig(history_window=window), seed=3)
    for i in range(n):
        provider = ScriptedChatProvider([king_reply(f"c{i}", f"story {i} unfolds")])
        session, _ = advance_story(session, f"turn {i}", provider)
    return session


class TestAssembleMessages:
    def test_empty_history(self):
        bundle = assemble_messages(session_with_turns(0), "Once upon a time")
        assert [m.role for m in bundle.messages] == [Role.SYSTEM, Role.USER]
        assert bundle.messages[-1].content == "Once upon a time"

    def test_window_truncates_to_fifteen_pairs(self):
        bundle = assemble_messages(session_with_turns(20, window=15), "next")
        assert len(bundle.messages) == 1 + 30 + 1

    def test_short_history_oldest_pair_first(self):
        session = session_with_turns(3, window=15)
        bundle = assemble_messages(session, "next")
        assert len(bundle.messages) == 1 + 6 + 1
        assert bundle.messages[1].content == "turn 0"
        assert bundle.messages[2].role == Role.ASSISTANT
        assert json.loads(bundle.messages[2].content)["story"] == "story 0 unfolds"

    def test_assistant_history_replays_raw_json(self):
        session = session_with_turns(1)
        raw = session.turns[0].king_raw
        bundle = assemble_messages(session, "next")
        assert bundle.messages[2].content == raw

    def test_window_bound_property(self):
        for turns, window in [(0, 1), (1, 1), (5, 2), (9, 4), (16, 15)]:
            bundle = assemble_messages(session_with_turns(turns, window=window), "x")
            assert len(bundle.messages) <= 2 * window + 2


class TestParseKingResponse:
    def test_example_reply_with_missing_comma(self):
        resp = parse_king_response(EXAMPLE_REPLY_JSON)
        assert resp == KingResponse(
            True, "Ha, you'd better narrate it well! ", "This will be a tale imbued with mystery... "
        )

    def test_rejection_reply(self):
        resp = parse_king_response(
            '{"isValid": false, "comment": "Do you want to live...!?", "story": ""}'
        )
        assert resp == KingResponse(False, "Do you want to live...!?", "")

    def test_code_fence_matches_unfenced(self):
        fenced = '```json\n{"isValid": true, "story": "A tale.", "comment": ""}\n```'
        unfenced = '{"isValid": true, "story": "A tale.", "comment": ""}'
        assert parse_king_response(fenced) == parse_king_response(unfenced)

    def test_prose_around_object(self):
        raw = 'Very well. {"isValid": true, "comment": "", "story": "Onward."} So it goes.'
        assert parse_king_response(raw).story == "Onward."

    def test_string_typed_booleans(self):
        assert parse_king_response('{"isValid": "True", "story": "x", "comment": ""}').is_valid
        assert not parse_king_response('{"isValid": "FALSE", "comment": "no"}').is_valid

    def test_missing_optional_fields_coerce_empty(self):
        resp = parse_king_response('{"isValid": false}')
        assert resp == KingResponse(False, "", "")

    def test_invalid_with_story_normalized_empty(self):
        resp = parse_king_response('{"isValid": false, "comment": "c", "story": "leak"}')
        assert resp.story == ""

    @pytest.mark.parametrize(
        "raw",
        ["", "no json here", "{", '{"comment": "x"}', '{"isValid": 3, "story": "x"}', "[1,2,3]"],
    )
    def test_parse_failures(self, raw):
        with pytest.raises(ParseFailure):
            parse_king_response(raw)

    def test_valid_but_empty_story_is_parse_failure(self):
        with pytest.raises(ParseFailure):
            parse_king_response('{"isValid": true, "comment": "x", "story": "  "}')

    def test_round_trip_canonical_json(self):
        rng = random.Random(99)
        alphabet = 'abc XYZ 123 \\" \n\t{}[]:,\'"éß漢'
        for _ in range(200):
            comment = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            if rng.random() < 0.5:
                resp = KingResponse(False, comment, "")
            else:
                story = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 20))) or "x"
                if not story.strip():
                    story = "x"
                resp = KingResponse(True, comment, story)
            assert parse_king_response(resp.to_json()) == resp

    def test_nested_object_inside_story_field(self):
        raw = '{"isValid": true, "comment": "", "story": "brace } inside", "extra": {"a": 1}}'
        assert parse_king_response(raw).story == "brace } inside"


class TestCompleteWithRepair:
    def bundle(self):
        return assemble_messages(session_with_turns(0), "begin")

    def test_malformed_then_valid(self):
        provider = ScriptedChatProvider(["garbage", king_reply("ok", "A tale of dunes.")])
        resp, raw, attempts = complete_with_repair(provider, self.bundle())
        assert attempts == 2
        assert resp == parse_king_response(raw)
        assert resp.story == "A tale of dunes."

    def test_valid_first_time_raw_passthrough(self):
        reply = king_reply("ok", "A tale.")
        provider = ScriptedChatProvider([reply])
        resp, raw, attempts = complete_with_repair(provider, self.bundle())
        assert (attempts, raw) == (1, reply)

    def test_exhaustion(self):
        provider = ScriptedChatProvider(["bad", "worse", "worst"])
        with pytest.raises(ProviderFailure):
            complete_with_repair(provider, self.bundle(), max_retries=2)

    def test_retry_appends_correction_messages(self):
        seen = []

        class Probe:
            def complete(self, bundle):
                seen.append(len(bundle.messages))
                return "garbage" if len(seen) == 1 else king_reply("", "Fine.")

        complete_with_repair(Probe(), self.bundle())
        assert seen[1] == seen[0] + 2  # prior raw + corrective instruction

    def test_guard_violation_consumes_retry(self):
        provider = ScriptedChatProvider(
            [king_reply("", "a machine gun roars"), king_reply("", "a falcon cries")]
        )
        resp, _, attempts = complete_with_repair(
            provider, self.bundle(), story_guard=lambda s: "machine gun" if "machine gun" in s else None
        )
        assert attempts == 2 and resp.story == "a falcon cries"

    def test_deterministic_for_same_script(self):
        script = ["oops", king_reply("c", "Dunes again.")]
        results = [
            complete_with_repair(ScriptedChatProvider(list(script)), self.bundle())
            for _ in range(2)
        ]
        assert results[0] == results[1]


class TestAuditLimits:
    def test_within_limits(self):
        audit = audit_limits(KingResponse(True, "five words in this comment", "w " * 10))
        assert not audit.comment_over and not audit.story_over

    def test_story_over_forty(self):
        audit = audit_limits(KingResponse(True, "", " ".join(["w"] * 41)))
        assert audit.story_words == 41 and audit.story_over

    def test_empty_comment_zero_words(self):
        audit = audit_limits(KingResponse(False, "", ""))
        assert audit.comment_words == 0 and not audit.comment_over

    def test_comment_over_thirty(self):
        audit = audit_limits(KingResponse(True, " ".join(["x"] * 31), "s"))
        assert audit.comment_over
