import json

import pytest

from diagrambench.gateway import (
    BackendReply,
    CallLog,
    ChatRequest,
    Gateway,
    MockScript,
    ScriptExhaustedError,
    ScriptMismatchError,
    StructuredOutputError,
    TransportError,
    parse_index_choice,
    parse_score_triple,
    scripted_gateway,
)
from diagrambench.model import ScoreTriple


def req(template_id=None, system="sys", user="usr", model="o3", attachments=()):
    return ChatRequest(
        model_id=model,
        system_message=system,
        user_message=user,
        template_id=template_id,
        attachments=tuple(attachments),
    )


class TestChatRequest:
    def test_requires_some_message(self):
        with pytest.raises(ValueError):
            ChatRequest(model_id="o3")

    def test_requires_model(self):
        with pytest.raises(ValueError):
            ChatRequest(model_id="", user_message="x")


class TestMockScript:
    def test_matches_by_template_id(self):
        gateway, script = scripted_gateway([("R1", "analysis text")])
        assert gateway.complete(req(template_id="R1")) == "analysis text"
        script.assert_exhausted()

    def test_matches_by_substring(self):
        gateway, script = scripted_gateway([("needle", "found")])
        assert gateway.complete(req(user="hay needle stack")) == "found"
        assert script.exhausted

    def test_mismatch_raises(self):
        gateway, _ = scripted_gateway([("R2", "nope")])
        with pytest.raises(ScriptMismatchError):
            gateway.complete(req(template_id="R1", user="unrelated"))

    def test_exhaustion_raises(self):
        gateway, script = scripted_gateway([("R1", "one")])
        gateway.complete(req(template_id="R1"))
        with pytest.raises(ScriptExhaustedError):
            gateway.complete(req(template_id="R1"))
        script.assert_exhausted()

    def test_assert_exhausted_reports_leftovers(self):
        _, script = scripted_gateway([("R1", "a"), ("R2", "b")])
        with pytest.raises(AssertionError, match="R1"):
            script.assert_exhausted()

    def test_entries_consumed_in_order(self):
        gateway, _ = scripted_gateway([("R1", "first"), ("R1", "second")])
        assert gateway.complete(req(template_id="R1")) == "first"
        assert gateway.complete(req(template_id="R1")) == "second"


class FlakyBackend:
    """Fails with TransportError a fixed number of times, then succeeds."""

    def __init__(self, failures, text="ok"):
        self.failures = failures
        self.text = text
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("transient")
        return BackendReply(text=self.text)


class TestTransportRetry:
    def test_retries_then_succeeds(self):
        backend = FlakyBackend(failures=2)
        gateway = Gateway(backend=backend, max_retries=2)
        assert gateway.complete(req()) == "ok"
        assert backend.calls == 3

    def test_gives_up_after_budget(self):
        backend = FlakyBackend(failures=10)
        gateway = Gateway(backend=backend, max_retries=2)
        with pytest.raises(TransportError):
            gateway.complete(req())
        assert backend.calls == 3

    def test_every_attempt_is_logged(self):
        log = CallLog()
        gateway = Gateway(backend=FlakyBackend(failures=1), call_log=log, max_retries=2)
        gateway.complete(req(template_id="R1"))
        assert [e["attempt"] for e in log.entries] == [0, 1]
        assert log.entries[0]["error"] is not None
        assert log.entries[0]["response"] is None
        assert log.entries[1]["error"] is None
        assert log.entries[1]["response"] == "ok"


class TestCallLog:
    def test_jsonl_file_mirrors_memory(self, tmp_path):
        path = tmp_path / "calls.jsonl"
        log = CallLog(path)
        gateway, _ = scripted_gateway([("R1", "resp")], call_log=log)
        gateway.complete(req(template_id="R1", attachments=(b"img",)))
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        entry = json.loads(lines[0])
        assert entry["template_id"] == "R1"
        assert entry["model_id"] == "o3"
        assert entry["attachment_count"] == 1
        assert entry["response"] == "resp"
        assert log.entries[0]["template_id"] == "R1"

    def test_by_template_filter(self):
        log = CallLog()
        gateway, _ = scripted_gateway([("R1", "a"), ("R2", "b")], call_log=log)
        gateway.complete(req(template_id="R1"))
        gateway.complete(req(template_id="R2"))
        assert [e["response"] for e in log.by_template("R2")] == ["b"]


class TestParseScoreTriple:
    def test_plain(self):
        assert parse_score_triple("Q1: 4 Q2: 3 Q3: 5") == ScoreTriple(c1=4, c2=3, c3=5)

    def test_multiline_with_prose(self):
        text = "Here is my assessment.\nQ1: 2 because...\nQ2: 5\nsome note\nQ3: 1\n"
        assert parse_score_triple(text) == ScoreTriple(c1=2, c2=5, c3=1)

    def test_out_of_range_rejected(self):
        assert parse_score_triple("Q1: 0 Q2: 3 Q3: 5") is None
        assert parse_score_triple("Q1: 4 Q2: 6 Q3: 5") is None
        assert parse_score_triple("Q1: -1 Q2: 3 Q3: 5") is None

    def test_missing_component_rejected(self):
        assert parse_score_triple("Q1: 4 Q2: 3") is None
        assert parse_score_triple("no scores here") is None

    def test_order_must_be_q1_q2_q3(self):
        assert parse_score_triple("Q3: 5 Q2: 3 Q1: 4") is None


class TestParseIndexChoice:
    def test_single_number(self):
        assert parse_index_choice("3", 4) == 3
        assert parse_index_choice("The most similar text is number 2.", 4) == 2

    def test_repeated_same_number_ok(self):
        assert parse_index_choice("2, because text 2 shares structure", 4) == 2

    def test_ambiguous_rejected(self):
        assert parse_index_choice("either 2 or 3", 4) is None

    def test_out_of_range_rejected(self):
        assert parse_index_choice("5", 4) is None
        assert parse_index_choice("0", 4) is None

    def test_no_number_rejected(self):
        assert parse_index_choice("the second one", 4) is None


class TestStructuredCompletion:
    def test_score_triple_retry_until_parseable(self):
        gateway, script = scripted_gateway(
            [("Ra", "I cannot decide."), ("Ra", "Q1: oops"), ("Ra", "Q1: 4 Q2: 4 Q3: 5")]
        )
        triple = gateway.complete_score_triple(req(template_id="Ra"))
        assert triple == ScoreTriple(c1=4, c2=4, c3=5)
        script.assert_exhausted()

    def test_score_triple_attempts_bounded(self):
        gateway, script = scripted_gateway([("Ra", "junk")] * 5)
        with pytest.raises(StructuredOutputError):
            gateway.complete_score_triple(req(template_id="Ra"))
        assert script.cursor == 3  # three attempts, not five

    def test_index_choice_retry(self):
        gateway, _ = scripted_gateway([("R2", "2 or 3"), ("R2", "2")])
        assert gateway.complete_index_choice(req(template_id="R2"), m=4) == 2

    def test_index_choice_failure(self):
        gateway, _ = scripted_gateway([("R2", "none of them")] * 3)
        with pytest.raises(StructuredOutputError):
            gateway.complete_index_choice(req(template_id="R2"), m=4)
