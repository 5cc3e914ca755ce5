"""Tests the *judge* module: the six methods against a scripted model."""

import json
import tempfile
import unittest
from pathlib import Path

import pytest

from regcheck.embeddings import HashingEmbeddingProvider
from regcheck.exceptions import ArgumentError, ConfigurationError, MalformedRecord
from regcheck.gateway import Gateway, load_mock_script, script_mock
from regcheck.judge import (
    CaseKind,
    CaseRecord,
    FilterVerdict,
    JudgeSettings,
    Judgment,
    Label,
    Method,
    Providers,
    fit_to_budget,
    format_references,
    judge,
    judge_cases,
    law_filter,
    load_judgments,
    parse_choice,
    parse_filter_answer,
    save_judgments,
    screen,
)
from regcheck.regdoc import clause_text, parse_regulation_id
from regcheck.retrieve import RetrievalHit, RetrievalMethod
from regcheck.settings import Config
from tests.helpers import fixture, mini_checklist

EXPECTED_DP = {
    "01": Label.PERMIT,
    "02": Label.PERMIT,
    "03": Label.PERMIT,
    "04": Label.PROHIBIT,
    "05": Label.PERMIT,
    "06": Label.PROHIBIT,
    "07": Label.PROHIBIT,
    "08": Label.NOT_APPLICABLE,
    "09": Label.NOT_APPLICABLE,
    "10": Label.NOT_APPLICABLE,
    "11": Label.PERMIT,
    "12": None,
}


def read_cases():
    with open(fixture("cases.jsonl"), encoding="utf-8") as stream:
        return [CaseRecord.from_dict(json.loads(line)) for line in stream if line.strip()]


def mock_providers(path="judge_script.jsonl"):
    gateway = Gateway(load_mock_script(fixture(path)), model="mock")
    return Providers(gateway=gateway, embeddings=HashingEmbeddingProvider())


def hit(rid, score=1.0):
    return RetrievalHit(parse_regulation_id(rid), score, RetrievalMethod.BM25)


class TestParsing(unittest.TestCase):
    def test_parse_choice(self):
        for raw, expected in [
            ("Choice: B. Permitted", Label.PERMIT),
            ("Choice: [A. Prohibited]", Label.PROHIBIT),
            ("**Choice:** B. Permitted", Label.PERMIT),
            ("choice: (C) Not related", Label.NOT_APPLICABLE),
            ("Execution:\n1. - fine\n\nChoice: [C. Not related ]", Label.NOT_APPLICABLE),
            ("Choice: A\nOn second thought...\nChoice: B", Label.PERMIT),
            ("I am not able to tell.", None),
            ("Choice: Both", None),
            ("Choice: D", None),
            ("", None),
        ]:
            assert parse_choice(raw) is expected, raw

    def test_parse_filter_answer(self):
        assert parse_filter_answer("yes, it governs covered entities.") is FilterVerdict.KEEP
        assert parse_filter_answer("Yes") is FilterVerdict.KEEP
        assert parse_filter_answer("No. It is about notes.") is FilterVerdict.DROP
        assert parse_filter_answer("NONE") is FilterVerdict.NONE
        assert parse_filter_answer("The answer is yes.") is FilterVerdict.KEEP
        assert parse_filter_answer("Not sure I know") is FilterVerdict.DROP
        assert parse_filter_answer("") is FilterVerdict.DROP


class TestCaseRecord(unittest.TestCase):
    def test_fixture(self):
        cases = read_cases()
        assert [c.id for c in cases] == ["{:02}".format(n) for n in range(1, 13)]
        assert cases[0].references == (parse_regulation_id("164.502(a)(1)(i)"),)
        assert cases[4].kind is CaseKind.SYNTHETIC
        assert CaseRecord.from_dict(cases[1].to_dict()) == cases[1]

    def test_defaults_and_errors(self):
        case = CaseRecord.from_dict({"id": 7, "context": "x", "gold": "Permit"})
        assert case.id == "7"
        assert case.kind is CaseKind.REAL
        with pytest.raises(ArgumentError):
            CaseRecord("1", "   ", Label.PERMIT)
        with pytest.raises(ValueError):
            CaseRecord.from_dict({"id": "1", "context": "x", "gold": "Allowed"})
        with pytest.raises(KeyError):
            CaseRecord.from_dict({"id": "1", "gold": "Permit"})


class TestReferences(unittest.TestCase):
    def test_fit_to_budget(self):
        contents = ["aaaa", "bb", "cccccc"]
        assert fit_to_budget(contents, 12) == contents
        assert fit_to_budget(contents, 9) == ["aaa", "bb", "ccc"]
        assert fit_to_budget(contents, 7) == ["aa", "bb", "cc"]
        assert fit_to_budget(contents, 0) == ["", "", ""]
        assert fit_to_budget([], 5) == []

    def test_format_references(self):
        checklist = mini_checklist()
        ids = [parse_regulation_id("164.502(a)(1)(ii)"), parse_regulation_id("164.506(a)")]
        assert format_references(checklist, ids, with_content=False) == (
            "1. 164.502(a)(1)(ii)\n2. 164.506(a)"
        )
        block = format_references(checklist, ids, with_content=True)
        assert block.splitlines()[1] == "2. 164.506(a) - " + clause_text(checklist.tree, ids[1])
        short = format_references(checklist, ids, with_content=True, budget=20)
        assert short == "1. 164.502(a)(1)(ii) - Uses and d\n2. 164.506(a) - Uses and d"
        assert format_references(checklist, [], with_content=True) == ""


class TestScreen(unittest.TestCase):
    def setUp(self):
        self.checklist = mini_checklist()

    def test_law_filter(self):
        gateway = Gateway(script_mock([("Is the given HIPAA Regulation relevant", "No.")]))
        assert law_filter(gateway, "event", "164.506(a): text") is FilterVerdict.DROP

    def test_stops_at_k_survivors(self):
        provider = script_mock([("HIPAA Regulation:\n164.506(a):", "no"), ("", "yes")])
        hits = [
            hit(rid)
            for rid in ("164.506(a)", "164.508(a)", "164.502(a)(1)(i)", "164.502(a)(1)(ii)")
        ]
        survivors = screen(Gateway(provider), self.checklist, "event", hits, k=2)
        assert [s.canonical for s in survivors] == ["164.508(a)", "164.502(a)(1)(i)"]
        assert provider.calls == 3

    def test_candidates_carry_their_clause_text(self):
        provider = script_mock(
            [("genetic information for underwriting purposes", "yes"), ("", "no")]
        )
        survivors = screen(
            Gateway(provider), self.checklist, "event", [hit("164.502(a)(5)(i)")], k=1
        )
        assert [s.canonical for s in survivors] == ["164.502(a)(5)(i)"]


class TestJudge(unittest.TestCase):
    def setUp(self):
        self.checklist = mini_checklist()
        self.cases = {c.id: c for c in read_cases()}
        self.providers = mock_providers()

    def run_method(self, method, case_id="01"):
        return judge(method, self.providers, self.checklist, self.cases[case_id])

    def test_prompting_methods(self):
        for method in (Method.DP, Method.COT_AUTO, Method.COT_MANUAL):
            judgment = self.run_method(method)
            assert judgment.predicted is Label.PERMIT
            assert judgment.hits == ()
            assert len(judgment.transcript_keys) == 1
        assert self.run_method(Method.DP, "12").parse_failed

    def test_prompting_methods_need_no_checklist(self):
        judgment = judge(Method.DP, self.providers, None, self.cases["06"])
        assert judgment.predicted is Label.PROHIBIT

    def test_agent_id(self):
        judgment = self.run_method(Method.AGENT_ID, "02")
        assert judgment.predicted is Label.PERMIT
        assert [h.leaf.canonical for h in judgment.hits] == ["164.502(a)(1)(ii)", "164.506(a)"]
        assert [s.canonical for s in judgment.survivors] == ["164.502(a)(1)(ii)", "164.506(a)"]
        assert len(judgment.transcript_keys) == 4

    def test_bm25_content(self):
        judgment = self.run_method(Method.BM25_CONTENT, "03")
        assert judgment.predicted is Label.PERMIT
        assert len(judgment.hits) == 5
        assert {h.method for h in judgment.hits} == {RetrievalMethod.BM25}
        assert len(judgment.survivors) == 5
        assert len(judgment.transcript_keys) == 7

    def test_ci_es_content(self):
        judgment = self.run_method(Method.CI_ES_CONTENT, "01")
        assert judgment.predicted is Label.PERMIT
        assert "164.502(a)(5)(i)" not in [s.canonical for s in judgment.survivors]
        assert len(judgment.survivors) == 5
        assert len(judgment.transcript_keys) == 7

    def test_ci_es_needs_embeddings(self):
        providers = Providers(gateway=self.providers.gateway)
        with pytest.raises(ConfigurationError):
            judge(Method.CI_ES_CONTENT, providers, self.checklist, self.cases["01"])

    def test_retrieval_methods_need_a_checklist(self):
        with pytest.raises(ArgumentError):
            judge(Method.BM25_CONTENT, self.providers, None, self.cases["01"])

    def test_no_survivors(self):
        gateway = Gateway(
            script_mock(
                [
                    ("Is the given HIPAA Regulation relevant", "NONE"),
                    ("generate the applicable HIPAA regulations", "1. 164.506(a) - x"),
                    ("No relevant regulations found.", "Choice: C"),
                ]
            )
        )
        judgment = judge(
            Method.AGENT_ID, Providers(gateway), self.checklist, self.cases["09"]
        )
        assert judgment.survivors == ()
        assert judgment.predicted is Label.NOT_APPLICABLE

    def test_gateway_errors_become_parse_failures(self):
        providers = Providers(Gateway(script_mock([])))
        judgment = judge(Method.COT_AUTO, providers, None, self.cases["01"])
        assert judgment.predicted is None
        assert "No scripted reply" in judgment.error
        assert judgment.to_dict()["predicted"] == "ParseFailure"

    def test_annotation_failures_become_parse_failures(self):
        gateway = Gateway(script_mock([("Are the Sender and Subject", "no idea")]))
        providers = Providers(gateway, HashingEmbeddingProvider())
        settings = JudgeSettings(retry_limit=2)
        judgment = judge(
            Method.CI_ES_CONTENT, providers, self.checklist, self.cases["01"], settings
        )
        assert judgment.parse_failed
        assert "failed after 2 attempts" in judgment.error


class TestJudgeCases(unittest.TestCase):
    def setUp(self):
        self.cases = read_cases()

    def test_dp_over_the_fixture(self):
        judgments = judge_cases(Method.DP, mock_providers(), None, self.cases, max_parallel=4)
        assert {j.case_id: j.predicted for j in judgments} == EXPECTED_DP
        assert [j.case_id for j in judgments] == sorted(EXPECTED_DP)

    def test_parallelism_does_not_change_the_result(self):
        checklist = mini_checklist()
        one, four = (
            judge_cases(
                Method.BM25_CONTENT, mock_providers(), checklist, self.cases, max_parallel=n
            )
            for n in (1, 4)
        )
        assert one == four

    def test_skip(self):
        judgments = judge_cases(Method.DP, mock_providers(), None, self.cases, skip={"01", "02"})
        assert [j.case_id for j in judgments] == sorted(EXPECTED_DP)[2:]

    def test_errors(self):
        with pytest.raises(ArgumentError):
            judge_cases(Method.DP, mock_providers(), None, self.cases, max_parallel=0)
        with pytest.raises(ArgumentError):
            judge_cases(Method.AGENT_ID, mock_providers(), None, self.cases)


class TestPersistence(unittest.TestCase):
    def test_save_and_load(self):
        judgments = judge_cases(
            Method.AGENT_ID, mock_providers(), mini_checklist(), read_cases()[:3]
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "judgments.jsonl")
            save_judgments(judgments[:2], path)
            save_judgments(judgments[2:], path, append=True)
            assert load_judgments(path) == judgments
            Path(path).write_text('{"case_id": "1", "method": "dp"}\n')
            with pytest.raises(MalformedRecord):
                load_judgments(path)

    def test_dict_round_trip_of_a_failure(self):
        failed = Judgment("12", Method.DP, None, error="timeout")
        assert Judgment.from_dict(failed.to_dict()) == failed


def test_settings_from_config():
    settings = JudgeSettings.from_config(Config(k=3, role_mode="union"))
    assert settings.k == 3
    assert settings.role_mode == "union"
    with pytest.raises(ArgumentError):
        JudgeSettings(k=0)
    assert Method("cot-auto").uses_checklist is False
    assert Method("ci-es-content").uses_checklist is True
