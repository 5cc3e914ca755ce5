"""Tests the ``regcheck`` command, end to end with scripted providers."""

import json

import pytest

from regcheck.cli import cli
from regcheck.judge import Method, load_judgments
from tests.helpers import fixture

METHODS = [m.value for m in Method]


def run(*argv) -> int:
    return cli([str(a) for a in argv])


def build_checklist_file(directory, max_parallel=4):
    path = directory / "checklist.json"
    assert run("parse", fixture("mini_regulation.txt"), "--out", path) == 0
    assert (
        run(
            "--mock-script",
            fixture("annotate_script.jsonl"),
            "--max-parallel",
            max_parallel,
            "annotate",
            path,
            "--report",
            directory / "annotation.json",
        )
        == 0
    )
    assert (
        run(
            "graphs",
            path,
            "--taxonomy",
            fixture("taxonomy.tsv"),
            "--defined-roles",
            fixture("defined_roles.tsv"),
            "--ontology",
            fixture("ontology.tsv"),
        )
        == 0
    )
    return path


def judge_everything(directory, max_parallel):
    checklist = build_checklist_file(directory, max_parallel)
    judgments = directory / "judgments.jsonl"
    for method in METHODS:
        code = run(
            "--mock-script",
            fixture("judge_script.jsonl"),
            "--max-parallel",
            max_parallel,
            "judge",
            fixture("cases.jsonl"),
            "--method",
            method,
            "--checklist",
            checklist,
            "--out",
            judgments,
            "--resume",
        )
        assert code == 0, method
    report = directory / "report.txt"
    assert run("evaluate", fixture("cases.jsonl"), judgments, "--out", report) == 0
    return judgments, report


def test_stats_of_a_parsed_regulation(tmp_path, capsys):
    path = tmp_path / "checklist.json"
    assert run("parse", fixture("mini_regulation.txt"), "--out", path) == 0
    capsys.readouterr()
    assert run("stats", path) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["tree"] == {
        "internal": 8,
        "leaf": 8,
        "edge": 15,
        "cross_references": 3,
        "top_level": 4,
    }
    assert printed["checklist"]["annotated"] == 0
    assert printed["checklist"]["definitions"] == 2


def test_parse_a_regulation_without_definitions(tmp_path, capsys):
    regulation = tmp_path / "rules.txt"
    regulation.write_text(
        "164.502(a) Standard. A covered entity may not use or disclose it.\n"
        "164.502(b) Minimum necessary. A covered entity must limit disclosures.\n",
        encoding="utf-8",
    )
    path = tmp_path / "checklist.json"
    assert run("parse", regulation, "--out", path) == 0
    capsys.readouterr()
    assert run("stats", path) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["checklist"]["definitions"] == 0
    assert printed["tree"]["leaf"] == 2


def test_annotate_and_graphs(tmp_path, capsys):
    path = build_checklist_file(tmp_path)
    report = json.loads((tmp_path / "annotation.json").read_text(encoding="utf-8"))
    assert report["annotated"] == 8
    capsys.readouterr()
    assert run("stats", path) == 0
    counts = json.loads(capsys.readouterr().out)["checklist"]
    assert (counts["Positive"], counts["Negative"], counts["GeneralDefinition"]) == (4, 2, 2)
    assert (counts["roles"], counts["role_relations"]) == (11, 16)
    assert counts["attributes"] == 5


def test_retrieve(tmp_path, capsys):
    path = build_checklist_file(tmp_path)
    capsys.readouterr()
    assert run("--k", 1, "retrieve", path, "genetic information for underwriting") == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in lines] == ["164.502(a)(5)(i)"]
    code = run(
        "--mock-script",
        fixture("judge_script.jsonl"),
        "retrieve",
        path,
        "Case 02: a nurse shares a list.",
        "--method",
        "agent",
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in lines] == ["164.502(a)(1)(ii)", "164.506(a)"]


def test_the_whole_pipeline_is_deterministic(tmp_path):
    outputs = []
    for n in (1, 4):
        directory = tmp_path / "run{}".format(n)
        directory.mkdir()
        judgments, report = judge_everything(directory, n)
        outputs.append((judgments.read_bytes(), report.read_bytes()))
    assert outputs[0] == outputs[1]
    judged = load_judgments(str(tmp_path / "run1" / "judgments.jsonl"))
    assert len(judged) == 12 * len(METHODS)
    lines = outputs[0][1].decode("utf-8").splitlines()
    assert [line.split()[0] for line in lines[1:7]] == METHODS


def test_resume_skips_judged_cases(tmp_path):
    judgments, _ = judge_everything(tmp_path, 2)
    before = judgments.read_bytes()
    code = run(
        "--mock-script",
        fixture("judge_script.jsonl"),
        "judge",
        fixture("cases.jsonl"),
        "--out",
        judgments,
        "--resume",
    )
    assert code == 0
    assert judgments.read_bytes() == before


def test_json_report(tmp_path, capsys):
    judgments, _ = judge_everything(tmp_path, 4)
    capsys.readouterr()
    assert run("evaluate", fixture("cases.jsonl"), judgments, "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    assert [m["method"] for m in report["methods"]] == METHODS
    dp = report["methods"][0]
    assert dp["case_count"] == 12
    assert dp["parse_failures"] == 1


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert run("frobnicate") == 2
    assert run("stats") == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["stats", "/nonexistent/checklist.json"],
        ["--config", "/nonexistent/regcheck.ini", "stats", fixture("cases.jsonl")],
        ["evaluate", fixture("cases.jsonl"), fixture("judge_script.jsonl")],
    ],
)
def test_pipeline_failures_exit_with_1(argv):
    assert run(*argv) == 1


def test_annotate_needs_a_provider(tmp_path):
    path = tmp_path / "checklist.json"
    assert run("parse", fixture("mini_regulation.txt"), "--out", path) == 0
    assert run("annotate", path) == 1
    assert run("graphs", path, "--taxonomy", fixture("taxonomy.tsv"), "--wordnet") == 1
