"""Score judgments against the gold labels of a case file.

A reply without a parseable choice is a wrong answer: it counts in the
denominators of accuracy and recall but predicts no class.  It gets a
row of its own in the confusion matrix.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from tabulate import tabulate

from regcheck.exceptions import ArgumentError, CorruptPayload, JudgmentCaseMismatch, MalformedRecord
from regcheck.judge import PARSE_FAILURE, CaseKind, CaseRecord, Judgment, Label
from regcheck.text import whitespace_token_count
from regcheck.time import dumps

log = logging.getLogger(__name__)

REPORT_VERSION = 1
LABELS: Tuple[Label, ...] = (Label.PERMIT, Label.PROHIBIT, Label.NOT_APPLICABLE)
ROWS: Tuple[str, ...] = tuple(lab.value for lab in LABELS) + (PARSE_FAILURE,)
FORMATS = ("text", "json")

Confusion = Dict[str, Dict[str, int]]  # predicted row -> gold column -> count


@dataclass(frozen=True)
class DatasetStats:
    case_count: int
    label_counts: Dict[str, int]
    kind_counts: Dict[str, int]
    avg_context_length: float
    avg_reference_count: float

    def to_dict(self) -> dict:
        return {
            "cases": self.case_count,
            "labels": self.label_counts,
            "kinds": self.kind_counts,
            "avg_context_length": self.avg_context_length,
            "avg_reference_count": self.avg_reference_count,
        }


def dataset_stats(cases: Sequence[CaseRecord]) -> DatasetStats:
    """Label and kind counts, mean context length in whitespace tokens."""
    labels = Counter(c.gold.value for c in cases)
    kinds = Counter(c.kind.value for c in cases)
    n = len(cases)
    return DatasetStats(
        case_count=n,
        label_counts={lab.value: labels[lab.value] for lab in LABELS},
        kind_counts={kind.value: kinds[kind.value] for kind in CaseKind},
        avg_context_length=sum(whitespace_token_count(c.context) for c in cases) / n
        if n
        else 0.0,
        avg_reference_count=sum(len(c.references) for c in cases) / n if n else 0.0,
    )


def read_cases(lines: Iterable[str]) -> List[CaseRecord]:
    cases: List[CaseRecord] = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            case = CaseRecord.from_dict(json.loads(line))
        except KeyError as e:
            raise MalformedRecord(lineno, "missing field {}".format(e))
        except (TypeError, ValueError, AttributeError) as e:
            raise MalformedRecord(lineno, str(e) or repr(e))
        if case.id in seen:
            raise MalformedRecord(lineno, "duplicate case id {}".format(case.id))
        seen.add(case.id)
        cases.append(case)
    return cases


def load_cases(path: str) -> Tuple[List[CaseRecord], DatasetStats]:
    """Read a JSON lines case file; raise MalformedRecord on a bad line."""
    with open(path, encoding="utf-8") as stream:
        cases = read_cases(stream)
    stats = dataset_stats(cases)
    log.info("Loaded %d cases from %s: %s", len(cases), path, stats.label_counts)
    return cases, stats


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class MethodReport:
    """Metrics of one method; all of them are fractions in [0, 1]."""

    method: str
    case_count: int
    accuracy: float
    per_class: Dict[str, ClassMetrics]
    macro_f1: float
    confusion: Confusion
    parse_failures: int
    flags: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "case_count": self.case_count,
            "accuracy": self.accuracy,
            "per_class": {k: v.to_dict() for k, v in self.per_class.items()},
            "macro_f1": self.macro_f1,
            "confusion": self.confusion,
            "parse_failures": self.parse_failures,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, adict: Mapping) -> "MethodReport":
        return cls(
            method=adict["method"],
            case_count=int(adict["case_count"]),
            accuracy=float(adict["accuracy"]),
            per_class={
                k: ClassMetrics(**v) for k, v in adict["per_class"].items()
            },
            macro_f1=float(adict["macro_f1"]),
            confusion={
                row: {col: int(n) for col, n in cols.items()}
                for row, cols in adict["confusion"].items()
            },
            parse_failures=int(adict["parse_failures"]),
            flags=tuple(adict.get("flags", ())),
        )


@dataclass(frozen=True)
class EvaluationReport:
    methods: Dict[str, MethodReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "methods": [m.to_dict() for m in self.methods.values()],
        }


def _ratio(num: int, den: int, flags: List[str], what: str) -> float:
    if den == 0:
        flags.append(what)
        return 0.0
    return num / den


def confusion_matrix(pairs: Iterable[Tuple[Label, Optional[Label]]]) -> Confusion:
    """Count (gold, predicted) pairs; a None prediction is a parse failure."""
    confusion = {row: {lab.value: 0 for lab in LABELS} for row in ROWS}
    for gold, predicted in pairs:
        row = predicted.value if predicted is not None else PARSE_FAILURE
        confusion[row][gold.value] += 1
    return confusion


def report_from_confusion(method: str, confusion: Confusion) -> MethodReport:
    """Accuracy, per class precision/recall/F1 and macro-F1.

    A zero denominator gives 0 and leaves a note in ``flags``.
    """
    flags: List[str] = []
    total = sum(sum(cols.values()) for cols in confusion.values())
    correct = sum(confusion[lab.value][lab.value] for lab in LABELS)
    accuracy = _ratio(correct, total, flags, "no cases")
    per_class = {}
    for lab in LABELS:
        name = lab.value
        tp = confusion[name][name]
        predicted = sum(confusion[name].values())
        actual = sum(confusion[row][name] for row in ROWS)
        p = _ratio(tp, predicted, flags, "{} never predicted: precision 0".format(name))
        r = _ratio(tp, actual, flags, "{} absent from gold: recall 0".format(name))
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_class[name] = ClassMetrics(precision=p, recall=r, f1=f1)
    return MethodReport(
        method=method,
        case_count=total,
        accuracy=accuracy,
        per_class=per_class,
        macro_f1=sum(m.f1 for m in per_class.values()) / len(per_class),
        confusion=confusion,
        parse_failures=sum(confusion[PARSE_FAILURE].values()),
        flags=tuple(flags),
    )


def evaluate(judgments: Iterable[Judgment], cases: Sequence[CaseRecord]) -> EvaluationReport:
    """Score every method found in ``judgments``.

    Each method must have judged each case exactly once.
    """
    gold = {c.id: c.gold for c in cases}
    by_method: Dict[str, Dict[str, Judgment]] = {}
    for j in judgments:
        seen = by_method.setdefault(j.method.value, {})
        if j.case_id in seen:
            raise JudgmentCaseMismatch(
                "{} judged case {} twice".format(j.method.value, j.case_id),
                method=j.method.value,
                case=j.case_id,
            )
        if j.case_id not in gold:
            raise JudgmentCaseMismatch(
                "Judgment for unknown case {}".format(j.case_id), case=j.case_id
            )
        seen[j.case_id] = j
    methods = {}
    for method, judged in by_method.items():
        missing = sorted(set(gold) - set(judged))
        if missing:
            raise JudgmentCaseMismatch(
                "{} has no judgment for {} case(s), e.g. {}".format(
                    method, len(missing), missing[0]
                ),
                method=method,
                missing=missing,
            )
        confusion = confusion_matrix(
            (gold[case_id], j.predicted) for case_id, j in sorted(judged.items())
        )
        methods[method] = report_from_confusion(method, confusion)
    return EvaluationReport(methods=methods)


def macro_f1_over(report: MethodReport, labels: Sequence[Label]) -> float:
    """Unweighted mean F1 over a subset of the classes."""
    if not labels:
        raise ArgumentError("labels", labels)
    return sum(report.per_class[Label(lab).value].f1 for lab in labels) / len(labels)


def percent(fraction: float) -> Decimal:
    """A fraction as a percentage with 2 decimals, rounding half up."""
    return (Decimal(repr(fraction)) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def _text_table(report: EvaluationReport) -> str:
    headers = ["method", "acc"]
    headers += ["{} {}".format(lab.value, m) for lab in LABELS for m in ("P", "R", "F1")]
    headers += ["Ma-F1", "fail"]
    rows = []
    for name, m in report.methods.items():
        row = [name, str(percent(m.accuracy))]
        for lab in LABELS:
            c = m.per_class[lab.value]
            row += [str(percent(x)) for x in (c.precision, c.recall, c.f1)]
        row += [str(percent(m.macro_f1)), str(m.parse_failures)]
        rows.append(row)
    lines = [
        tabulate(
            rows,
            headers=headers,
            tablefmt="plain",
            disable_numparse=True,
            colalign=("left",) + ("right",) * (len(headers) - 1),
        )
    ]
    for name, m in report.methods.items():
        for flag in m.flags:
            lines.append("note ({}): {}".format(name, flag))
    return "\n".join(lines) + "\n"


def render_report(report: EvaluationReport, format: str = "text") -> str:
    """Render as a table of percentages (``text``) or as versioned JSON."""
    if format == "text":
        return _text_table(report)
    if format == "json":
        return dumps(report.to_dict(), indent=1) + "\n"
    raise ArgumentError("format", format)


def report_from_json(text: str) -> EvaluationReport:
    """Read back what ``render_report(report, "json")`` wrote."""
    try:
        adict = json.loads(text)
        if adict.get("schema_version") != REPORT_VERSION:
            raise CorruptPayload(
                "Unsupported report version {!r}".format(adict.get("schema_version"))
            )
        methods = [MethodReport.from_dict(m) for m in adict["methods"]]
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise CorruptPayload("Invalid report: {!r}".format(e))
    return EvaluationReport(methods={m.method: m for m in methods})
