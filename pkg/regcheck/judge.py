"""Decide whether an event is permitted, prohibited or not covered.

Six methods are available.  Three of them prompt the model with the event
alone:

- ``dp``: direct prompting;
- ``cot-auto``: the model plans its own steps, then executes them;
- ``cot-manual``: the model follows a fixed five step guideline.

The other three retrieve norms from the checklist, screen each candidate
with the law filter and hand the survivors to the decision prompt:

- ``agent-id``: the model names regulation ids, which are verified;
- ``bm25-content``: BM25 queried with an LLM explanation of the event;
- ``ci-es-content``: the event's roles are annotated, matched against the
  role graph and the candidates ranked by embedding similarity.
"""

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from regcheck.annotate import extract_characteristics
from regcheck.checklist import Checklist
from regcheck.exceptions import (
    AnnotationFailed,
    ArgumentError,
    ConfigurationError,
    GatewayError,
    MalformedRecord,
)
from regcheck.gateway import ChatResponse, as_gateway
from regcheck.progress import ShowingProgress
from regcheck.prompts import (
    cot_auto_prompt,
    cot_manual_prompt,
    decision_prompt,
    direct_prompt,
    law_filter_prompt,
)
from regcheck.regdoc import RegulationId, clause_text, parse_regulation_id
from regcheck.retrieve import (
    Bm25Index,
    RetrievalHit,
    agent_retrieve,
    bm25_query,
    build_bm25_index,
    embedding_retrieve,
    llm_explanation,
    norm_corpus,
)
from regcheck.time import dumps

log = logging.getLogger(__name__)

PARSE_FAILURE = "ParseFailure"


class Label(Enum):
    PERMIT = "Permit"
    PROHIBIT = "Prohibit"
    NOT_APPLICABLE = "Not Applicable"


class CaseKind(Enum):
    REAL = "Real"
    SYNTHETIC = "Synthetic"


class Method(Enum):
    DP = "dp"
    COT_AUTO = "cot-auto"
    COT_MANUAL = "cot-manual"
    AGENT_ID = "agent-id"
    BM25_CONTENT = "bm25-content"
    CI_ES_CONTENT = "ci-es-content"

    @property
    def uses_checklist(self) -> bool:
        return self in RAG_METHODS


RAG_METHODS = frozenset({Method.AGENT_ID, Method.BM25_CONTENT, Method.CI_ES_CONTENT})


class FilterVerdict(Enum):
    KEEP = "Keep"
    DROP = "Drop"
    NONE = "None"  # the event concerns none of the candidates


_CHOICE = re.compile(r"(?i:choice)\s*\**\s*:\s*\**\s*\[?\s*\(?([ABC])\b")
_CHOICE_LABELS = {"A": Label.PROHIBIT, "B": Label.PERMIT, "C": Label.NOT_APPLICABLE}
_FILTER_TOKEN = re.compile(r"\b(yes|none|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class CaseRecord:
    id: str
    context: str
    gold: Label
    kind: CaseKind = CaseKind.REAL
    references: Tuple[RegulationId, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ArgumentError("id", self.id)
        if not self.context or not self.context.strip():
            raise ArgumentError("context", self.context)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "context": self.context,
            "gold": self.gold.value,
            "kind": self.kind.value,
            "references": [r.canonical for r in self.references],
        }

    @classmethod
    def from_dict(cls, adict: Mapping) -> "CaseRecord":
        """Raise KeyError, TypeError or ValueError on a bad record."""
        return cls(
            id=str(adict["id"]),
            context=adict["context"],
            gold=Label(adict["gold"]),
            kind=CaseKind(adict.get("kind") or CaseKind.REAL.value),
            references=tuple(
                parse_regulation_id(r) for r in adict.get("references") or ()
            ),
        )


@dataclass(frozen=True)
class Judgment:
    """What one method concluded about one case.

    ``predicted`` is None when no choice could be parsed out of the reply,
    including when the model could not be reached (see ``error``).
    """

    case_id: str
    method: Method
    predicted: Optional[Label]
    hits: Tuple[RetrievalHit, ...] = ()
    survivors: Tuple[RegulationId, ...] = ()
    transcript_keys: Tuple[str, ...] = ()
    error: str = ""

    @property
    def parse_failed(self) -> bool:
        return self.predicted is None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "method": self.method.value,
            "predicted": self.predicted.value if self.predicted else PARSE_FAILURE,
            "hits": [h.to_dict() for h in self.hits],
            "survivors": [s.canonical for s in self.survivors],
            "transcript_keys": list(self.transcript_keys),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, adict: Mapping) -> "Judgment":
        predicted = adict["predicted"]
        return cls(
            case_id=str(adict["case_id"]),
            method=Method(adict["method"]),
            predicted=None if predicted == PARSE_FAILURE else Label(predicted),
            hits=tuple(RetrievalHit.from_dict(h) for h in adict.get("hits", ())),
            survivors=tuple(parse_regulation_id(s) for s in adict.get("survivors", ())),
            transcript_keys=tuple(adict.get("transcript_keys", ())),
            error=adict.get("error", ""),
        )


@dataclass(frozen=True)
class Providers:
    """The chat gateway, plus the embedding provider ci-es-content needs."""

    gateway: object
    embeddings: object = None


@dataclass(frozen=True)
class JudgeSettings:
    k: int = 5
    max_reference_chars: int = 4000
    role_threshold: float = 0.6
    role_mode: str = "filter"
    corpus: str = "norms"
    bm25_k1: float = 1.5
    bm25_b: float = 0.75
    retry_limit: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ArgumentError("k", self.k)
        if self.max_reference_chars < 0:
            raise ArgumentError("max_reference_chars", self.max_reference_chars)

    @classmethod
    def from_config(cls, config) -> "JudgeSettings":
        return cls(
            k=config.k,
            max_reference_chars=config.max_reference_chars,
            role_threshold=config.role_threshold,
            role_mode=config.role_mode,
            corpus=config.corpus,
            bm25_k1=config.bm25_k1,
            bm25_b=config.bm25_b,
            retry_limit=config.retry_limit,
        )


def parse_choice(raw: str) -> Optional[Label]:
    """Read the last "Choice: X" line of a reply; None if there is none."""
    found = None
    for line in raw.splitlines():
        match = _CHOICE.search(line)
        if match:
            found = _CHOICE_LABELS[match.group(1)]
    return found


def parse_filter_answer(raw: str) -> FilterVerdict:
    match = _FILTER_TOKEN.search(raw)
    if match is None:
        return FilterVerdict.DROP
    word = match.group(1).lower()
    if word == "yes":
        return FilterVerdict.KEEP
    return FilterVerdict.NONE if word == "none" else FilterVerdict.DROP


def law_filter(gateway, event: str, candidate_text: str) -> FilterVerdict:
    """Ask whether one candidate regulation is relevant to the event."""
    reply = gateway.ask(law_filter_prompt(event, candidate_text)).content
    return parse_filter_answer(reply)


def fit_to_budget(contents: Sequence[str], budget: int) -> List[str]:
    """Cut ``contents`` to at most ``budget`` characters in total.

    Every entry is cut to one common length, the largest that fits, so
    the longest entries lose text first and short ones stay whole.
    """
    lengths = sorted(len(c) for c in contents)
    if sum(lengths) <= budget:
        return list(contents)
    remaining = budget
    cap = 0
    for i, length in enumerate(lengths):
        share = remaining // (len(lengths) - i)
        if length > share:
            cap = share
            break
        remaining -= length
    return [c[:cap] for c in contents]


def format_references(
    checklist: Checklist,
    ids: Sequence[RegulationId],
    with_content: bool,
    budget: int = 4000,
) -> str:
    """The numbered reference block of the decision prompt."""
    if not ids:
        return ""
    if not with_content:
        return "\n".join("{}. {}".format(i, rid) for i, rid in enumerate(ids, 1))
    contents = fit_to_budget([clause_text(checklist.tree, rid) for rid in ids], budget)
    return "\n".join(
        "{}. {} - {}".format(i, rid, content)
        for i, (rid, content) in enumerate(zip(ids, contents), 1)
    )


class _Recording:
    """Gateway wrapper that remembers the transcript key of each reply."""

    def __init__(self, gateway):
        self.gateway = gateway
        self.keys: List[str] = []

    def ask(self, prompt: str, system: Optional[str] = None) -> ChatResponse:
        resp = self.gateway.ask(prompt, system=system)
        self.keys.append(resp.request_hash)
        return resp


def screen(
    gateway, checklist: Checklist, event: str, hits: Sequence[RetrievalHit], k: int
) -> List[RegulationId]:
    """Keep the candidates the law filter finds relevant, at most ``k``."""
    survivors: List[RegulationId] = []
    verdicts = []
    for hit in hits:
        candidate = "{}: {}".format(hit.leaf, clause_text(checklist.tree, hit.leaf))
        verdict = law_filter(gateway, event, candidate)
        verdicts.append(verdict)
        if verdict is FilterVerdict.KEEP:
            survivors.append(hit.leaf)
            if len(survivors) == k:
                break
    if verdicts and all(v is FilterVerdict.NONE for v in verdicts):
        log.debug("The event concerns none of the %d candidates", len(verdicts))
    return survivors


def _retrieve(
    method: Method,
    gateway,
    providers: Providers,
    checklist: Checklist,
    case: CaseRecord,
    settings: JudgeSettings,
    index: Optional[Bm25Index],
) -> List[RetrievalHit]:
    if method is Method.AGENT_ID:
        return agent_retrieve(gateway, checklist, case.context, settings.k)
    if method is Method.BM25_CONTENT:
        if index is None:
            index = build_bm25_index(
                norm_corpus(checklist, settings.corpus), settings.bm25_k1, settings.bm25_b
            )
        return bm25_query(index, llm_explanation(gateway, case.context), settings.k)
    if providers.embeddings is None:
        raise ConfigurationError("ci-es-content needs an embedding provider.")
    characteristics = extract_characteristics(
        gateway, case.context, subject=case.id, retry_limit=settings.retry_limit
    )
    return embedding_retrieve(
        checklist,
        characteristics,
        providers.embeddings,
        settings.k,
        event=case.context,
        role_threshold=settings.role_threshold,
        role_mode=settings.role_mode,
        corpus=settings.corpus,
    )


def judge(
    method: Method,
    providers: Providers,
    checklist: Optional[Checklist],
    case: CaseRecord,
    settings: JudgeSettings = JudgeSettings(),
    index: Optional[Bm25Index] = None,
) -> Judgment:
    """Run the pipeline of ``method`` on one case.

    Gateway failures do not escape: the case is recorded as a parse
    failure with the error noted, so it still counts against the method.
    """
    method = Method(method)
    if method.uses_checklist and checklist is None:
        raise ArgumentError("checklist", None)
    gateway = _Recording(as_gateway(providers.gateway))
    hits: List[RetrievalHit] = []
    survivors: List[RegulationId] = []
    try:
        if method is Method.DP:
            prompt = direct_prompt(case.context)
        elif method is Method.COT_AUTO:
            prompt = cot_auto_prompt(case.context)
        elif method is Method.COT_MANUAL:
            prompt = cot_manual_prompt(case.context)
        else:
            hits = _retrieve(method, gateway, providers, checklist, case, settings, index)
            survivors = screen(gateway, checklist, case.context, hits, settings.k)
            with_content = method is not Method.AGENT_ID
            references = format_references(
                checklist, survivors, with_content, settings.max_reference_chars
            )
            prompt = decision_prompt(case.context, references, with_content)
        reply = gateway.ask(prompt).content
    except (GatewayError, AnnotationFailed) as e:
        log.error("Case %s, method %s: %s", case.id, method.value, e)
        return Judgment(
            case_id=case.id,
            method=method,
            predicted=None,
            hits=tuple(hits),
            survivors=tuple(survivors),
            transcript_keys=tuple(gateway.keys),
            error=str(e),
        )
    predicted = parse_choice(reply)
    if predicted is None:
        log.warning("Case %s, method %s: no choice in the reply", case.id, method.value)
    return Judgment(
        case_id=case.id,
        method=method,
        predicted=predicted,
        hits=tuple(hits),
        survivors=tuple(survivors),
        transcript_keys=tuple(gateway.keys),
    )


def judge_cases(
    method: Method,
    providers: Providers,
    checklist: Optional[Checklist],
    cases: Sequence[CaseRecord],
    settings: JudgeSettings = JudgeSettings(),
    max_parallel: int = 4,
    skip: Iterable[str] = (),
) -> List[Judgment]:
    """Judge ``cases`` concurrently; return the judgments sorted by case id.

    Cases whose id is in ``skip`` (already judged) are left out.
    """
    method = Method(method)
    if max_parallel < 1:
        raise ArgumentError("max_parallel", max_parallel)
    if method.uses_checklist and checklist is None:
        raise ArgumentError("checklist", None)
    done: Set[str] = set(skip)
    todo = [c for c in cases if c.id not in done]
    index = None
    if method is Method.BM25_CONTENT:
        index = build_bm25_index(
            norm_corpus(checklist, settings.corpus), settings.bm25_k1, settings.bm25_b
        )
    results: Dict[str, Judgment] = {}
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = [
            pool.submit(judge, method, providers, checklist, case, settings, index)
            for case in todo
        ]
        label = "Case ({})".format(method.value)
        for _, future in ShowingProgress(as_completed(futures), len(futures), label):
            judgment = future.result()
            results[judgment.case_id] = judgment
    return [results[key] for key in sorted(results)]


def save_judgments(judgments: Iterable[Judgment], path: str, append: bool = False) -> None:
    """Write one JSON line per judgment."""
    with open(path, "a" if append else "w", encoding="utf-8") as stream:
        for judgment in judgments:
            stream.write(dumps(judgment.to_dict(), sort_keys=True) + "\n")


def load_judgments(path: str) -> List[Judgment]:
    found = []
    with open(path, encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, 1):
            if not line.strip():
                continue
            try:
                found.append(Judgment.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedRecord(lineno, repr(e))
    return found
