"""Run the CI-extraction questionnaire and parse its answers.

One prompt asks all the questions about a leaf:

- Q1: is the clause a prohibition, a permission or a general definition?
- Q2: sender, recipient and subject (and their roles), information type,
  consent form and purpose of the information flow.
- Q3 and Q4: are sender or recipient the same person as the subject?
- Q5: is each referenced clause an exception to this one, or a support?

Answers are parsed question by question with tolerant regular
expressions.  If any needed answer cannot be parsed, the whole prompt is
asked again, at most ``retry_limit`` times.

Events to be judged go through Q2 to Q4 only.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

from regcheck.checklist import (
    CICharacteristics,
    ConsentForm,
    NormAnnotation,
    NormType,
    Provenance,
    ReferenceRelation,
    RelationKind,
    Ternary,
)
from regcheck.exceptions import AnnotationFailed, ArgumentError, GatewayError, ParseFailure
from regcheck.gateway import as_gateway
from regcheck.progress import ShowingProgress
from regcheck.prompts import event_questionnaire_prompt, questionnaire_prompt
from regcheck.regdoc import (
    ID_PATTERN,
    DocumentTree,
    RegulationId,
    full_specification,
    parse_regulation_id,
)
from regcheck.time import dumps

log = logging.getLogger(__name__)

T = TypeVar("T")


class Question(Enum):
    Q1 = 1
    Q2 = 2
    Q3 = 3
    Q4 = 4
    Q5 = 5


# Field label in the answer -> CICharacteristics attribute
Q2_FIELDS = (
    ("Sender", "sender"),
    ("Sender Role", "sender_role"),
    ("Recipient", "recipient"),
    ("Recipient Role", "recipient_role"),
    ("Subject", "subject"),
    ("Subject Role", "subject_role"),
    ("Information Type", "information_type"),
    ("Consent Form", "consent_form"),
    ("Purpose", "purpose"),
)

_HEADER = re.compile(r"^\W*Q([1-5])\s*[:.)\-]", re.MULTILINE | re.IGNORECASE)
_LETTER = re.compile(r"^[\s*_\[(]*(?:(?i:answer)\s*[:\-]?\s*)?[\[(]?\s*([ABC])(?=[\s.)\]:,\-*]|$)")
_NONE_VALUES = {"", "none", "n/a", "na", "null", "not mentioned", "not specified", "unknown"}
_RELATION_WORD = re.compile(r"\b(support|exception)s?\b", re.IGNORECASE)
_RELATION_LINE = re.compile(
    r"(" + ID_PATTERN + r")\W*(?:[:\-–]|is an?|is)\s*\W*(support|exception)",
    re.IGNORECASE,
)

_Q1_LETTERS = {"A": NormType.NEGATIVE, "B": NormType.POSITIVE, "C": NormType.GENERAL_DEFINITION}
_TERNARY_LETTERS = {"A": Ternary.YES, "B": Ternary.NO, "C": Ternary.NOT_SURE}


def _sections(raw: str) -> Dict[int, str]:
    """Split an answer into {question number: text after its header}."""
    found: Dict[int, str] = {}
    headers = list(_HEADER.finditer(raw))
    for i, match in enumerate(headers):
        end = headers[i + 1].start() if i + 1 < len(headers) else len(raw)
        number = int(match.group(1))
        found.setdefault(number, raw[match.end():end])
    return found


def _section(raw: str, question: Question) -> str:
    sections = _sections(raw)
    if not sections:
        return raw  # a bare answer
    if question.value not in sections:
        raise ParseFailure(question.name, raw)
    return sections[question.value]


def _letter(text: str) -> Optional[str]:
    match = _LETTER.match(text.strip())
    return match.group(1) if match else None


def _clean(value: str) -> Optional[str]:
    value = value.strip().strip("*_`\"'[]").strip().rstrip(".").strip()
    return None if value.lower() in _NONE_VALUES else value


def _consent(value: Optional[str], raw: str) -> ConsentForm:
    if value is None:
        return ConsentForm.NONE
    low = value.lower()
    if "authorization" in low or "authorisation" in low:
        return ConsentForm.AUTHORIZATION
    if "consent" in low:
        return ConsentForm.CONSENT
    if low.startswith("not required") or low.startswith("no "):
        return ConsentForm.NONE
    raise ParseFailure(Question.Q2.name, raw)


def _parse_q1(text: str, raw: str) -> NormType:
    letter = _letter(text)
    if letter:
        return _Q1_LETTERS[letter]
    low = text.strip().lower()
    if low.startswith("general definition"):
        return NormType.GENERAL_DEFINITION
    if low.startswith("prohibit"):
        return NormType.NEGATIVE
    if low.startswith("permit"):
        return NormType.POSITIVE
    raise ParseFailure(Question.Q1.name, raw)


def _parse_ternary(text: str, raw: str, question: Question) -> Ternary:
    letter = _letter(text)
    if letter:
        return _TERNARY_LETTERS[letter]
    match = re.match(r"^\W*(not sure|yes|no)\b", text.strip(), re.IGNORECASE)
    if match:
        return {"yes": Ternary.YES, "no": Ternary.NO, "not sure": Ternary.NOT_SURE}[
            match.group(1).lower()
        ]
    raise ParseFailure(question.name, raw)


def _parse_q2(text: str, raw: str) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for label, attr in Q2_FIELDS:
        pattern = r"^\W*" + re.escape(label) + r"\s*\**\s*:\s*\**(.*)$"
        match = re.search(pattern, text, re.MULTILINE | re.IGNORECASE)
        if match is None:
            log.debug("Q2 answer lacks %r", label)
            raise ParseFailure(Question.Q2.name, raw)
        value = _clean(match.group(1))
        values[attr] = _consent(value, raw) if attr == "consent_form" else value
    return values


def _parse_q5(text: str, raw: str) -> List[Tuple[Optional[str], RelationKind]]:
    lines = _RELATION_LINE.findall(text)
    if lines:
        return [
            (parse_regulation_id(rid).canonical, RelationKind(kind.capitalize()))
            for rid, kind in lines
        ]
    words = _RELATION_WORD.findall(text)
    if not words:
        raise ParseFailure(Question.Q5.name, raw)
    return [(None, RelationKind(w.capitalize())) for w in words]


def parse_annotation_block(raw: str, question: Question):
    """Parse the answer to one ``question`` out of a model reply.

    Q1 gives a NormType, Q2 a dict of characteristic values, Q3 and Q4 a
    Ternary, Q5 a list of (canonical id or None, RelationKind).
    Raise ParseFailure when the answer cannot be found.
    """
    text = _section(raw, question)
    if question is Question.Q1:
        return _parse_q1(text, raw)
    if question is Question.Q2:
        return _parse_q2(text, raw)
    if question in (Question.Q3, Question.Q4):
        return _parse_ternary(text, raw, question)
    return _parse_q5(text, raw)


def align_relations(
    raw: str, refs: Sequence[RegulationId]
) -> List[ReferenceRelation]:
    """Pair each reference with the kind the model gave it.

    Answers naming the ids are matched by id; otherwise kinds are taken in
    order and their number must equal the number of references.
    """
    parsed = parse_annotation_block(raw, Question.Q5)
    if all(rid is not None for rid, _ in parsed):
        by_id = dict(parsed)
        if all(r.canonical in by_id for r in refs):
            return [ReferenceRelation(r, by_id[r.canonical]) for r in refs]
    kinds = [kind for _, kind in parsed]
    if len(kinds) != len(refs):
        raise ParseFailure(Question.Q5.name, raw)
    return [ReferenceRelation(r, k) for r, k in zip(refs, kinds)]


def parse_characteristics(raw: str) -> CICharacteristics:
    """Build CICharacteristics out of the answers to Q2, Q3 and Q4."""
    values = parse_annotation_block(raw, Question.Q2)
    return CICharacteristics(
        sender_is_subject=parse_annotation_block(raw, Question.Q3),
        recipient_is_subject=parse_annotation_block(raw, Question.Q4),
        **values,  # type: ignore[arg-type]
    )


@dataclass(frozen=True)
class AnnotationTranscript:
    """The exchange that produced (or failed to produce) an annotation."""

    subject: str
    prompt: str
    raw_response: str
    attempts: int
    request_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "attempts": self.attempts,
            "request_hash": self.request_hash,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
        }


def ask_until_parsed(
    gateway,
    prompt: str,
    parse: Callable[[str], T],
    subject: str,
    retry_limit: int = 3,
) -> Tuple[T, AnnotationTranscript]:
    """Ask ``prompt`` until ``parse`` succeeds on the reply.

    Raise AnnotationFailed after ``retry_limit`` unparseable replies.
    """
    if retry_limit < 1:
        raise ArgumentError("retry_limit", retry_limit)
    gateway = as_gateway(gateway)
    reason = ""
    for attempt in range(1, retry_limit + 1):
        resp = gateway.ask(prompt)
        try:
            value = parse(resp.content)
        except ParseFailure as e:
            reason = "cannot parse {}".format(e.question)
            log.warning("%s, attempt %d: %s", subject, attempt, reason)
            continue
        return value, AnnotationTranscript(
            subject=subject,
            prompt=prompt,
            raw_response=resp.content,
            attempts=attempt,
            request_hash=resp.request_hash,
        )
    raise AnnotationFailed(subject, retry_limit, reason)


def classify_specification(
    gateway, spec_text: str, leaf: str = "this regulation", retry_limit: int = 3
) -> NormType:
    """Q1 alone: is the clause a prohibition, a permission or a definition?"""
    if not spec_text.strip():
        raise ArgumentError("spec_text", spec_text)
    prompt = questionnaire_prompt(leaf, spec_text, [])
    norm_type, _ = ask_until_parsed(
        gateway,
        prompt,
        lambda raw: parse_annotation_block(raw, Question.Q1),
        leaf,
        retry_limit,
    )
    return norm_type


def extract_characteristics(
    gateway, text: str, subject: str = "event", retry_limit: int = 3
) -> CICharacteristics:
    """Q2 to Q4 about an event (or any text describing an information flow)."""
    return extract_characteristics_with_transcript(gateway, text, subject, retry_limit)[0]


def extract_characteristics_with_transcript(
    gateway, text: str, subject: str = "event", retry_limit: int = 3
) -> Tuple[CICharacteristics, AnnotationTranscript]:
    if not text.strip():
        raise ArgumentError("text", text)
    return ask_until_parsed(
        gateway, event_questionnaire_prompt(text), parse_characteristics, subject, retry_limit
    )


def annotate_reference_relations(
    gateway,
    spec_text: str,
    refs: Sequence[RegulationId],
    leaf: str = "this regulation",
    retry_limit: int = 3,
) -> List[ReferenceRelation]:
    """Q5 alone: one Support or Exception relation per reference, in order."""
    if not refs:
        return []
    prompt = questionnaire_prompt(leaf, spec_text, [r.canonical for r in refs])
    relations, _ = ask_until_parsed(
        gateway, prompt, lambda raw: align_relations(raw, refs), leaf, retry_limit
    )
    return relations


def _unique(refs: Sequence[RegulationId]) -> List[RegulationId]:
    return list(dict.fromkeys(refs))


def annotate_leaf(
    gateway,
    tree: DocumentTree,
    leaf,
    retry_limit: int = 3,
    annotator: str = "",
) -> Tuple[NormAnnotation, AnnotationTranscript]:
    """Ask the whole questionnaire about one leaf and parse every answer."""
    gateway = as_gateway(gateway)
    node = tree.node(leaf)
    spec = full_specification(tree, node.key)
    if not spec:
        raise AnnotationFailed(node.key, 0, "empty specification")
    refs = _unique(node.references)
    prompt = questionnaire_prompt(node.key, spec, [r.canonical for r in refs])

    def parse(raw: str) -> NormAnnotation:
        norm_type = parse_annotation_block(raw, Question.Q1)
        characteristics = None
        if norm_type is not NormType.GENERAL_DEFINITION:
            characteristics = parse_characteristics(raw)
        relations = align_relations(raw, refs) if refs else []
        return NormAnnotation(
            leaf=node.id,
            norm_type=norm_type,
            characteristics=characteristics,
            reference_relations=tuple(relations),
        )

    annotation, transcript = ask_until_parsed(gateway, prompt, parse, node.key, retry_limit)
    provenance = Provenance(
        annotator=annotator or gateway.model, transcript_key=transcript.request_hash
    )
    return NormAnnotation(
        leaf=annotation.leaf,
        norm_type=annotation.norm_type,
        characteristics=annotation.characteristics,
        reference_relations=annotation.reference_relations,
        provenance=provenance,
    ), transcript


@dataclass
class AnnotationReport:
    transcripts: List[AnnotationTranscript] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)
    flags: Dict[str, List[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "annotated": len(self.transcripts),
            "failures": self.failures,
            "flags": self.flags,
            "transcripts": [t.to_dict() for t in self.transcripts],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as stream:
            stream.write(dumps(self.to_dict(), indent=1) + "\n")


def annotate_tree(
    gateway,
    tree: DocumentTree,
    leaves: Optional[Sequence[str]] = None,
    retry_limit: int = 3,
    max_parallel: int = 4,
    annotator: str = "",
) -> Tuple[List[NormAnnotation], AnnotationReport]:
    """Annotate ``leaves`` (all leaves by default) concurrently.

    Results come back in document order whatever the order of completion.
    Leaves that fail are listed in the report instead.
    """
    gateway = as_gateway(gateway)
    keys = [tree.node(k).key for k in leaves] if leaves is not None else tree.leaves()
    keys = [k for k in keys if k != tree.root]
    results: Dict[str, Tuple[NormAnnotation, AnnotationTranscript]] = {}
    report = AnnotationReport()
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = {
            pool.submit(annotate_leaf, gateway, tree, k, retry_limit, annotator): k
            for k in keys
        }
        for _, future in ShowingProgress(
            as_completed(futures), total=len(futures), label="Leaf"
        ):
            key = futures[future]
            try:
                results[key] = future.result()
            except (AnnotationFailed, GatewayError) as e:
                log.error("Leaf %s not annotated: %s", key, e)
                report.failures[key] = str(e)

    annotations = []
    for key in keys:
        if key not in results:
            continue
        annotation, transcript = results[key]
        annotations.append(annotation)
        report.transcripts.append(transcript)
        flags = annotation.characteristics.flags() if annotation.characteristics else []
        if not annotation.is_norm and annotation.reference_relations:
            flags.append("informational-references")
        if flags:
            report.flags[key] = flags
    return annotations, report
