"""Exception classes for every layer of regcheck.

All of them descend from :py:class:`RegcheckError`, which (like a web
``Problem``) carries a message for humans plus keyword details that can be
dumped with ``to_dict()``.  The command line catches ``RegcheckError`` and
turns it into exit code 1.
"""

from typing import Any


class RegcheckError(Exception):
    """Base class for application-level errors."""

    def __init__(self, msg: str = "", **kw) -> None:  # noqa
        self.kw = kw
        self.kw["error_msg"] = msg or self.__doc__ or type(self).__name__
        super().__init__(self.kw["error_msg"])

    @property
    def error_msg(self) -> str:  # noqa
        return self.kw["error_msg"]

    def to_dict(self):  # noqa
        return dict(self.kw, error_type=type(self).__name__)

    def __repr__(self):
        return "<{} {}>".format(type(self).__name__, self.error_msg)

    def __str__(self):
        return self.error_msg


class ArgumentError(RegcheckError, ValueError):
    """Use this exception to complain that ``arg`` doesn't accept ``val``."""

    def __init__(self, arg: str, val: Any) -> None:  # noqa
        self.arg = arg
        self.val = val
        shown = str(val)
        if len(shown) > 43:
            shown = shown[:40] + "..."
        super().__init__(
            'Argument "{0}" does not accept value "{1}"'.format(arg, shown),
            arg=arg,
        )


class ConfigurationError(RegcheckError):
    """A required setting is missing or has an unusable value."""


# regdoc
class MalformedId(RegcheckError, ValueError):
    """Not a regulation identifier."""

    def __init__(self, text: str, reason: str = "") -> None:  # noqa
        self.text = text
        msg = 'Malformed regulation id "{}"'.format(text)
        if reason:
            msg += ": " + reason
        super().__init__(msg, text=text, reason=reason)


class NoIdentifiersFound(RegcheckError):
    """The regulation text contains no clause starting with an identifier."""


class DuplicateIdentifier(RegcheckError):  # noqa
    def __init__(self, key: str, line: int) -> None:  # noqa
        self.key = key
        self.line = line
        super().__init__(
            "Identifier {} appears twice (again on line {})".format(key, line),
            key=key,
            line=line,
        )


class UnknownNode(RegcheckError, KeyError):  # noqa
    def __init__(self, key: str) -> None:  # noqa
        self.key = key
        super().__init__("No such node: {}".format(key), key=key)


class NotALeaf(RegcheckError):  # noqa
    def __init__(self, key: str) -> None:  # noqa
        self.key = key
        super().__init__("Node {} has children".format(key), key=key)


# checklist
class InvalidChecklist(RegcheckError):
    """The checklist parts are inconsistent with each other."""


class DefinitionNotFound(RegcheckError, KeyError):  # noqa
    def __init__(self, term: str) -> None:  # noqa
        self.term = term
        super().__init__('No definition for "{}"'.format(term), term=term)


class SchemaVersionMismatch(RegcheckError):  # noqa
    def __init__(self, found: Any, expected: int) -> None:  # noqa
        self.found = found
        self.expected = expected
        super().__init__(
            "Schema version {} cannot be read; expected {}".format(found, expected),
            found=found,
            expected=expected,
        )


class CorruptPayload(RegcheckError):
    """The persisted document could not be decoded."""


# llm_gateway
class GatewayError(RegcheckError):
    """Base class for chat and embedding provider failures."""


class Transport(GatewayError):
    """The provider could not be reached."""


class RateLimited(GatewayError):
    """The provider asked us to slow down (HTTP 429)."""


class ProviderError(GatewayError):  # noqa
    def __init__(self, status: int, body: str) -> None:  # noqa
        self.status = status
        self.body = body
        super().__init__(
            "Provider answered {}: {}".format(status, body[:200]),
            status=status,
            body=body,
        )


class UnscriptedPrompt(GatewayError):  # noqa
    def __init__(self, prompt: str) -> None:  # noqa
        self.prompt = prompt
        super().__init__(
            "No scripted reply matches prompt: {}".format(prompt[:80]),
            prompt=prompt,
        )


# annotate
class ParseFailure(RegcheckError):  # noqa
    def __init__(self, question: str, raw: str) -> None:  # noqa
        self.question = question
        self.raw = raw
        super().__init__(
            "Could not parse answer to {}".format(question),
            question=question,
        )


class AnnotationFailed(RegcheckError):  # noqa
    def __init__(self, leaf: str, attempts: int, reason: str = "") -> None:  # noqa
        self.leaf = leaf
        self.attempts = attempts
        super().__init__(
            "Annotation of {} failed after {} attempts: {}".format(
                leaf, attempts, reason
            ),
            leaf=leaf,
            attempts=attempts,
            reason=reason,
        )


# graphs
class CyclicTaxonomy(RegcheckError):  # noqa
    def __init__(self, cycle) -> None:  # noqa
        self.cycle = list(cycle)
        super().__init__(
            "Taxonomy hypernyms form a cycle: " + " -> ".join(self.cycle),
            cycle=self.cycle,
        )


class CycleDetected(RegcheckError):  # noqa
    def __init__(self, cycle) -> None:  # noqa
        self.cycle = [tuple(edge[:2]) for edge in cycle]
        super().__init__(
            "Subsumption records form a cycle: "
            + ", ".join("{} -> {}".format(a, b) for a, b in self.cycle),
        )


class EmptyGraph(RegcheckError):
    """The graph has no vertices."""


# retrieve
class EmptyCorpus(RegcheckError):
    """Cannot build an index without documents."""


class UnknownDoc(RegcheckError, KeyError):  # noqa
    def __init__(self, doc: str) -> None:  # noqa
        self.doc = doc
        super().__init__("Document not in index: {}".format(doc), doc=doc)


class DimensionMismatch(RegcheckError, ValueError):
    """Vectors of different dimension."""


class ZeroVector(RegcheckError, ValueError):
    """Cosine similarity is undefined for a zero vector."""


# evaluation
class MalformedRecord(RegcheckError):  # noqa
    def __init__(self, line: int, reason: str) -> None:  # noqa
        self.line = line
        self.reason = reason
        super().__init__(
            "Malformed record on line {}: {}".format(line, reason),
            line=line,
            reason=reason,
        )


class JudgmentCaseMismatch(RegcheckError):
    """Judgments and cases do not correspond one to one."""
