"""The privacy checklist: an annotated document tree, the role and
attribute graphs and the definition dictionary, plus its JSON persistence.

A checklist is immutable once built or loaded, so it can be shared by the
threads that judge cases.
"""

import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from regcheck.exceptions import (
    CorruptPayload,
    DefinitionNotFound,
    InvalidChecklist,
    MalformedId,
    RegcheckError,
    SchemaVersionMismatch,
)
from regcheck.graphs import AttributeGraph, RoleGraph
from regcheck.regdoc import (
    DocumentTree,
    NodeKey,
    RegulationId,
    RegulationNode,
    full_specification,
    parse_regulation_id,
)
from regcheck.text import collapse, normalize_term
from regcheck.time import dumps

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class NormType(Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    GENERAL_DEFINITION = "GeneralDefinition"


class ConsentForm(Enum):
    NONE = "None"
    CONSENT = "Consent"
    AUTHORIZATION = "Authorization"


class Ternary(Enum):
    YES = "Yes"
    NO = "No"
    NOT_SURE = "NotSure"


class RelationKind(Enum):
    SUPPORT = "Support"
    EXCEPTION = "Exception"


# The text fields of a flow; consent_form makes the ninth characteristic.
TEXT_FIELDS = (
    "sender",
    "sender_role",
    "recipient",
    "recipient_role",
    "subject",
    "subject_role",
    "information_type",
    "purpose",
)
ROLE_FIELDS = ("sender_role", "recipient_role", "subject_role")


@dataclass(frozen=True)
class CICharacteristics:
    """Who sends what about whom to whom, why, and under which consent."""

    sender: Optional[str] = None
    sender_role: Optional[str] = None
    recipient: Optional[str] = None
    recipient_role: Optional[str] = None
    subject: Optional[str] = None
    subject_role: Optional[str] = None
    information_type: Optional[str] = None
    purpose: Optional[str] = None
    consent_form: ConsentForm = ConsentForm.NONE
    sender_is_subject: Ternary = Ternary.NOT_SURE
    recipient_is_subject: Ternary = Ternary.NOT_SURE

    def roles(self) -> List[str]:
        """The sender, recipient and subject roles that are known."""
        return [getattr(self, f) for f in ROLE_FIELDS if getattr(self, f)]

    def flags(self) -> List[str]:
        if self.consent_form is ConsentForm.AUTHORIZATION and not self.purpose:
            return ["authorization-without-purpose"]
        return []

    def to_dict(self) -> dict:
        adict: dict = {f: getattr(self, f) for f in TEXT_FIELDS}
        adict["consent_form"] = self.consent_form.value
        adict["sender_is_subject"] = self.sender_is_subject.value
        adict["recipient_is_subject"] = self.recipient_is_subject.value
        return adict

    @classmethod
    def from_dict(cls, adict: Mapping) -> "CICharacteristics":
        return cls(
            consent_form=ConsentForm(adict["consent_form"]),
            sender_is_subject=Ternary(adict["sender_is_subject"]),
            recipient_is_subject=Ternary(adict["recipient_is_subject"]),
            **{f: adict.get(f) for f in TEXT_FIELDS},
        )


@dataclass(frozen=True)
class ReferenceRelation:
    target: RegulationId
    kind: RelationKind
    dangling: bool = False


@dataclass(frozen=True)
class Provenance:
    annotator: str = ""
    transcript_key: str = ""


@dataclass(frozen=True)
class NormAnnotation:
    """Classification of one leaf, with its CI characteristics unless the
    leaf is a general definition.
    """

    leaf: RegulationId
    norm_type: NormType
    characteristics: Optional[CICharacteristics] = None
    reference_relations: Tuple[ReferenceRelation, ...] = ()
    provenance: Provenance = field(default_factory=Provenance)
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        is_definition = self.norm_type is NormType.GENERAL_DEFINITION
        if is_definition == (self.characteristics is not None):
            raise InvalidChecklist(
                "{}: characteristics go with norms, not with general definitions".format(
                    self.leaf
                ),
                leaf=self.leaf.canonical,
            )

    @property
    def is_norm(self) -> bool:
        return self.norm_type is not NormType.GENERAL_DEFINITION

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf.canonical,
            "norm_type": self.norm_type.value,
            "characteristics": self.characteristics.to_dict()
            if self.characteristics
            else None,
            "reference_relations": [
                {"target": r.target.canonical, "kind": r.kind.value, "dangling": r.dangling}
                for r in self.reference_relations
            ],
            "provenance": {
                "annotator": self.provenance.annotator,
                "transcript_key": self.provenance.transcript_key,
            },
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, adict: Mapping) -> "NormAnnotation":
        chars = adict.get("characteristics")
        return cls(
            leaf=parse_regulation_id(adict["leaf"]),
            norm_type=NormType(adict["norm_type"]),
            characteristics=CICharacteristics.from_dict(chars) if chars else None,
            reference_relations=tuple(
                ReferenceRelation(
                    target=parse_regulation_id(r["target"]),
                    kind=RelationKind(r["kind"]),
                    dangling=bool(r.get("dangling", False)),
                )
                for r in adict.get("reference_relations", ())
            ),
            provenance=Provenance(**adict.get("provenance", {})),
            flags=tuple(adict.get("flags", ())),
        )


class DefinitionDictionary:
    """Terms introduced by the regulation, looked up case-insensitively."""

    def __init__(self, entries: Union[Mapping[str, str], Iterable[Tuple[str, str]]] = ()):
        self.entries: Dict[str, str] = {}
        items = entries.items() if isinstance(entries, Mapping) else entries
        for term, definition in items:
            self.add(term, definition)

    def add(self, term: str, definition: str) -> None:
        key = normalize_term(term)
        if not key:
            raise InvalidChecklist("Empty definition term")
        definition = collapse(definition)
        if key in self.entries and self.entries[key] != definition:
            raise InvalidChecklist(
                'Term "{}" is defined twice'.format(key), term=key
            )
        self.entries[key] = definition

    def lookup(self, term: str) -> str:
        try:
            return self.entries[normalize_term(term)]
        except KeyError:
            raise DefinitionNotFound(term)

    def __contains__(self, term) -> bool:
        return normalize_term(term) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, DefinitionDictionary) and self.entries == other.entries

    def __repr__(self):
        return "<DefinitionDictionary with {} terms>".format(len(self))


_DEFINITION = re.compile(
    r"^(?:\([0-9A-Za-z]+\)\s*)?(?P<term>[^.;:]{1,80}?)\s+(?:means|refers to)\s+(?P<text>.+)$",
    re.IGNORECASE | re.DOTALL,
)


def definitions_from_tree(tree: DocumentTree, section: str = "164.103") -> DefinitionDictionary:
    """Harvest "<Term> means <text>" clauses below a definitions section."""
    top = tree.node(section)
    found = DefinitionDictionary()
    stack = list(reversed(top.children))
    while stack:
        node = tree.nodes[stack.pop()]
        stack.extend(reversed(node.children))
        match = _DEFINITION.match(node.text)
        if match:
            found.add(match.group("term"), match.group("text"))
    log.info("Found %d definitions under %s", len(found), top.key)
    return found


def read_definitions(path: str) -> DefinitionDictionary:
    """Read a two-column ``term<TAB>definition`` file."""
    found = DefinitionDictionary()
    with open(path, encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            term, sep, definition = line.rstrip("\n").partition("\t")
            if not sep:
                raise InvalidChecklist(
                    "{}:{} is not term<TAB>definition".format(path, lineno),
                    line=lineno,
                )
            found.add(term, definition)
    return found


@dataclass(frozen=True)
class Checklist:
    tree: DocumentTree
    annotations: Dict[NodeKey, NormAnnotation] = field(default_factory=dict)
    role_graph: RoleGraph = field(default_factory=RoleGraph.empty)
    attribute_graph: AttributeGraph = field(default_factory=AttributeGraph.empty)
    definitions: DefinitionDictionary = field(default_factory=DefinitionDictionary)

    def __post_init__(self):
        for key, annotation in self.annotations.items():
            if key != annotation.leaf.canonical:
                raise InvalidChecklist(
                    "Annotation stored under {} is for {}".format(key, annotation.leaf)
                )
            node = self.tree.nodes.get(key)
            if node is None or node.children:
                raise InvalidChecklist(
                    "Annotated {} is not a leaf of the tree".format(key), leaf=key
                )

    def specification(self, leaf: Union[str, RegulationId]) -> str:
        return full_specification(self.tree, leaf)

    def annotation(self, leaf: Union[str, RegulationId]) -> Optional[NormAnnotation]:
        return self.annotations.get(self.tree.node(leaf).key)


def verify_id(checklist: Checklist, rid: Union[RegulationId, str]) -> bool:
    """Tell whether ``rid`` names a node of the checklist tree."""
    if not isinstance(rid, RegulationId):
        try:
            rid = parse_regulation_id(rid)
        except MalformedId:
            return False
    return rid.canonical in checklist.tree.nodes


def norms_by_type(checklist: Checklist, t: NormType) -> List[RegulationId]:
    """Annotated leaves of type ``t``, in document order."""
    found = []
    for key in checklist.tree.leaves():
        annotation = checklist.annotations.get(key)
        if annotation is not None and annotation.norm_type is t:
            found.append(annotation.leaf)
    return found


def norm_leaves(checklist: Checklist) -> List[RegulationId]:
    """Positive and negative norms, in document order."""
    return [
        a.leaf
        for a in (checklist.annotations.get(k) for k in checklist.tree.leaves())
        if a is not None and a.is_norm
    ]


def lookup_definition(checklist: Checklist, term: str) -> str:
    return checklist.definitions.lookup(term)


def build_checklist(
    tree: DocumentTree,
    annotations: Iterable[NormAnnotation] = (),
    role_graph: Optional[RoleGraph] = None,
    attribute_graph: Optional[AttributeGraph] = None,
    definitions: Optional[DefinitionDictionary] = None,
) -> Checklist:
    """Assemble a Checklist, flagging reference targets absent from the tree."""
    stored: Dict[NodeKey, NormAnnotation] = {}
    for annotation in annotations:
        relations = []
        for relation in annotation.reference_relations:
            dangling = relation.target.canonical not in tree.nodes
            if dangling:
                log.warning(
                    "%s refers to %s, which is not in the tree",
                    annotation.leaf,
                    relation.target,
                )
            relations.append(replace(relation, dangling=dangling))
        flags = list(annotation.flags)
        if annotation.characteristics is not None:
            flags.extend(annotation.characteristics.flags())
        if not annotation.is_norm and relations:
            flags.append("informational-references")
        for flag in flags:
            if flag not in annotation.flags:
                log.warning("%s flagged: %s", annotation.leaf, flag)
        stored[annotation.leaf.canonical] = replace(
            annotation,
            reference_relations=tuple(relations),
            flags=tuple(dict.fromkeys(flags)),
        )
    return Checklist(
        tree=tree,
        annotations=stored,
        role_graph=role_graph or RoleGraph.empty(),
        attribute_graph=attribute_graph or AttributeGraph.empty(),
        definitions=definitions or DefinitionDictionary(),
    )


def checklist_counts(checklist: Checklist) -> Dict[str, int]:
    counts = {t.value: len(norms_by_type(checklist, t)) for t in NormType}
    counts.update(
        {
            "annotated": len(checklist.annotations),
            "roles": checklist.role_graph.graph.number_of_nodes(),
            "role_relations": checklist.role_graph.graph.number_of_edges(),
            "attributes": checklist.attribute_graph.graph.number_of_nodes(),
            "attribute_relations": checklist.attribute_graph.graph.number_of_edges(),
            "definitions": len(checklist.definitions),
        }
    )
    return counts


def checklist_to_dict(checklist: Checklist) -> dict:
    tree = checklist.tree
    return {
        "schema_version": SCHEMA_VERSION,
        "tree": {
            "root": tree.root,
            "nodes": [
                {
                    "key": key,
                    "text": tree.nodes[key].text,
                    "children": list(tree.nodes[key].children),
                    "references": [r.canonical for r in tree.nodes[key].references],
                    "parent": tree.nodes[key].parent,
                }
                for key in tree.depth_first()
            ],
        },
        "annotations": [
            checklist.annotations[k].to_dict()
            for k in tree.leaves()
            if k in checklist.annotations
        ],
        "role_graph": checklist.role_graph.to_dict(),
        "attribute_graph": checklist.attribute_graph.to_dict(),
        "definitions": dict(checklist.definitions.entries),
    }


def _check_structure(root: str, nodes: Mapping[str, RegulationNode]) -> None:
    """Raise CorruptPayload unless ``nodes`` form one tree under ``root``."""
    if root not in nodes or nodes[root].parent is not None:
        raise CorruptPayload("Invalid checklist: bad root {!r}".format(root))
    for key, node in nodes.items():
        if key != root and node.parent not in nodes:
            raise CorruptPayload("Invalid checklist: {} has no parent".format(key))
        for child in node.children:
            if child not in nodes or nodes[child].parent != key:
                raise CorruptPayload(
                    "Invalid checklist: {} lists a bad child {}".format(key, child)
                )
    seen = {root}
    stack = [root]
    while stack:
        for child in nodes[stack.pop()].children:
            if child in seen:
                raise CorruptPayload("Invalid checklist: {} is reached twice".format(child))
            seen.add(child)
            stack.append(child)
    if len(seen) != len(nodes):
        stray = sorted(set(nodes) - seen)
        raise CorruptPayload("Invalid checklist: unreachable nodes {}".format(stray[:5]))


def checklist_from_dict(adict: Mapping) -> Checklist:
    if not isinstance(adict, Mapping):
        raise CorruptPayload("A checklist must be a JSON object.")
    version = adict.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(version, SCHEMA_VERSION)
    try:
        root = adict["tree"]["root"]
        nodes = {}
        for n in adict["tree"]["nodes"]:
            key = NodeKey(n["key"])
            nodes[key] = RegulationNode(
                key=key,
                id=None if key == root else parse_regulation_id(key),
                text=n["text"],
                children=tuple(NodeKey(c) for c in n["children"]),
                references=tuple(parse_regulation_id(r) for r in n["references"]),
                parent=n["parent"],
            )
        _check_structure(root, nodes)
        tree = DocumentTree(root=NodeKey(root), nodes=nodes)
        annotations = [NormAnnotation.from_dict(a) for a in adict["annotations"]]
        return Checklist(
            tree=tree,
            annotations={a.leaf.canonical: a for a in annotations},
            role_graph=RoleGraph.from_dict(adict["role_graph"]),
            attribute_graph=AttributeGraph.from_dict(adict["attribute_graph"]),
            definitions=DefinitionDictionary(adict["definitions"]),
        )
    except RegcheckError as e:
        if isinstance(e, (CorruptPayload, SchemaVersionMismatch)):
            raise
        raise CorruptPayload("Invalid checklist: {}".format(e))
    except (KeyError, TypeError, ValueError, AttributeError, IndexError) as e:
        raise CorruptPayload("Invalid checklist: {!r}".format(e))


def save_checklist(checklist: Checklist, sink: Union[str, IO[str]]) -> None:
    """Write the versioned JSON document to a path or text stream."""
    text = dumps(checklist_to_dict(checklist), indent=1) + "\n"
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as stream:
            stream.write(text)
    else:
        sink.write(text)


def load_checklist(source: Union[str, IO[str]]) -> Checklist:
    """Read what :py:func:`save_checklist` wrote."""
    if isinstance(source, str):
        with open(source, encoding="utf-8") as stream:
            text = stream.read()
    else:
        text = source.read()
    try:
        adict = json.loads(text)
    except ValueError as e:
        raise CorruptPayload("Checklist is not valid JSON: {}".format(e))
    return checklist_from_dict(adict)
