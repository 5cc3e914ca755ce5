"""Parse plain-text regulation exports into a document tree.

The expected input layout is one clause per line, each clause starting with
its full identifier, CFR style::

    § 164.502 Uses and disclosures of protected health information.
    164.502(a) Standard. A covered entity may not use or disclose ...
    164.502(a)(1) Permitted uses and disclosures. ...

The depth of a clause is derived from its identifier alone: a child id
extends its parent id by exactly one parenthesized segment.  Lines that do
not start with an identifier continue the previous clause.  Identifiers
that only show up as prefixes of deeper ones become empty container nodes.

Scraping the HTML of the CFR website is not done here; export the text
first, then feed it to :py:func:`parse_document`.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NewType, Optional, Tuple, Union

from regcheck.exceptions import (
    ArgumentError,
    DuplicateIdentifier,
    MalformedId,
    NoIdentifiersFound,
    NotALeaf,
    UnknownNode,
)

log = logging.getLogger(__name__)

# Add a semantic typing layer to node keys: a canonical id or the root label
NodeKey = NewType("NodeKey", str)

ID_PATTERN = r"[0-9]+\.[0-9]+(?:\([0-9A-Za-z]+\))*"
_FULL_ID = re.compile(r"([0-9]+)\.([0-9]+)((?:\([0-9A-Za-z]+\))*)")
_SEGMENT = re.compile(r"\(([0-9A-Za-z]+)\)")
_REFERENCE = re.compile(r"(?<![0-9A-Za-z.])" + ID_PATTERN)
_CLAUSE = re.compile(r"^\s*§?\s*(" + ID_PATTERN + r")(?=\s|$)\s*(.*?)\s*$")


@dataclass(frozen=True)
class RegulationId:
    """Structured regulation identifier such as ``164.502(a)(1)(i)``.

    Segments are stored lowercase, which makes the canonical rendering
    (and therefore id lookups) case-insensitive.
    """

    part: int
    section: int
    segments: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.part < 1 or self.section < 1:
            raise MalformedId(self.canonical, "part and section must be positive")
        for seg in self.segments:
            if not seg or not seg.isalnum() or not seg.isascii():
                raise MalformedId(self.canonical, "bad segment ({})".format(seg))
            if seg != seg.lower():
                raise MalformedId(self.canonical, "segments must be lowercase")

    @property
    def canonical(self) -> NodeKey:
        return NodeKey(
            "{}.{}".format(self.part, self.section)
            + "".join("(" + s + ")" for s in self.segments)
        )

    def __str__(self):
        return self.canonical

    def parent(self) -> Optional["RegulationId"]:
        """Return the id this one extends, or None for a section id."""
        if not self.segments:
            return None
        return RegulationId(self.part, self.section, self.segments[:-1])

    def extends(self, other: "RegulationId") -> bool:
        """Tell whether self is ``other`` plus exactly one segment."""
        return self.parent() == other

    def sort_key(self) -> tuple:
        """Document order: numbers before letters, numbers compared as ints."""
        return (
            self.part,
            self.section,
            tuple((0, int(s), "") if s.isdigit() else (1, 0, s) for s in self.segments),
        )


@dataclass(frozen=True)
class RegulationNode:
    """One clause of the tree. The root has neither ``id`` nor ``parent``."""

    key: NodeKey
    id: Optional[RegulationId]
    text: str = ""
    children: Tuple[NodeKey, ...] = ()
    references: Tuple[RegulationId, ...] = ()
    parent: Optional[NodeKey] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class TreeStats:
    """Counts over the whole tree, dummy root included."""

    internal_count: int = 0
    leaf_count: int = 0
    edge_count: int = 0
    cross_reference_count: int = 0
    top_level_count: int = 0

    def as_dict(self) -> Dict[str, int]:  # noqa
        return {
            "internal": self.internal_count,
            "leaf": self.leaf_count,
            "edge": self.edge_count,
            "cross_references": self.cross_reference_count,
            "top_level": self.top_level_count,
        }


@dataclass(frozen=True)
class DocumentTree:
    """The regulation hierarchy, immutable once parsed."""

    root: NodeKey
    nodes: Dict[NodeKey, RegulationNode]
    stats: TreeStats = field(default=None, compare=False, repr=False)  # type: ignore

    def __post_init__(self):
        if self.stats is None:
            object.__setattr__(self, "stats", tree_stats(self))

    def __contains__(self, key) -> bool:
        return _key_of(key) in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, key: Union[str, RegulationId]) -> RegulationNode:
        """Return the node for a key or id; raise UnknownNode if absent."""
        try:
            return self.nodes[_key_of(key)]
        except (KeyError, MalformedId):
            raise UnknownNode(str(key))

    def depth_first(self) -> Iterator[NodeKey]:
        """Generate node keys in document (pre)order, root first."""
        stack = [self.root]
        while stack:
            key = stack.pop()
            yield key
            stack.extend(reversed(self.nodes[key].children))

    def leaves(self) -> List[NodeKey]:
        """Leaf keys in document order."""
        return [k for k in self.depth_first() if self.nodes[k].is_leaf]

    def path(self, key: Union[str, RegulationId]) -> List[RegulationNode]:
        """Nodes from the root down to ``key``, both included."""
        node = self.node(key)
        path = [node]
        while node.parent is not None:
            node = self.nodes[node.parent]
            path.append(node)
        path.reverse()
        return path


def _key_of(key: Union[str, RegulationId]) -> NodeKey:
    if isinstance(key, RegulationId):
        return key.canonical
    try:
        return parse_regulation_id(key).canonical
    except MalformedId:
        return NodeKey(key)  # maybe the root label


def _diagnose(text: str) -> str:
    if "." not in text:
        return "no dot"
    if text.count("(") != text.count(")"):
        return "unbalanced parens"
    if "()" in text:
        return "empty segment"
    return "does not match the identifier grammar"


def parse_regulation_id(s: str) -> RegulationId:
    """Parse ``s`` into a RegulationId, or raise MalformedId.

    Surrounding whitespace and section signs are ignored, so
    ``"§ 164.508"`` parses the same as ``"164.508"``.
    """
    text = s.strip().lstrip("§").strip()
    if not text:
        raise MalformedId(s, "empty")
    match = _FULL_ID.fullmatch(text)
    if match is None:
        raise MalformedId(s, _diagnose(text))
    return RegulationId(
        part=int(match.group(1)),
        section=int(match.group(2)),
        segments=tuple(seg.lower() for seg in _SEGMENT.findall(match.group(3))),
    )


def extract_references(text: str) -> List[RegulationId]:
    """Return every identifier cited in ``text``, in order, repeats included."""
    found = []
    for match in _REFERENCE.finditer(text):
        try:
            found.append(parse_regulation_id(match.group(0)))
        except MalformedId:  # e.g. "0.5" is not a valid part
            continue
    return found


class _Draft:
    """Mutable node used while parsing."""

    __slots__ = ("id", "parts", "children", "parent", "explicit")

    def __init__(self, rid: Optional[RegulationId], parent: Optional[str]):
        self.id = rid
        self.parts: List[str] = []
        self.children: List[str] = []
        self.parent = parent
        self.explicit = False


def parse_document(text: str, root_label: str = "HIPAA") -> DocumentTree:
    """Build a DocumentTree out of a plain-text regulation export."""
    if _FULL_ID.fullmatch(root_label.strip()):
        raise ArgumentError("root_label", root_label)
    drafts: Dict[str, _Draft] = {root_label: _Draft(None, None)}

    def ensure(rid: RegulationId) -> _Draft:
        key = rid.canonical
        if key not in drafts:
            up = rid.parent()
            parent_key = root_label if up is None else ensure(up).id.canonical
            drafts[key] = _Draft(rid, parent_key)
            drafts[parent_key].children.append(key)
        return drafts[key]

    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        match = _CLAUSE.match(line)
        if match:
            rid = parse_regulation_id(match.group(1))
            existing = drafts.get(rid.canonical)
            if existing is not None and existing.explicit:
                raise DuplicateIdentifier(rid.canonical, lineno)
            current = ensure(rid)
            current.explicit = True
            if match.group(2):
                current.parts.append(match.group(2))
        elif current is None:
            log.debug("Ignoring preamble line %d: %s", lineno, line.strip()[:60])
        else:
            current.parts.append(line.strip())

    if len(drafts) == 1:
        raise NoIdentifiersFound()

    nodes = {}
    for key, draft in drafts.items():
        body = " ".join(draft.parts)
        nodes[NodeKey(key)] = RegulationNode(
            key=NodeKey(key),
            id=draft.id,
            text=body,
            children=tuple(NodeKey(c) for c in draft.children),
            references=tuple(extract_references(body)),
            parent=draft.parent,
        )
    tree = DocumentTree(root=NodeKey(root_label), nodes=nodes)
    log.info(
        "Parsed %d clauses under %s (%d leaves, %d cross references)",
        len(nodes) - 1,
        root_label,
        tree.stats.leaf_count,
        tree.stats.cross_reference_count,
    )
    return tree


def render_document(tree: DocumentTree) -> str:
    """Write the tree back in the plain-text layout, one node per line."""
    lines = []
    for key in tree.depth_first():
        if key == tree.root:
            continue
        lines.append((key + " " + tree.nodes[key].text).rstrip())
    return "\n".join(lines) + "\n"


def full_specification(tree: DocumentTree, leaf: Union[str, RegulationId]) -> str:
    """Concatenate the texts on the path from the root down to ``leaf``."""
    node = tree.node(leaf)
    if node.children:
        raise NotALeaf(node.key)
    return " ".join(n.text for n in tree.path(node.key) if n.text)


def tree_stats(tree: DocumentTree) -> TreeStats:
    """Count internal nodes, leaves, subsumption edges and cross references."""
    internal = leaves = edges = refs = 0
    for node in tree.nodes.values():
        if node.children:
            internal += 1
        else:
            leaves += 1
        edges += len(node.children)
        refs += len(node.references)
    return TreeStats(
        internal_count=internal,
        leaf_count=leaves,
        edge_count=edges,
        cross_reference_count=refs,
        top_level_count=len(tree.nodes[tree.root].children),
    )


def clause_text(tree: DocumentTree, key: Union[str, RegulationId]) -> str:
    """Text of the path down to ``key`` followed by its whole subtree.

    For a leaf this is its full specification.
    """
    node = tree.node(key)
    texts = [n.text for n in tree.path(node.key)]
    stack = list(reversed(node.children))
    while stack:
        below = tree.nodes[stack.pop()]
        texts.append(below.text)
        stack.extend(reversed(below.children))
    return " ".join(t for t in texts if t)
