"""Role and attribute subsumption graphs.

Both graphs are networkx DiGraphs whose edges point from the subsumed
vertex to the subsuming one (child -> parent), so "x is subsumed by y"
means that y is reachable from x.

The role graph is grown from a taxonomy: every role mentioned in the
annotations is looked up and its hypernyms are appended recursively until
the role root ``person.n.01``.  Roles that a regulation defines in terms of
other roles (e.g. *covered entity*) are added on top, with an edge from
each member role.
"""

import logging
import re
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
)

import networkx as nx

from regcheck.exceptions import (
    ArgumentError,
    ConfigurationError,
    CycleDetected,
    CyclicTaxonomy,
    EmptyGraph,
    ZeroVector,
)
from regcheck.text import normalize_term

log = logging.getLogger(__name__)

ROLE_ROOT = "person.n.01"
ONTOLOGY_KINDS = ("class-class", "class-individual")
_SENSE_SUFFIX = re.compile(r"\.[a-z]\.[0-9]+$")


def role_text(label: str) -> str:
    """Human text of a vertex label: ``health_care_provider.n.01`` becomes
    ``health care provider``.
    """
    return _SENSE_SUFFIX.sub("", label).replace("_", " ")


class TaxonomyProvider(Protocol):
    """Where role hypernyms come from."""

    def hypernyms(self, label: str) -> List[str]:
        ...

    def lookup(self, surface: str) -> List[str]:
        ...


class TableTaxonomy:
    """A taxonomy held in memory, typically read from a fixture file."""

    def __init__(self, parents: Mapping[str, Sequence[str]]):
        self.parents: Dict[str, List[str]] = {
            normalize_term(k): [normalize_term(p) for p in v]
            for k, v in parents.items()
        }
        self.labels = set(self.parents)
        for ps in self.parents.values():
            self.labels.update(ps)

    @classmethod
    def from_records(cls, pairs: Iterable[Tuple[str, str]]) -> "TableTaxonomy":
        parents: Dict[str, List[str]] = {}
        for child, parent in pairs:
            bucket = parents.setdefault(child, [])
            if parent not in bucket:
                bucket.append(parent)
        return cls(parents)

    @classmethod
    def from_file(cls, path: str) -> "TableTaxonomy":
        """Read a file of ``child<TAB>parent`` lines."""
        return cls.from_records(
            (row[0], row[1]) for row in _read_tsv(path, min_columns=2)
        )

    def hypernyms(self, label: str) -> List[str]:
        return list(self.parents.get(label, ()))

    def lookup(self, surface: str) -> List[str]:
        surface = normalize_term(surface)
        if surface in self.labels:
            return [surface]
        return sorted(lab for lab in self.labels if role_text(lab) == surface)


class WordNetTaxonomy:
    """Live taxonomy backed by the WordNet corpus shipped with nltk.

    Requires ``pip install regcheck[wordnet]`` and the downloaded corpus.
    Labels are synset names such as ``surgeon.n.01``.
    """

    def __init__(self, wordnet=None):
        if wordnet is None:
            try:
                from nltk.corpus import wordnet
            except ImportError:
                raise ConfigurationError(
                    "WordNetTaxonomy needs nltk: pip install regcheck[wordnet]"
                )
        self.wn = wordnet

    def lookup(self, surface: str) -> List[str]:
        word = normalize_term(surface).replace(" ", "_")
        return [ss.name() for ss in self.wn.synsets(word, pos=self.wn.NOUN)]

    def hypernyms(self, label: str) -> List[str]:
        synset = self.wn.synset(label)
        return [h.name() for h in synset.hypernyms() + synset.instance_hypernyms()]


class SubsumptionGraph:
    """Read-only wrapper around a frozen child -> parent DiGraph."""

    def __init__(
        self,
        graph: nx.DiGraph,
        root: Optional[str] = None,
        unresolved: Iterable[str] = (),
        aliases: Optional[Mapping[str, str]] = None,
    ):
        self.graph = nx.freeze(graph)
        self.root = root
        self.unresolved: FrozenSet[str] = frozenset(unresolved)
        self.aliases: Dict[str, str] = dict(aliases or {})

    @property
    def vertices(self) -> FrozenSet[str]:
        return frozenset(self.graph.nodes)

    @property
    def edges(self) -> FrozenSet[Tuple[str, str]]:
        return frozenset(self.graph.edges)

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def __contains__(self, label) -> bool:
        return self.label_of(label) in self.graph

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "<{} {} vertices, {} edges>".format(
            type(self).__name__,
            self.graph.number_of_nodes(),
            self.graph.number_of_edges(),
        )

    def label_of(self, surface: str) -> str:
        """Vertex label for a role string as found in annotations."""
        key = normalize_term(surface)
        return self.aliases.get(key, key)

    def parents(self, label: str) -> List[str]:
        return sorted(self.graph.successors(self.label_of(label)))

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "vertices": sorted(self.graph.nodes),
            "edges": [list(e) for e in sorted(self.graph.edges)],
            "unresolved": sorted(self.unresolved),
            "aliases": dict(sorted(self.aliases.items())),
        }

    @classmethod
    def from_dict(cls, adict: dict):
        g = nx.DiGraph()
        g.add_nodes_from(adict["vertices"])
        g.add_edges_from(tuple(e[:2]) for e in adict["edges"])
        return cls(
            g,
            root=adict.get("root"),
            unresolved=adict.get("unresolved", ()),
            aliases=adict.get("aliases"),
        )


class RoleGraph(SubsumptionGraph):
    """Roles of stakeholders; every vertex reaches ``person.n.01`` unless
    it is listed in ``unresolved``.
    """

    @classmethod
    def empty(cls) -> "RoleGraph":
        g = nx.DiGraph()
        g.add_node(ROLE_ROOT)
        return cls(g, root=ROLE_ROOT)


class AttributeGraph(SubsumptionGraph):
    """Information types; each edge carries its ``kind``."""

    def to_dict(self) -> dict:
        adict = super().to_dict()
        adict["edges"] = [
            [u, v, self.graph.edges[u, v].get("kind", "class-class")]
            for u, v in sorted(self.graph.edges)
        ]
        return adict

    @classmethod
    def from_dict(cls, adict: dict) -> "AttributeGraph":
        return ingest_attribute_ontology(
            [tuple(e) for e in adict["edges"]], vertices=adict["vertices"]
        )

    @classmethod
    def empty(cls) -> "AttributeGraph":
        return cls(nx.DiGraph())


def _read_tsv(path: str, min_columns: int) -> List[List[str]]:
    rows = []
    with open(path, encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            row = [c.strip() for c in line.split("\t")]
            if len(row) < min_columns:
                raise ArgumentError("{}:{}".format(path, lineno), line)
            rows.append(row)
    return rows


def read_ontology_file(path: str) -> List[Tuple[str, str, str]]:
    """Read ``child<TAB>parent<TAB>kind`` lines; kind defaults to class-class."""
    return [
        (row[0], row[1], row[2] if len(row) > 2 and row[2] else "class-class")
        for row in _read_tsv(path, min_columns=2)
    ]


def read_defined_roles(path: str) -> Dict[str, List[str]]:
    """Read ``name<TAB>member`` lines into {defined role: member roles}."""
    defined: Dict[str, List[str]] = {}
    for row in _read_tsv(path, min_columns=2):
        defined.setdefault(normalize_term(row[0]), []).append(normalize_term(row[1]))
    return defined


def _find_cycle(g: nx.DiGraph) -> list:
    try:
        return nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return []


def _check_taxonomy(g: nx.DiGraph) -> None:
    cycle = _find_cycle(g)
    if cycle:
        raise CyclicTaxonomy([u for u, _ in cycle] + [cycle[0][0]])


def build_role_graph(
    roles: Iterable[str],
    tax: TaxonomyProvider,
    defined_roles: Optional[Mapping[str, Sequence[str]]] = None,
) -> RoleGraph:
    """Chain every role to ``person.n.01`` through ``tax``.

    A role string is looked up in the taxonomy and the first sense is
    taken.  Defined roles become vertices with an edge from each member;
    they are themselves attached under the nearest common ancestors of
    their members, which makes them reach the root too.
    """
    g = nx.DiGraph()
    g.add_node(ROLE_ROOT)
    aliases: Dict[str, str] = {}

    def chain(label: str) -> None:
        pending = [label]
        while pending:
            current = pending.pop()
            for parent in tax.hypernyms(current):
                if not g.has_edge(current, parent):
                    fresh = parent not in g
                    g.add_edge(current, parent)
                    if fresh:
                        pending.append(parent)

    def resolve(surface: str) -> str:
        key = normalize_term(surface)
        if key in aliases:
            return aliases[key]
        if key in g:
            return key
        labels = tax.lookup(key)
        if not labels:
            log.warning('Role "%s" is not in the taxonomy', key)
            g.add_node(key)
            return key
        if len(labels) > 1:
            log.info('Role "%s": taking %s, alternatives %s', key, labels[0], labels[1:])
        label = labels[0]
        if label != key:
            aliases[key] = label
        if label not in g:
            g.add_node(label)
            chain(label)
        return label

    for name, members in (defined_roles or {}).items():
        name = normalize_term(name)
        member_labels = [resolve(m) for m in members]
        _check_taxonomy(g)
        above = [set(nx.descendants(g, m)) | {m} for m in member_labels]
        common = set.intersection(*above) if above else set()
        common -= set(member_labels) | {name}
        nearest = [
            c for c in common if not any(o != c and nx.has_path(g, o, c) for o in common)
        ]
        g.add_node(name)
        for m in member_labels:
            if m != name:
                g.add_edge(m, name)
        for c in sorted(nearest):
            g.add_edge(name, c)

    for role in roles:
        if role and normalize_term(role):
            resolve(role)

    _check_taxonomy(g)

    reaching = nx.ancestors(g, ROLE_ROOT) | {ROLE_ROOT}
    unresolved = set(g.nodes) - reaching
    for label in sorted(unresolved):
        log.warning("Role %s does not reach %s", label, ROLE_ROOT)
    log.info(
        "Role graph: %d vertices, %d edges, %d unresolved",
        g.number_of_nodes(),
        g.number_of_edges(),
        len(unresolved),
    )
    return RoleGraph(g, root=ROLE_ROOT, unresolved=unresolved, aliases=aliases)


def ingest_attribute_ontology(
    records: Iterable[Sequence[str]], vertices: Iterable[str] = ()
) -> AttributeGraph:
    """Build the attribute graph out of (child, parent[, kind]) records."""
    g = nx.DiGraph()
    g.add_nodes_from(normalize_term(v) for v in vertices)
    for record in records:
        child, parent = normalize_term(record[0]), normalize_term(record[1])
        kind = record[2] if len(record) > 2 else "class-class"
        if kind not in ONTOLOGY_KINDS:
            raise ArgumentError("kind", kind)
        g.add_edge(child, parent, kind=kind)
    cycle = _find_cycle(g)
    if cycle:
        raise CycleDetected(cycle)
    return AttributeGraph(g)


def is_subsumed_by(graph: SubsumptionGraph, x: str, y: str) -> bool:
    """True iff ``y`` is reachable from ``x`` via parent edges.

    Every label is subsumed by itself.
    """
    x, y = graph.label_of(x), graph.label_of(y)
    if x == y:
        return True
    if x not in graph.graph or y not in graph.graph:
        return False
    return nx.has_path(graph.graph, x, y)


def nearest_role(graph: SubsumptionGraph, surface: str, embed_provider) -> Tuple[str, float]:
    """Return the vertex whose text is most similar to ``surface``.

    Ties go to the lexicographically smallest label.
    """
    from regcheck.embeddings import cosine

    if len(graph) == 0:
        raise EmptyGraph()
    labels = sorted(graph.vertices)
    vectors = embed_provider.embed([surface] + [role_text(lab) for lab in labels])
    query = vectors[0]
    best, best_sim = labels[0], float("-inf")
    for label, vector in zip(labels, vectors[1:]):
        try:
            sim = cosine(query, vector)
        except ZeroVector:
            sim = 0.0
        if sim > best_sim:
            best, best_sim = label, sim
    return best, best_sim


def graph_counts(graph: SubsumptionGraph) -> Dict[str, int]:
    return {
        "vertices": graph.graph.number_of_nodes(),
        "edges": graph.graph.number_of_edges(),
        "unresolved": len(graph.unresolved),
    }
