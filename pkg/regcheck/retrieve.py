"""Find the norms of a checklist that apply to an event.

Three ways are offered:

- **BM25** over the full specifications of the norms, usually queried with
  an LLM explanation of the event (:py:func:`llm_explanation`).
- **Embedding** similarity, restricted to the norms whose annotated roles
  the event roles fall under (:py:func:`embedding_retrieve`).
- **Agent**: the model names regulation ids itself and we keep the ones
  that exist in the tree (:py:func:`agent_retrieve`).
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Union

from regcheck.checklist import CICharacteristics, Checklist, norm_leaves, verify_id
from regcheck.embeddings import cosine
from regcheck.exceptions import ArgumentError, EmptyCorpus, EmptyGraph, UnknownDoc, ZeroVector
from regcheck.graphs import is_subsumed_by, nearest_role
from regcheck.prompts import agent_ids_prompt, explanation_prompt
from regcheck.regdoc import (
    RegulationId,
    extract_references,
    full_specification,
    parse_regulation_id,
)
from regcheck.text import collapse, sentences, tokenize

log = logging.getLogger(__name__)

CORPORA = ("norms", "all")
ROLE_MODES = ("filter", "union")


class RetrievalMethod(Enum):
    BM25 = "BM25"
    EMBEDDING = "Embedding"
    AGENT = "Agent"


@dataclass(frozen=True)
class RetrievalHit:
    leaf: RegulationId
    score: float
    method: RetrievalMethod

    def sort_key(self) -> tuple:
        return (-self.score, self.leaf.sort_key())

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf.canonical,
            "score": self.score,
            "method": self.method.value,
        }

    @classmethod
    def from_dict(cls, adict: Mapping) -> "RetrievalHit":
        return cls(
            leaf=parse_regulation_id(adict["leaf"]),
            score=float(adict["score"]),
            method=RetrievalMethod(adict["method"]),
        )


def rank_hits(hits: Sequence[RetrievalHit], k: Optional[int] = None) -> List[RetrievalHit]:
    """Sort by descending score, ties by ascending id; keep the first ``k``."""
    ranked = sorted(hits, key=RetrievalHit.sort_key)
    return ranked if k is None else ranked[:k]


def _check_k(k: int) -> None:
    if not isinstance(k, int) or k < 1:
        raise ArgumentError("k", k)


def _as_id(key: Union[str, RegulationId]) -> RegulationId:
    return key if isinstance(key, RegulationId) else parse_regulation_id(key)


# BM25
# ====

class Bm25Index:
    """Term statistics of a corpus of leaf specifications.

    Read only once built, so queries may run from several threads.
    """

    def __init__(
        self,
        docs: Mapping[RegulationId, Sequence[str]],
        k1: float = 1.5,
        b: float = 0.75,
    ):
        if not docs:
            raise EmptyCorpus()
        if not k1 > 0:
            raise ArgumentError("k1", k1)
        if not 0 <= b <= 1:
            raise ArgumentError("b", b)
        self.k1 = k1
        self.b = b
        self.ids: Dict[str, RegulationId] = {}
        self.docs: Dict[str, Counter] = {}
        self.lengths: Dict[str, int] = {}
        self.df: Counter = Counter()
        for rid, tokens in docs.items():
            key = rid.canonical
            self.ids[key] = rid
            self.docs[key] = Counter(tokens)
            self.lengths[key] = len(tokens)
            self.df.update(self.docs[key].keys())
        self.N = len(self.docs)
        self.avgdl = sum(self.lengths.values()) / self.N

    def __len__(self) -> int:
        return self.N

    def __contains__(self, leaf) -> bool:
        try:
            return _as_id(leaf).canonical in self.docs
        except ValueError:
            return False

    def idf(self, w: str) -> float:
        n = self.df[w]
        return math.log(1 + (self.N - n + 0.5) / (n + 0.5))

    def word_score(self, w: str, e: Union[str, RegulationId]) -> float:
        key = _as_id(e).canonical
        if key not in self.docs:
            raise UnknownDoc(key)
        f = self.docs[key][w]
        if f == 0:
            return 0.0
        norm = self.k1 * (1 - self.b + self.b * self.lengths[key] / self.avgdl)
        return self.idf(w) * f * (self.k1 + 1) / (f + norm)

    def score(self, tokens: Sequence[str], e: Union[str, RegulationId]) -> float:
        """Sum of word scores; repeated query tokens count each time."""
        return sum(self.word_score(w, e) for w in tokens)


def build_bm25_index(
    corpus: Mapping[Union[str, RegulationId], str], k1: float = 1.5, b: float = 0.75
) -> Bm25Index:
    """Index ``corpus``, a mapping of leaf id to text."""
    if not corpus:
        raise EmptyCorpus()
    index = Bm25Index({_as_id(key): tokenize(text) for key, text in corpus.items()}, k1, b)
    log.debug("BM25 index over %d documents, avgdl %.2f", index.N, index.avgdl)
    return index


def bm25_word_score(index: Bm25Index, w: str, e: Union[str, RegulationId]) -> float:
    return index.word_score(w, e)


def bm25_query(index: Bm25Index, query: str, k: int) -> List[RetrievalHit]:
    """The ``k`` best documents for ``query``; empty when it has no tokens."""
    _check_k(k)
    tokens = tokenize(query)
    if not tokens:
        log.warning("BM25 query has no tokens; nothing retrieved.")
        return []
    hits = [
        RetrievalHit(rid, index.score(tokens, rid), RetrievalMethod.BM25)
        for rid in index.ids.values()
    ]
    return rank_hits(hits, k)


def norm_corpus(checklist: Checklist, corpus: str = "norms") -> Dict[RegulationId, str]:
    """Map leaf ids to their full specifications.

    ``corpus="norms"`` keeps the positive and negative norms only;
    ``"all"`` takes every leaf of the tree.
    """
    if corpus == "norms":
        leaves = norm_leaves(checklist)
    elif corpus == "all":
        tree = checklist.tree
        leaves = [tree.nodes[k].id for k in tree.leaves() if tree.nodes[k].id]
    else:
        raise ArgumentError("corpus", corpus)
    return {rid: full_specification(checklist.tree, rid) for rid in leaves}


def llm_explanation(gateway, event: str) -> str:
    """Ask the model to explain the event in the vocabulary of the law."""
    return gateway.ask(explanation_prompt(event)).content


# Embedding
# =========

def _event_text(characteristics: CICharacteristics) -> str:
    adict = characteristics.to_dict()
    parts = [
        "{}: {}".format(f.replace("_", " "), adict[f])
        for f in ("sender", "sender_role", "recipient", "recipient_role",
                  "subject", "subject_role", "information_type", "purpose")
        if adict[f]
    ]
    return ". ".join(parts)


def match_roles(
    checklist: Checklist,
    characteristics: CICharacteristics,
    embed_provider,
    role_threshold: float = 0.6,
) -> List[str]:
    """Checklist roles nearest to the event roles, when close enough."""
    matched = []
    for surface in characteristics.roles():
        try:
            label, sim = nearest_role(checklist.role_graph, surface, embed_provider)
        except EmptyGraph:
            return []
        if sim >= role_threshold:
            log.debug("Event role %r matched %s (%.3f)", surface, label, sim)
            if label not in matched:
                matched.append(label)
        else:
            log.info(
                "Event role %r unmatched: nearest is %s at %.3f", surface, label, sim
            )
    return matched


def role_candidates(checklist: Checklist, matched: Sequence[str]) -> List[RegulationId]:
    """Norms whose sender or recipient role subsumes a matched event role."""
    found = []
    for rid in norm_leaves(checklist):
        chars = checklist.annotation(rid).characteristics
        norm_roles = [r for r in (chars.sender_role, chars.recipient_role) if r]
        if any(
            is_subsumed_by(checklist.role_graph, m, r)
            for m in matched
            for r in norm_roles
        ):
            found.append(rid)
    return found


def similarity_scores(
    event: str, specs: Mapping[RegulationId, str], embed_provider
) -> Dict[RegulationId, float]:
    """Mean cosine between the sentences of ``event`` and each specification."""
    chunks = sentences(event)
    ids = list(specs)
    vectors = embed_provider.embed(chunks + [specs[rid] for rid in ids])
    chunk_vectors, spec_vectors = vectors[: len(chunks)], vectors[len(chunks):]
    scores = {}
    for rid, spec_vector in zip(ids, spec_vectors):
        total = 0.0
        for chunk_vector in chunk_vectors:
            try:
                total += cosine(chunk_vector, spec_vector)
            except ZeroVector:
                pass
        scores[rid] = total / len(chunk_vectors)
    return scores


def embedding_retrieve(
    checklist: Checklist,
    characteristics: CICharacteristics,
    embed_provider,
    k: int,
    event: str = "",
    role_threshold: float = 0.6,
    role_mode: str = "filter",
    corpus: str = "norms",
) -> List[RetrievalHit]:
    """Rank the norms whose roles fit the event by embedding similarity.

    Without any matched role (or matching norm) every norm is ranked.
    ``role_mode="union"`` adds the ``k`` most similar norms to the role
    candidates instead of ranking the candidates alone.
    """
    _check_k(k)
    if role_mode not in ROLE_MODES:
        raise ArgumentError("role_mode", role_mode)
    specs = norm_corpus(checklist, corpus)
    if not specs:
        return []
    text = collapse(event) or _event_text(characteristics)
    scores = similarity_scores(text, specs, embed_provider)

    matched = match_roles(checklist, characteristics, embed_provider, role_threshold)
    candidates = [c for c in role_candidates(checklist, matched) if c in specs]
    if not candidates:
        log.info("No role-matched norms; ranking all %d norms by text.", len(specs))
        candidates = list(specs)
    elif role_mode == "union":
        by_text = rank_hits(
            [RetrievalHit(rid, s, RetrievalMethod.EMBEDDING) for rid, s in scores.items()],
            k,
        )
        candidates = list(dict.fromkeys(candidates + [h.leaf for h in by_text]))
    return rank_hits(
        [RetrievalHit(rid, scores[rid], RetrievalMethod.EMBEDDING) for rid in candidates],
        k,
    )


# Agent
# =====

def agent_hits(checklist: Checklist, completion: str, max_n: int) -> List[RetrievalHit]:
    """Keep the ids in ``completion`` that exist in the tree, first ``max_n``."""
    _check_k(max_n)
    kept: List[RegulationId] = []
    for rid in dict.fromkeys(extract_references(completion)):
        if verify_id(checklist, rid):
            kept.append(rid)
        else:
            log.info("Dropping generated id %s: not in the regulation", rid)
    return [
        RetrievalHit(rid, 1.0 / rank, RetrievalMethod.AGENT)
        for rank, rid in enumerate(kept[:max_n], 1)
    ]


def agent_retrieve(gateway, checklist: Checklist, event: str, max_n: int) -> List[RetrievalHit]:
    """Let the model name applicable ids, then verify them."""
    _check_k(max_n)
    completion = gateway.ask(agent_ids_prompt(event, max_n)).content
    return agent_hits(checklist, completion, max_n)
