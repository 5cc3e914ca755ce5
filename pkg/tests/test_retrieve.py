"""Tests the *retrieve* and *embeddings* modules."""

import math
import random
import unittest

import numpy as np
import pytest

from regcheck.checklist import CICharacteristics
from regcheck.embeddings import HashingEmbeddingProvider, HttpEmbeddingProvider, cosine
from regcheck.exceptions import (
    ArgumentError,
    ConfigurationError,
    DimensionMismatch,
    EmptyCorpus,
    ProviderError,
    UnknownDoc,
    ZeroVector,
)
from regcheck.gateway import Gateway, load_mock_script
from regcheck.regdoc import parse_regulation_id
from regcheck.retrieve import (
    RetrievalHit,
    RetrievalMethod,
    agent_hits,
    agent_retrieve,
    bm25_query,
    bm25_word_score,
    build_bm25_index,
    embedding_retrieve,
    llm_explanation,
    norm_corpus,
    rank_hits,
    similarity_scores,
)
from regcheck.text import tokenize
from tests.helpers import fixture, mini_checklist

SURGEON_TO_PATIENT = CICharacteristics(
    sender="Dr. Smith",
    sender_role="surgeon",
    recipient="Mary",
    recipient_role="patient",
    subject="Mary",
    subject_role="patient",
    information_type="protected health information",
    purpose="treatment",
)


def ids(hits):
    return [h.leaf.canonical for h in hits]


class TestBm25(unittest.TestCase):
    def setUp(self):
        self.index = build_bm25_index({"1.1": "covered entity", "1.2": "health plan"})

    def test_two_documents(self):
        index = self.index
        assert len(index) == 2
        assert index.avgdl == 2
        assert index.idf("covered") == pytest.approx(math.log(2))
        assert index.idf("pharmacy") == pytest.approx(math.log(1 + 2.5 / 0.5))
        assert bm25_word_score(index, "covered", "1.1") == pytest.approx(0.6931, abs=1e-4)
        assert bm25_word_score(index, "covered", "1.2") == 0
        assert "1.1" in index
        assert "1.3" not in index
        assert "nonsense" not in index

    def test_errors(self):
        with pytest.raises(UnknownDoc):
            self.index.word_score("covered", "1.3")
        with pytest.raises(EmptyCorpus):
            build_bm25_index({})
        with pytest.raises(ArgumentError):
            build_bm25_index({"1.1": "x"}, k1=0)
        with pytest.raises(ArgumentError):
            build_bm25_index({"1.1": "x"}, b=1.5)

    def test_query(self):
        hits = bm25_query(self.index, "Covered entity!", k=2)
        assert ids(hits) == ["1.1", "1.2"]
        assert hits[0].score == pytest.approx(2 * math.log(2))
        assert hits[1].score == 0
        assert hits[0].method is RetrievalMethod.BM25
        assert ids(bm25_query(self.index, "covered", k=1)) == ["1.1"]
        assert bm25_query(self.index, "?!", k=2) == []
        with pytest.raises(ArgumentError):
            bm25_query(self.index, "covered", k=0)

    def test_over_the_checklist(self):
        index = build_bm25_index(norm_corpus(mini_checklist()))
        hits = bm25_query(index, "genetic information for underwriting", k=3)
        assert ids(hits)[0] == "164.502(a)(5)(i)"


def brute_bm25(docs, query, k1=1.5, b=0.75):
    n_docs = len(docs)
    avgdl = sum(len(d) for d in docs.values()) / n_docs
    scores = {}
    for key, doc in docs.items():
        total = 0.0
        for w in query:
            f = doc.count(w)
            if not f:
                continue
            n = sum(1 for d in docs.values() if w in d)
            idf = math.log(1 + (n_docs - n + 0.5) / (n + 0.5))
            total += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * len(doc) / avgdl))
        scores[key] = total
    return scores


def test_bm25_agrees_with_a_direct_computation():
    rng = random.Random(506)
    vocabulary = "phi plan nurse consent notes treatment payment clerk".split()
    for _ in range(100):
        corpus = {
            "1.{}".format(i): " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 12)))
            for i in range(1, rng.randint(2, 15))
        }
        query = " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 5)))
        k = rng.randint(1, len(corpus))
        expected = brute_bm25({key: tokenize(t) for key, t in corpus.items()}, tokenize(query))
        hits = bm25_query(build_bm25_index(corpus), query, k)
        assert len(hits) == k
        for hit in hits:
            assert hit.score == pytest.approx(expected[hit.leaf.canonical])
        ranked = sorted(expected.items(), key=lambda kv: (-kv[1], int(kv[0].split(".")[1])))
        assert [round(h.score, 9) for h in hits] == [round(s, 9) for _, s in ranked[:k]]


def test_rank_hits_breaks_ties_by_id():
    hits = [
        RetrievalHit(parse_regulation_id(i), s, RetrievalMethod.BM25)
        for i, s in [("164.502(b)", 1.0), ("164.502(10)", 1.0), ("164.502(2)", 1.0), ("1.1", 2.0)]
    ]
    assert ids(rank_hits(hits)) == ["1.1", "164.502(2)", "164.502(10)", "164.502(b)"]
    assert ids(rank_hits(hits, 2)) == ["1.1", "164.502(2)"]
    assert RetrievalHit.from_dict(hits[0].to_dict()) == hits[0]


def test_norm_corpus():
    checklist = mini_checklist()
    norms = norm_corpus(checklist)
    assert len(norms) == 6
    assert parse_regulation_id("164.103(a)") not in norms
    assert len(norm_corpus(checklist, "all")) == 8
    with pytest.raises(ArgumentError):
        norm_corpus(checklist, "some")


class VectorSession:
    """Answers each POST with the next payload."""

    def __init__(self, *payloads):
        self.payloads = list(payloads)
        self.posted = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posted.append(json)
        return _Answer(self.payloads.pop(0))


class _Answer:
    status_code = 200
    text = ""

    def __init__(self, payload):
        self.payload = payload

    def json(self):
        return self.payload


class TestEmbeddings(unittest.TestCase):
    def test_cosine(self):
        assert cosine([1, 0], [0, 1]) == 0
        assert cosine([1, 1], [2, 2]) == pytest.approx(1.0)
        assert cosine([1, 0], [-3, 0]) == pytest.approx(-1.0)
        with pytest.raises(DimensionMismatch):
            cosine([1, 0], [1, 0, 0])
        with pytest.raises(ZeroVector):
            cosine([0, 0], [1, 0])

    def test_hashing_provider(self):
        embed = HashingEmbeddingProvider()
        assert embed.bucket("surgeon") == 55
        assert embed.bucket("patient") == 5
        surgeon, again, empty = embed.embed(["Surgeon", "surgeon!", ""])
        assert surgeon[55] == pytest.approx(1.0)
        assert np.array_equal(surgeon, again)
        assert not empty.any()
        assert np.linalg.norm(embed.embed_one("health care provider")) == pytest.approx(1.0)
        with pytest.raises(ArgumentError):
            HashingEmbeddingProvider(dimension=0)

    def test_http_provider(self):
        session = VectorSession({"vectors": [[1, 0], [0, 2]]}, {"vectors": [[1]]})
        embed = HttpEmbeddingProvider("http://embed", session=session)
        first, second = embed.embed(["a nurse", "a plan"])
        assert cosine(first, second) == 0
        assert session.posted == [{"texts": ["a nurse", "a plan"]}]
        assert embed.embed([]) == []
        with pytest.raises(ProviderError):
            embed.embed(["one", "two"])
        with pytest.raises(ConfigurationError):
            HttpEmbeddingProvider("")

    def test_similarity_of_an_empty_event_is_zero(self):
        specs = norm_corpus(mini_checklist())
        scores = similarity_scores("", specs, HashingEmbeddingProvider())
        assert set(scores.values()) == {0.0}


class TestEmbeddingRetrieve(unittest.TestCase):
    def setUp(self):
        self.checklist = mini_checklist()
        self.embed = HashingEmbeddingProvider()
        self.event = "A surgeon sends the surgical report to his patient."

    def test_roles_filter_the_candidates(self):
        hits = embedding_retrieve(
            self.checklist, SURGEON_TO_PATIENT, self.embed, k=10, event=self.event
        )
        assert sorted(ids(hits)) == [
            "164.502(a)(1)(i)",
            "164.502(a)(1)(ii)",
            "164.502(a)(1)(iv)",
            "164.506(a)",
            "164.508(a)",
        ]
        assert hits == rank_hits(hits)
        assert {h.method for h in hits} == {RetrievalMethod.EMBEDDING}

    def test_k_bounds_the_result(self):
        hits = embedding_retrieve(
            self.checklist, SURGEON_TO_PATIENT, self.embed, k=2, event=self.event
        )
        assert len(hits) == 2

    def test_union_adds_the_best_by_text(self):
        hits = embedding_retrieve(
            self.checklist,
            SURGEON_TO_PATIENT,
            self.embed,
            k=6,
            event=self.event,
            role_mode="union",
        )
        assert "164.502(a)(5)(i)" in ids(hits)

    def test_falls_back_to_every_norm(self):
        hits = embedding_retrieve(
            self.checklist, SURGEON_TO_PATIENT, self.embed, k=10, role_threshold=1.5
        )
        assert len(hits) == 6
        nobody = CICharacteristics(information_type="grades")
        assert len(embedding_retrieve(self.checklist, nobody, self.embed, k=10)) == 6

    def test_errors(self):
        with pytest.raises(ArgumentError):
            embedding_retrieve(self.checklist, SURGEON_TO_PATIENT, self.embed, k=0)
        with pytest.raises(ArgumentError):
            embedding_retrieve(
                self.checklist, SURGEON_TO_PATIENT, self.embed, k=3, role_mode="both"
            )


AGENT_COMPLETION = (
    "Generated Related HIPAA Regulations:\n"
    "1. 164.502(a)(1)(ii) - Treatment, payment, or health care operations\n"
    "2. 999.999 - Disclosures to everybody\n"
    "3. 164.506(a) - Uses for treatment\n"
    "4. 164.502(a)(1)(ii) - Treatment again"
)


class TestAgent(unittest.TestCase):
    def setUp(self):
        self.checklist = mini_checklist()

    def test_ids_are_verified_and_deduplicated(self):
        hits = agent_hits(self.checklist, AGENT_COMPLETION, max_n=5)
        assert ids(hits) == ["164.502(a)(1)(ii)", "164.506(a)"]
        assert [h.score for h in hits] == [1.0, 0.5]
        assert ids(agent_hits(self.checklist, AGENT_COMPLETION, max_n=1)) == [
            "164.502(a)(1)(ii)"
        ]
        assert agent_hits(self.checklist, "I do not know.", max_n=3) == []
        with pytest.raises(ArgumentError):
            agent_hits(self.checklist, AGENT_COMPLETION, max_n=0)

    def test_random_completions(self):
        rng = random.Random(508)
        tree = self.checklist.tree
        real = [key for key in tree.nodes if key != tree.root]
        fake = ["164.999", "160.103", "164.502(z)", "999.1(a)"]
        for _ in range(50):
            named = [rng.choice(real + fake) for _ in range(rng.randint(0, 10))]
            completion = "\n".join(
                "{}. {} - some content".format(n, rid) for n, rid in enumerate(named, 1)
            )
            max_n = rng.randint(1, 6)
            hits = agent_hits(self.checklist, completion, max_n)
            expected = [r for r in dict.fromkeys(named) if r in real][:max_n]
            assert ids(hits) == expected
            assert [h.score for h in hits] == [1 / n for n in range(1, len(hits) + 1)]

    def test_agent_retrieve_with_the_mock(self):
        gateway = Gateway(load_mock_script(fixture("judge_script.jsonl")))
        hits = agent_retrieve(gateway, self.checklist, "Case 02: a nurse shares a list.", 4)
        assert ids(hits) == ["164.502(a)(1)(ii)", "164.506(a)"]
        assert llm_explanation(gateway, "Case 03: a hospital bills a plan.").startswith(
            "A covered entity may disclose"
        )
