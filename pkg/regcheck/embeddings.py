"""Text embeddings and cosine similarity.

Two providers share the ``embed(texts) -> list of vectors`` interface:

- :py:class:`HttpEmbeddingProvider` POSTs ``{"texts": [...]}`` and reads
  ``{"vectors": [...]}``; a sentence-embedding model sits behind it.
- :py:class:`HashingEmbeddingProvider` is a deterministic bag of hashed
  tokens, used in tests and whenever no endpoint is configured.
"""

import hashlib
import logging
from typing import List, Optional, Protocol, Sequence

import numpy as np
import requests

from regcheck.exceptions import (
    ArgumentError,
    ConfigurationError,
    DimensionMismatch,
    ProviderError,
    ZeroVector,
)
from regcheck.gateway import auth_headers, post_json
from regcheck.text import tokenize

log = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED


def cosine(u, v) -> float:
    """Cosine similarity of two vectors of equal dimension, in [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(
            "Cannot compare vectors of shapes {} and {}".format(u.shape, v.shape)
        )
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector()
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        ...


class HashingEmbeddingProvider:
    """Each token adds 1 to bucket SHA-256("<seed>:<token>") mod dimension;
    the vector is then L2-normalized. Empty texts give the zero vector.
    """

    def __init__(self, dimension: int = 64, seed: int = DEFAULT_SEED):
        if dimension < 1:
            raise ArgumentError("dimension", dimension)
        self.dimension = dimension
        self.seed = seed

    @classmethod
    def from_config(cls, config, session=None) -> "HashingEmbeddingProvider":
        return cls(seed=config.embedding_seed)

    def bucket(self, token: str) -> int:
        digest = hashlib.sha256("{}:{}".format(self.seed, token).encode("utf-8"))
        return int.from_bytes(digest.digest(), "big") % self.dimension

    def embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension)
        for token in tokenize(text):
            vector[self.bucket(token)] += 1.0
        norm = np.linalg.norm(vector)
        return vector / norm if norm else vector

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        return [self.embed_one(t) for t in texts]


class HttpEmbeddingProvider:
    """Remote embedding model speaking ``{texts} -> {vectors}`` JSON."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "REGCHECK_API_KEY",
        timeout: float = 60,
        session: Optional[requests.Session] = None,
    ):
        if not endpoint:
            raise ConfigurationError("No embedding_endpoint configured.")
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session or requests.Session()

    @classmethod
    def from_config(cls, config, session=None) -> "HttpEmbeddingProvider":
        return cls(
            config.embedding_endpoint,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            session=session,
        )

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        if not texts:
            return []
        data = post_json(
            self.session,
            self.endpoint,
            {"texts": list(texts)},
            headers=auth_headers(self.api_key_env),
            timeout=self.timeout,
        )
        try:
            vectors = [np.asarray(v, dtype=float) for v in data["vectors"]]
        except (KeyError, TypeError, ValueError):
            raise ProviderError(200, str(data)[:500])
        if len(vectors) != len(texts):
            raise ProviderError(
                200, "{} vectors for {} texts".format(len(vectors), len(texts))
            )
        if len({v.shape for v in vectors}) > 1:
            raise DimensionMismatch("Provider returned vectors of unequal dimension")
        return vectors


def embedding_provider_from_config(config, session=None) -> EmbeddingProvider:
    """Instantiate the class named by ``config.embedding_class``."""
    cls = config.resource("embedding_class")
    log.debug("Embedding provider: %s", cls.__name__)
    return cls.from_config(config, session=session)
