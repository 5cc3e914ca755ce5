"""Uniform chat-completion interface over HTTP, plus a scripted mock.

The wire format is the de facto chat-completion protocol: a JSON POST of
``{model, messages, temperature, top_p}`` whose answer is read from
``choices[0].message.content``.  The API key comes from an environment
variable (``REGCHECK_API_KEY`` by default), never from a file.

Every component talks to a :py:class:`Gateway`, which adds retries with
exponential backoff, a bound on requests in flight and a transcript log
to whatever provider it wraps.
"""

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    Union,
)

import requests
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from regcheck.exceptions import (
    ArgumentError,
    ConfigurationError,
    MalformedRecord,
    ProviderError,
    RateLimited,
    Transport,
    UnscriptedPrompt,
)
from regcheck.time import dumps, now_with_tz

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ArgumentError("role", self.role)


@dataclass(frozen=True)
class ChatRequest:
    """One completion request. Sampling defaults: temperature 0, top_p 0.95."""

    model: str
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.0
    top_p: float = 0.95
    max_tokens: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ArgumentError("temperature", self.temperature)
        if not 0 < self.top_p <= 1:
            raise ArgumentError("top_p", self.top_p)
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ArgumentError("max_tokens", self.max_tokens)
        if not self.messages:
            raise ArgumentError("messages", self.messages)

    @property
    def prompt(self) -> str:
        """Content of the last user message."""
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""

    def to_payload(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        return payload


@dataclass(frozen=True)
class ChatResponse:
    content: str
    provider_meta: Mapping[str, Any] = field(default_factory=dict)
    latency_ms: int = 0
    request_hash: str = ""


def request_hash(req: ChatRequest) -> str:
    """SHA-256 of the canonical JSON of ``req``; the transcript key."""
    canonical = json.dumps(
        req.to_payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatProvider(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse:
        ...


def post_json(
    session: requests.Session,
    url: str,
    payload: Mapping[str, Any],
    headers: Optional[Mapping[str, str]] = None,
    timeout: float = 60,
) -> Dict[str, Any]:
    """POST ``payload`` and return the decoded JSON answer.

    Raise Transport when the server cannot be reached, RateLimited on
    HTTP 429 and ProviderError on any other unsuccessful answer.
    """
    try:
        resp = session.post(url, json=payload, headers=dict(headers or {}), timeout=timeout)
    except requests.RequestException as e:
        raise Transport("Cannot reach {}: {}".format(url, e), url=url)
    if resp.status_code == 429:
        raise RateLimited("{} answered 429".format(url), url=url)
    if resp.status_code != 200:
        raise ProviderError(resp.status_code, resp.text)
    try:
        return resp.json()
    except ValueError:
        raise ProviderError(resp.status_code, resp.text)


def auth_headers(api_key_env: str) -> Dict[str, str]:
    api_key = os.environ.get(api_key_env, "")
    return {"Authorization": "Bearer " + api_key} if api_key else {}


class HttpChatProvider:
    """Any OpenAI-compatible chat-completion endpoint."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "REGCHECK_API_KEY",
        timeout: float = 60,
        session: Optional[requests.Session] = None,
    ):
        if not endpoint:
            raise ConfigurationError("No provider_endpoint configured.")
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session or requests.Session()

    @classmethod
    def from_config(cls, config, session=None) -> "HttpChatProvider":
        return cls(
            config.provider_endpoint,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            session=session,
        )

    def complete(self, req: ChatRequest) -> ChatResponse:
        started = time.monotonic()
        data = post_json(
            self.session,
            self.endpoint,
            req.to_payload(),
            headers=auth_headers(self.api_key_env),
            timeout=self.timeout,
        )
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(200, dumps(data)[:500])
        meta = {k: data[k] for k in ("id", "model", "usage") if k in data}
        return ChatResponse(
            content=content or "",
            provider_meta=meta,
            latency_ms=int((time.monotonic() - started) * 1000),
        )


@dataclass(frozen=True)
class Matcher:
    """Fires on a substring of the prompt, or on the whole prompt if exact."""

    text: str
    exact: bool = False

    def matches(self, prompt: str) -> bool:
        return prompt == self.text if self.exact else self.text in prompt


class ScriptedProvider:
    """Deterministic provider for tests: the first matching fixture replies."""

    def __init__(self, fixtures: Sequence[Tuple[Matcher, str]]):
        self.fixtures = list(fixtures)
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        prompt = req.prompt
        for matcher, reply in self.fixtures:
            if matcher.matches(prompt):
                return ChatResponse(
                    content=reply, provider_meta={"provider": "mock", "match": matcher.text}
                )
        raise UnscriptedPrompt(prompt)


def script_mock(
    fixtures: Sequence[Tuple[Union[str, Matcher], str]]
) -> ScriptedProvider:
    """Return a mock provider out of ordered (matcher, reply) pairs.

    A plain string matcher fires on any prompt containing it.
    """
    return ScriptedProvider(
        [(m if isinstance(m, Matcher) else Matcher(m), reply) for m, reply in fixtures]
    )


def load_mock_script(path: str) -> ScriptedProvider:
    """Read a mock script: one ``{"match", "reply", "exact"?}`` JSON per line."""
    fixtures: List[Tuple[Union[str, Matcher], str]] = []
    with open(path, encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                record = json.loads(line)
            except ValueError as e:
                raise MalformedRecord(lineno, str(e))
            if not isinstance(record, dict) or not isinstance(record.get("match"), str):
                raise MalformedRecord(lineno, 'missing "match"')
            if not isinstance(record.get("reply"), str):
                raise MalformedRecord(lineno, 'missing "reply"')
            fixtures.append(
                (Matcher(record["match"], bool(record.get("exact", False))), record["reply"])
            )
    log.debug("Loaded %d scripted replies from %s", len(fixtures), path)
    return script_mock(fixtures)


class TranscriptLog:
    """Append-only JSON lines file of every exchange with a provider."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def append(self, req: ChatRequest, resp: ChatResponse) -> None:
        line = dumps(
            {
                "request_hash": resp.request_hash or request_hash(req),
                "prompt": req.prompt,
                "response": resp.content,
                "timestamp": now_with_tz(),
            }
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as stream:
                stream.write(line + "\n")


def chat(
    provider: ChatProvider,
    req: ChatRequest,
    max_attempts: int = 3,
    initial_backoff: float = 1.0,
    transcript: Optional[TranscriptLog] = None,
    sleep: Callable[[float], Any] = time.sleep,
) -> ChatResponse:
    """Get one completion out of ``provider``, retrying when throttled.

    RateLimited and Transport errors are retried up to ``max_attempts``
    times in total, doubling the wait each time. ProviderError is final.
    """
    if max_attempts < 1:
        raise ArgumentError("max_attempts", max_attempts)
    key = request_hash(req)
    log.debug("Prompt %s:\n%s", key[:12], req.prompt)
    retrying = Retrying(
        retry=retry_if_exception_type((RateLimited, Transport)),
        stop=stop_after_attempt(max_attempts),
        wait=wait_exponential(multiplier=initial_backoff),
        sleep=sleep,
        before_sleep=before_sleep_log(log, logging.WARNING),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                resp = provider.complete(req)
    except (RateLimited, Transport) as e:
        log.error("Giving up on %s after %d attempts: %s", key[:12], max_attempts, e)
        raise
    number = attempt.retry_state.attempt_number
    resp = replace(
        resp,
        provider_meta=dict(resp.provider_meta, attempts=number),
        request_hash=key,
    )
    if number > 1:
        log.info("Request %s succeeded after %d attempts", key[:12], number)
    if transcript is not None:
        transcript.append(req, resp)
    return resp


class _SlotBound:
    """A provider whose every call takes one slot of a semaphore."""

    def __init__(self, provider: ChatProvider, slots: threading.BoundedSemaphore):
        self.provider = provider
        self.slots = slots

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self.slots:
            return self.provider.complete(req)


class Gateway:
    """What the pipeline talks to: a provider plus retries, a bound on
    concurrent requests and the configured sampling defaults.
    """

    def __init__(
        self,
        provider: ChatProvider,
        model: str = "gpt-4",
        temperature: float = 0.0,
        top_p: float = 0.95,
        max_tokens: Optional[int] = None,
        max_attempts: int = 3,
        initial_backoff: float = 1.0,
        max_parallel: int = 4,
        transcript: Optional[TranscriptLog] = None,
        sleep: Callable[[float], Any] = time.sleep,
    ):
        if max_parallel < 1:
            raise ArgumentError("max_parallel", max_parallel)
        self.provider = provider
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.max_attempts = max_attempts
        self.initial_backoff = initial_backoff
        self.max_parallel = max_parallel
        self.transcript = transcript
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(max_parallel)

    @classmethod
    def from_config(cls, config, provider: Optional[ChatProvider] = None, **kw) -> "Gateway":
        """Build the provider named by ``config.provider_class`` unless given."""
        if provider is None:
            provider = config.resource("provider_class").from_config(config)
        return cls(
            provider,
            model=config.model,
            temperature=config.temperature,
            top_p=config.top_p,
            max_tokens=config.max_tokens,
            max_attempts=config.max_attempts,
            initial_backoff=config.initial_backoff,
            max_parallel=config.max_parallel,
            transcript=TranscriptLog(config.transcript_path)
            if config.transcript_path
            else None,
            **kw,
        )

    def request(self, prompt: str, system: Optional[str] = None) -> ChatRequest:
        messages = [ChatMessage("user", prompt)]
        if system:
            messages.insert(0, ChatMessage("system", system))
        return ChatRequest(
            model=self.model,
            messages=tuple(messages),
            temperature=self.temperature,
            top_p=self.top_p,
            max_tokens=self.max_tokens,
        )

    def chat(self, req: ChatRequest) -> ChatResponse:
        """Send ``req``; each attempt holds a slot, the backoff waits do not."""
        return chat(
            _SlotBound(self.provider, self._slots),
            req,
            max_attempts=self.max_attempts,
            initial_backoff=self.initial_backoff,
            transcript=self.transcript,
            sleep=self.sleep,
        )

    def ask(self, prompt: str, system: Optional[str] = None) -> ChatResponse:
        """Send ``prompt`` with the configured defaults."""
        return self.chat(self.request(prompt, system=system))


def as_gateway(provider_or_gateway) -> Gateway:
    """Wrap a bare provider in a Gateway with default settings.

    Anything with an ``ask`` method already behaves like a Gateway.
    """
    if isinstance(provider_or_gateway, Gateway) or callable(
        getattr(provider_or_gateway, "ask", None)
    ):
        return provider_or_gateway
    return Gateway(provider_or_gateway)
