"""Read configuration and materialize resources indicated in it.

A configuration file is an INI file with a ``[regcheck]`` section::

    [regcheck]
    provider_endpoint = https://llm.example.org/v1/chat/completions
    model = llama3-8b
    k = 5
    role_mode = filter

Command line flags override whatever the file says.
"""

from configparser import ConfigParser
from dataclasses import dataclass, fields, replace
from importlib import import_module
from types import ModuleType
from typing import Any, Optional

from regcheck.exceptions import ArgumentError, ConfigurationError


def read_ini_files(*config_files, encoding="utf-8") -> ConfigParser:
    """Get a settings object (dict-like) by reading some ``config_files``."""
    settings = ConfigParser()
    settings.read(config_files, encoding=encoding)
    return settings


def resolve(resource_spec):
    """Return the variable referred to in the ``resource_spec`` string.

    Example resource_spec: ``"regcheck.gateway:HttpChatProvider"``.
    """
    if isinstance(resource_spec, ModuleType) or callable(resource_spec):
        return resource_spec
    parts = resource_spec.split(":")  # arg is assumed to be a string
    if len(parts) == 1:
        return import_module(parts[0])
    elif len(parts) == 2:
        module = import_module(parts[0])
        return getattr(module, parts[1])
    else:
        raise ArgumentError("resource_spec", resource_spec)


def integer(value) -> int:
    """Like int(), but also accepting base prefixes such as ``0x5EED``."""
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        return int(text, 0)


class SettingsReader:
    """Typed access to a settings dictionary (or ConfigParser section)."""

    def __init__(self, adict):
        """``adict`` should be a settings dictionary."""
        self.settings = adict

    def read(self, key, default=None, required=False):
        """Return setting value, or ``default`` if missing.

        Raise ConfigurationError if ``required`` is true and value is empty.
        """
        value = self.settings.get(key, default)
        if required and value in (None, ""):
            raise ConfigurationError(
                'Settings are missing a "{}" entry.'.format(key), key=key
            )
        return value

    def _convert(self, key, value, kind):
        if value is None or value == "":
            return None
        try:
            return kind(value)
        except ValueError:
            raise ConfigurationError(
                'Setting "{}" is not a valid {}: {}'.format(key, kind.__name__, value),
                key=key,
            )

    def int(self, key, default=None, required=False):
        """Return an integer setting value."""
        value = self.read(key, default=default, required=required)
        return self._convert(key, value, integer)

    def float(self, key, default=None, required=False):
        """Return a real setting value."""
        value = self.read(key, default=default, required=required)
        return self._convert(key, value, float)

    def resolve(self, key, default=None, required=False):
        """Return the variable or module indicated in the setting value.

        Therefore the setting value should be a resource specification
        such as ``some.module:SomeClass``.
        """
        resource_spec = self.read(key, default=default, required=required)
        if resource_spec is None:
            return None
        try:
            return resolve(resource_spec)
        except (ImportError, AttributeError) as e:
            raise ConfigurationError(
                'Cannot resolve setting "{}" = {}: {}'.format(key, resource_spec, e),
                key=key,
            )


@dataclass(frozen=True)
class Config:
    """Every tunable of the pipeline, with its default."""

    provider_endpoint: Optional[str] = None
    model: str = "gpt-4"
    api_key_env: str = "REGCHECK_API_KEY"
    provider_class: str = "regcheck.gateway:HttpChatProvider"
    embedding_endpoint: Optional[str] = None
    embedding_class: str = "regcheck.embeddings:HashingEmbeddingProvider"
    temperature: float = 0.0
    top_p: float = 0.95
    max_tokens: Optional[int] = None
    max_attempts: int = 3
    initial_backoff: float = 1.0
    timeout: float = 60.0
    max_parallel: int = 4
    retry_limit: int = 3
    k: int = 5
    bm25_k1: float = 1.5
    bm25_b: float = 0.75
    corpus: str = "norms"
    role_threshold: float = 0.6
    role_mode: str = "filter"
    max_reference_chars: int = 4000
    transcript_path: Optional[str] = None
    embedding_seed: int = 0x5EED
    log_level: str = "info"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Raise ArgumentError on values no component can work with."""
        if self.temperature < 0:
            raise ArgumentError("temperature", self.temperature)
        if not 0 < self.top_p <= 1:
            raise ArgumentError("top_p", self.top_p)
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ArgumentError("max_tokens", self.max_tokens)
        for name in ("max_attempts", "max_parallel", "retry_limit", "k"):
            if getattr(self, name) < 1:
                raise ArgumentError(name, getattr(self, name))
        if self.bm25_k1 <= 0:
            raise ArgumentError("bm25_k1", self.bm25_k1)
        if not 0 <= self.bm25_b <= 1:
            raise ArgumentError("bm25_b", self.bm25_b)
        if self.corpus not in ("norms", "all"):
            raise ArgumentError("corpus", self.corpus)
        if self.role_mode not in ("filter", "union"):
            raise ArgumentError("role_mode", self.role_mode)

    @classmethod
    def from_settings(cls, adict) -> "Config":
        """Build a Config from a dict-like of strings, converting types."""
        reader = SettingsReader(adict)
        kw: dict = {}
        for f in fields(cls):
            if reader.read(f.name) is None:
                continue
            kind = _field_kinds.get(f.name, "str")
            if kind == "str":
                kw[f.name] = reader.read(f.name)
            else:
                kw[f.name] = getattr(reader, kind)(f.name)
        unknown = set(adict.keys()) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(
                "Unknown settings: " + ", ".join(sorted(unknown)),
                keys=sorted(unknown),
            )
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str, section: str = "regcheck") -> "Config":
        """Read an INI file and return the Config in its ``section``."""
        parser = read_ini_files(path)
        if not parser.has_section(section):
            raise ConfigurationError(
                "{} has no [{}] section".format(path, section), path=str(path)
            )
        return cls.from_settings(dict(parser.items(section)))

    def resource(self, name: str):
        """Resolve a ``module:Name`` field such as ``provider_class``."""
        return SettingsReader({name: getattr(self, name)}).resolve(name, required=True)

    def override(self, **flags: Any) -> "Config":
        """Return a copy where every flag that is not None wins."""
        return replace(self, **{k: v for k, v in flags.items() if v is not None})


_field_kinds = {
    "temperature": "float",
    "top_p": "float",
    "max_tokens": "int",
    "max_attempts": "int",
    "initial_backoff": "float",
    "timeout": "float",
    "max_parallel": "int",
    "retry_limit": "int",
    "k": "int",
    "bm25_k1": "float",
    "bm25_b": "float",
    "role_threshold": "float",
    "max_reference_chars": "int",
    "embedding_seed": "int",
}
