"""Tests the *settings* and *log* modules."""

import logging
import tempfile
import unittest
from pathlib import Path

import pytest

from regcheck.exceptions import ArgumentError, ConfigurationError
from regcheck.gateway import HttpChatProvider
from regcheck.log import decode_level, setup_log
from regcheck.embeddings import HashingEmbeddingProvider
from regcheck.settings import Config, SettingsReader, resolve

INI = """\
[regcheck]
provider_endpoint = http://localhost:8000/v1/chat/completions
model = llama3-8b
k = 7
temperature = 0.2
embedding_seed = 0x5EED
role_mode = union
"""


class TestConfig(unittest.TestCase):
    def test_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "regcheck.ini"
            path.write_text(INI, encoding="utf-8")
            config = Config.from_file(str(path))
        assert config.model == "llama3-8b"
        assert config.k == 7
        assert config.temperature == 0.2
        assert config.embedding_seed == 24301
        assert config.role_mode == "union"
        assert config.max_parallel == 4

    def test_missing_section(self):
        with pytest.raises(ConfigurationError):
            Config.from_file("/nonexistent/regcheck.ini")

    def test_unknown_and_bad_settings(self):
        with pytest.raises(ConfigurationError) as info:
            Config.from_settings({"k": "3", "colour": "blue"})
        assert info.value.kw["keys"] == ["colour"]
        with pytest.raises(ConfigurationError):
            Config.from_settings({"k": "three"})
        with pytest.raises(ArgumentError):
            Config.from_settings({"k": "0"})
        with pytest.raises(ArgumentError):
            Config(corpus="everything")

    def test_override(self):
        config = Config(model="a").override(model="b", k=None, max_parallel=1)
        assert (config.model, config.k, config.max_parallel) == ("b", 5, 1)
        with pytest.raises(ArgumentError):
            Config().override(top_p=2.0)


class TestSettingsReader(unittest.TestCase):
    def setUp(self):
        self.reader = SettingsReader(
            {"n": "0x10", "x": "1.5", "empty": "", "cls": "regcheck.gateway:Gateway"}
        )

    def test_conversions(self):
        assert self.reader.int("n") == 16
        assert self.reader.float("x") == 1.5
        assert self.reader.int("empty") is None
        assert self.reader.read("missing", default="d") == "d"
        with pytest.raises(ConfigurationError):
            self.reader.read("empty", required=True)
        with pytest.raises(ConfigurationError):
            self.reader.float("cls")

    def test_resolve(self):
        assert self.reader.resolve("cls").__name__ == "Gateway"
        assert self.reader.resolve("missing") is None
        assert resolve("regcheck.gateway:HttpChatProvider") is HttpChatProvider
        assert resolve("regcheck.settings").__name__ == "regcheck.settings"
        with pytest.raises(ArgumentError):
            resolve("a:b:c")
        with pytest.raises(ConfigurationError):
            SettingsReader({"c": "regcheck.gateway:Nothing"}).resolve("c")

    def test_config_resources(self):
        config = Config()
        assert config.resource("provider_class") is HttpChatProvider
        assert config.resource("embedding_class") is HashingEmbeddingProvider
        with pytest.raises(ConfigurationError) as info:
            Config(provider_class="regcheck.nowhere:Provider").resource("provider_class")
        assert info.value.kw["key"] == "provider_class"

class TestLog(unittest.TestCase):
    def test_decode_level(self):
        assert decode_level("Warning") == logging.WARNING
        assert decode_level(10) == 10
        with pytest.raises(ArgumentError):
            decode_level("loud")

    def test_setup_log_replaces_its_handlers(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "logs" / "regcheck.log")
            log = setup_log("regcheck.test", "warning", path=path)
            setup_log("regcheck.test", "warning", path=path)
            assert len(log.handlers) == 2
            assert log.level == logging.DEBUG
            logging.getLogger("regcheck.test.gateway").debug("prompt sent")
            for handler in log.handlers:
                handler.flush()
            assert "prompt sent" in Path(path).read_text(encoding="utf-8")
            for handler in list(log.handlers):
                log.removeHandler(handler)
                handler.close()
        assert setup_log("regcheck.test", "error").level == logging.ERROR
