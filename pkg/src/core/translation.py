"""
Machine-translation clients used by back-translation augmentation.
"""
import os
import threading
from typing import Callable, Optional, Protocol

import requests

from src.core.errors import ConfigError, TranslationError

API_KEY_ENV = "DIDA_MT_KEY"


class TranslatorClient(Protocol):
    def translate(self, text: str, src: str, dst: str) -> str:
        ...


class StubTranslator:
    """
    Offline deterministic translator. Identity by default; optional callables transform text
    on the way out of the source language (`forward`) and back into it (`backward`).
    """

    def __init__(self, forward: Optional[Callable[[str], str]] = None,
                 backward: Optional[Callable[[str], str]] = None, source_lang: str = "en"):
        self.forward = forward
        self.backward = backward
        self.source_lang = source_lang

    def translate(self, text: str, src: str, dst: str) -> str:
        fn = self.forward if src == self.source_lang else self.backward
        return fn(text) if fn else text


class HttpTranslator:
    """
    Client for a LibreTranslate-style HTTP endpoint (POST JSON, `translatedText` in the reply).
    The API key is read from the DIDA_MT_KEY environment variable. Calls are serialized through
    one session.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, api_key: Optional[str] = None):
        if not endpoint:
            raise ConfigError("HTTP translator needs an endpoint URL (translator_endpoint)")
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.session = requests.Session()
        self._lock = threading.Lock()

    def translate(self, text: str, src: str, dst: str) -> str:
        """
        Translates one text.

        Raises:
            TranslationError: On network failures, timeouts, HTTP errors or malformed replies.
        """
        payload = {"q": text, "source": src, "target": dst, "format": "text"}
        if self.api_key:
            payload["api_key"] = self.api_key
        try:
            with self._lock:
                response = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
            response.raise_for_status()
            return response.json()["translatedText"]
        except requests.RequestException as e:
            raise TranslationError(f"Translation {src}->{dst} failed: {e}") from e
        except (KeyError, ValueError) as e:
            raise TranslationError(f"Malformed translation reply from {self.endpoint}: {e}") from e


def make_translator(kind: str, endpoint: Optional[str] = None, timeout: float = 10.0,
                    source_lang: str = "en") -> TranslatorClient:
    if kind == "http":
        return HttpTranslator(endpoint, timeout=timeout)
    return StubTranslator(source_lang=source_lang)
