"""LLM prompting, response caching and description embedding.

Backends only need a ``provider_id`` and a ``generate(prompt) -> str``.
:class:`LlmClient` puts a prompt-hash keyed cache in front of any backend and
keeps a log of the prompts that actually reached it.
"""
from __future__ import annotations

import enum
import hashlib
import json
import os
import re
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .embedding import l2_normalize
from .errors import (
    EmptyInput,
    FixtureMiss,
    HttpBadStatus,
    HttpTimeout,
    MalformedResponse,
    MissingSlot,
    UnknownDescription,
)

API_KEY_ENV = "SGC_LLM_API_KEY"


class PromptKind(enum.Enum):
    INITIAL = "initial"
    SUMMARIZE = "summarize"
    SUMMARY_COMPARE = "summary_compare"
    DIRECT_COMPARE = "direct_compare"


TEMPLATES = {
    PromptKind.INITIAL: "What features are useful to distinguish {HOI category} in a photo?",
    PromptKind.SUMMARIZE: "Summarize the following interactions with one sentence: {category list}?",
    PromptKind.SUMMARY_COMPARE: "What features are useful to distinguish {HOI category} from {subset description}?",
    PromptKind.DIRECT_COMPARE: (
        "What features are useful to distinguish {target category} from {other categories} in a photo?"
    ),
}

_SLOT = re.compile(r"\{([^{}]+)\}")


def template_slots(kind: PromptKind) -> list[str]:
    return _SLOT.findall(TEMPLATES[kind])


def render_prompt(kind: PromptKind, bindings: Mapping[str, str]) -> str:
    missing = [s for s in template_slots(kind) if s not in bindings]
    if missing:
        raise MissingSlot(f"{kind.value} prompt is missing slot(s) {missing}")
    return _SLOT.sub(lambda m: str(bindings[m.group(1)]), TEMPLATES[kind])


@dataclass(frozen=True)
class LlmResponse:
    text: str
    provider_id: str
    cached: bool


# -- backends ---------------------------------------------------------------

class FixtureProvider:
    """Looks prompts up in a prompt -> response table.

    ``fallback`` (usually a :class:`StubProvider`) answers prompts the table
    does not contain; without one a miss raises :class:`FixtureMiss`.
    """

    provider_id = "fixture"

    def __init__(self, table: Mapping[str, str], fallback=None):
        self.table = dict(table)
        self.fallback = fallback

    @classmethod
    def from_file(cls, path, fallback=None) -> "FixtureProvider":
        with open(path) as fh:
            return cls(json.load(fh), fallback=fallback)

    def generate(self, prompt: str) -> str:
        if prompt in self.table:
            return self.table[prompt]
        if self.fallback is not None:
            return self.fallback.generate(prompt)
        raise FixtureMiss(f"no fixture response for prompt {prompt!r}")


_STUB_WORDS = (
    "hand arm grip reach lean posture contact motion seated standing bent open closed "
    "held lifted pushed pulled near above below beside facing turned surface edge handle "
    "strap body head foot knee shoulder wrist fingers outdoor indoor table ground water "
    "grass street light shadow fast slow careful playful steady balanced"
).split()


class StubProvider:
    """Deterministic synthetic descriptions seeded by (seed, prompt)."""

    def __init__(self, seed: int = 0, lines: int = 3, words_per_line: int = 4):
        self.seed = seed
        self.lines = lines
        self.words_per_line = words_per_line

    @property
    def provider_id(self) -> str:
        return f"stub-{self.seed}"

    def generate(self, prompt: str) -> str:
        digest = hashlib.sha256(f"{self.seed}\x00{prompt}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        out = []
        for _ in range(self.lines):
            words = rng.choice(_STUB_WORDS, size=self.words_per_line, replace=False)
            out.append("- " + " ".join(words))
        return "\n".join(out)


class CallableProvider:
    """Wraps a plain function; handy for rule-based synthetic fixtures."""

    def __init__(self, fn: Callable[[str], str], provider_id: str = "callable"):
        self.fn = fn
        self.provider_id = provider_id

    def generate(self, prompt: str) -> str:
        return self.fn(prompt)


class HttpProvider:
    """OpenAI-compatible chat-completions endpoint."""

    def __init__(self, endpoint: str, model: str, api_key: Optional[str] = None,
                 timeout: float = 30.0, retries: int = 0, params: Optional[dict] = None):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.retries = retries
        self.params = dict(params or {})

    @property
    def provider_id(self) -> str:
        return f"http-{self.model}"

    def request_body(self, prompt: str) -> dict:
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        body.update(self.params)
        return body

    def generate(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.endpoint}/chat/completions"
        last_exc = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(url, json=self.request_body(prompt), headers=headers,
                                     timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = HttpTimeout(f"no response from {url} within {self.timeout}s: {exc}")
                continue
            if resp.status_code != 200:
                last_exc = HttpBadStatus(f"{url} returned HTTP {resp.status_code}",
                                         status=resp.status_code)
                continue
            return parse_chat_response(resp.text)
        raise last_exc


def parse_chat_response(raw: str) -> str:
    try:
        text = json.loads(raw)["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected chat-completion payload: {exc}") from None
    if not isinstance(text, str) or not text.strip():
        raise MalformedResponse("chat-completion returned empty content")
    return text


# -- cache + client ---------------------------------------------------------

def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ResponseCache:
    """Prompt-hash keyed store. In memory when ``directory`` is None."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, provider_id: str, key: str) -> Path:
        return self.directory / provider_id / f"{key}.json"

    def get(self, provider_id: str, prompt: str) -> Optional[str]:
        key = prompt_key(prompt)
        if self.directory is None:
            with self._lock:
                return self._mem.get(f"{provider_id}/{key}")
        path = self._path(provider_id, key)
        if not path.exists():
            return None
        with open(path) as fh:
            return json.load(fh)["response"]

    def put(self, provider_id: str, prompt: str, response: str) -> None:
        key = prompt_key(prompt)
        if self.directory is None:
            with self._lock:
                self._mem[f"{provider_id}/{key}"] = response
            return
        path = self._path(provider_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump({"prompt": prompt, "response": response}, fh)
        os.replace(tmp, path)


@dataclass
class LlmClient:
    provider: object
    cache: ResponseCache = field(default_factory=ResponseCache)
    max_in_flight: int = 1
    calls: list = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> LlmResponse:
        pid = self.provider.provider_id
        hit = self.cache.get(pid, prompt)
        if hit is not None:
            return LlmResponse(hit, pid, cached=True)
        text = self.provider.generate(prompt)
        if not text or not text.strip():
            raise MalformedResponse("provider returned empty text", prompt=prompt)
        with self._lock:
            self.calls.append(prompt)
        self.cache.put(pid, prompt, text)
        return LlmResponse(text, pid, cached=False)

    def complete_many(self, prompts: list[str]) -> list[LlmResponse]:
        """Results come back in prompt order regardless of concurrency."""
        if self.max_in_flight <= 1 or len(prompts) <= 1:
            return [self.complete(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.complete, prompts))


def complete(prompt: str, provider, cache: Optional[ResponseCache] = None) -> LlmResponse:
    return LlmClient(provider, cache if cache is not None else ResponseCache()).complete(prompt)


# -- text encoding ----------------------------------------------------------

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def split_features(text: str) -> list[str]:
    """Split a multi-feature answer on newlines and bullet markers."""
    items = []
    for line in text.splitlines():
        line = _BULLET.sub("", line).strip()
        if line:
            items.append(line)
    return items or [text.strip()]


_TOKEN = re.compile(r"[a-z0-9]+")
_STOPWORDS = frozenset(
    "a an the of and or to in on at with by for from is are be as it its this that their "
    "they them his her he she person people photo".split()
)


class EncoderMode(enum.Enum):
    FILE_BACKED = "file"
    STUB = "stub"


class TextEncoder:
    """Stand-in for a pretrained text encoder.

    The stub embeds a string as the sum of seeded per-token Gaussian vectors
    plus a smaller whole-string vector, then normalizes. Shared words pull
    descriptions together, and reordered token sets still differ.
    """

    def __init__(self, mode: EncoderMode, dim: int, seed: int = 0, table: Optional[Mapping] = None,
                 string_weight: float = 0.3):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.mode = mode
        self.dim = dim
        self.seed = seed
        self.string_weight = string_weight
        self.table = {}
        if mode is EncoderMode.FILE_BACKED:
            for key, vec in (table or {}).items():
                v = np.asarray(vec, dtype=np.float64)
                if v.shape != (dim,):
                    raise ValueError(f"embedding for {key!r} has shape {v.shape}, expected ({dim},)")
                self.table[key] = v

    @classmethod
    def stub(cls, dim: int = 64, seed: int = 0) -> "TextEncoder":
        return cls(EncoderMode.STUB, dim, seed)

    @classmethod
    def from_table(cls, table: Mapping) -> "TextEncoder":
        if not table:
            raise EmptyInput("embedding table is empty")
        dim = len(next(iter(table.values())))
        return cls(EncoderMode.FILE_BACKED, dim, table=table)

    @classmethod
    def from_file(cls, path) -> "TextEncoder":
        with open(path) as fh:
            return cls.from_table(json.load(fh))

    def _hashed(self, kind: str, s: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}\x00{kind}\x00{s}".encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little")).standard_normal(self.dim)

    def encode(self, desc: str) -> np.ndarray:
        if not desc or not desc.strip():
            raise EmptyInput("cannot encode an empty description")
        if self.mode is EncoderMode.FILE_BACKED:
            if desc not in self.table:
                raise UnknownDescription(f"no embedding for description {desc!r}")
            return l2_normalize(self.table[desc])
        tokens = [t for t in _TOKEN.findall(desc.lower()) if t not in _STOPWORDS]
        v = self.string_weight * self._hashed("str", desc)
        for tok in tokens:
            v = v + self._hashed("tok", tok)
        return l2_normalize(v)

    def encode_answer(self, text: str) -> np.ndarray:
        """Mean of per-feature embeddings of a (possibly bulleted) answer, re-normalized."""
        if self.mode is EncoderMode.FILE_BACKED and text in self.table:
            return self.encode(text)
        feats = [self.encode(f) for f in split_features(text)]
        return l2_normalize(np.mean(feats, axis=0))


def encode_text(desc: str, enc: TextEncoder) -> np.ndarray:
    return enc.encode(desc)
