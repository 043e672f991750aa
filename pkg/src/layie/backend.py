"""Completion backends: HTTP chat-completions, ground-truth oracle, replay.

All backends share the same surface: ``complete(prompt)`` returns a
Completion and ``complete_text(text)`` serves auxiliary requests (Markdown
conversion, example condensation). Responses are persisted in a
content-addressed cache so identical configurations never repeat work.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .chunker import token_cost
from .errors import BackendError, CacheMissError, UsageError
from .prompting import CONDENSE_INSTRUCTION, NEW_DOCUMENTS_HEADER, Prompt

log = logging.getLogger(__name__)

BACKEND_KINDS = ("http", "oracle", "replay")

API_KEY_ENV = "LAYIE_API_KEY"

# USD per token; "input"/"output" rates. Locally served models cost nothing.
DEFAULT_PRICING = {
    "gpt-3.5-turbo": {"input": 0.5e-6, "output": 1.5e-6},
    "gpt-4o": {"input": 2.5e-6, "output": 10.0e-6},
    "llama3-70b": {"input": 0.0, "output": 0.0},
    "oracle": {"input": 0.0, "output": 0.0},
}

_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise UsageError("temperature must be >= 0")


@dataclass(frozen=True)
class BackendSpec:
    kind: str
    model_name: str = "oracle"
    sampling: Sampling = field(default_factory=Sampling)
    base_url: str = "https://api.openai.com/v1"

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise UsageError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class Completion:
    prompt_digest: str
    text: str
    input_tokens: int
    output_tokens: int
    from_cache: bool = False
    model_name: str = ""


@dataclass(frozen=True)
class OracleNoise:
    key_mangle_rate: float = 0.0
    value_reformat_rate: float = 0.0
    hallucination_rate: float = 0.0
    json_corruption_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in (
            "key_mangle_rate",
            "value_reformat_rate",
            "hallucination_rate",
            "json_corruption_rate",
        ):
            rate = getattr(self, name)
            if not 0 <= rate <= 1:
                raise UsageError(f"{name} must be in [0, 1], got {rate}")


def cache_key(prompt_text: str, spec: BackendSpec) -> str:
    """Content-addressed digest; stable across runs and platforms."""
    payload = json.dumps(
        {
            "prompt": prompt_text,
            "model": spec.model_name,
            "temperature": spec.sampling.temperature,
            "max_output_tokens": spec.sampling.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """One JSON file per digest; writes are temp-then-rename atomic."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self._path(digest)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, digest: str, record: dict) -> None:
        path = self._path(digest)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _completion_from_record(digest: str, record: dict, from_cache: bool) -> Completion:
    return Completion(
        prompt_digest=digest,
        text=record["text"],
        input_tokens=record["usage"]["input_tokens"],
        output_tokens=record["usage"]["output_tokens"],
        from_cache=from_cache,
        model_name=record.get("model", ""),
    )


class _BaseBackend:
    """Shared cache handling and call accounting."""

    def __init__(self, spec: BackendSpec, cache: CompletionCache | None = None):
        self.spec = spec
        self.cache = cache
        self.calls = 0  # completions actually computed (not served from cache)
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}

    def _digest_for(self, prompt_text: str, extra: str = "") -> str:
        digest = cache_key(prompt_text, self.spec)
        if extra:
            digest = hashlib.sha256((digest + extra).encode()).hexdigest()
        return digest

    def complete(self, prompt: Prompt, signature=None) -> Completion:
        extra = "" if signature is None else repr(tuple(signature))
        return self._complete_cached(
            prompt.text, extra=extra, signature=signature, doc_id=prompt.doc_id
        )

    def complete_text(self, text: str) -> str:
        return self._complete_cached(text).text

    def _complete_cached(
        self, prompt_text: str, extra: str = "", signature=None, doc_id=None
    ) -> Completion:
        digest = self._digest_for(prompt_text, extra)
        while True:
            if self.cache is not None:
                record = self.cache.get(digest)
                if record is not None:
                    return _completion_from_record(digest, record, from_cache=True)
            with self._lock:
                event = self._inflight.get(digest)
                if event is None:
                    self._inflight[digest] = threading.Event()
                    break
            # Another worker is computing the same digest; wait and re-check.
            event.wait()
        try:
            text, usage = self._generate(prompt_text, signature, doc_id)
            record = {
                "request": {"prompt": prompt_text, "model": self.spec.model_name},
                "text": text,
                "usage": usage,
                "model": self.spec.model_name,
                "timestamp": time.time(),
            }
            with self._lock:
                self.calls += 1
            if self.cache is not None:
                self.cache.put(digest, record)
            return _completion_from_record(digest, record, from_cache=False)
        finally:
            with self._lock:
                self._inflight.pop(digest).set()

    def _generate(self, prompt_text: str, signature, doc_id):
        raise NotImplementedError


class HttpBackend(_BaseBackend):
    """OpenAI-compatible chat-completions client with retry/backoff."""

    def __init__(
        self,
        spec: BackendSpec,
        cache: CompletionCache | None = None,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        max_concurrency: int = 4,
        session=None,
    ):
        super().__init__(spec, cache)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._semaphore = threading.Semaphore(max_concurrency)
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _generate(self, prompt_text: str, signature, doc_id):
        api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendError(f"{API_KEY_ENV} is not set")
        body = {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": self.spec.sampling.temperature,
            "max_tokens": self.spec.sampling.max_output_tokens,
        }
        url = self.spec.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}"}
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._session.post(
                        url, json=body, headers=headers, timeout=120
                    )
            except OSError as exc:
                last_error = exc
                log.warning("request failed (%s); attempt %d", exc, attempt + 1)
                continue
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = BackendError(
                    f"transient status {response.status_code}",
                    status=response.status_code,
                )
                log.warning("transient status %d; attempt %d", response.status_code, attempt + 1)
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"chat completion failed with status {response.status_code}: "
                    f"{response.text[:500]}",
                    status=response.status_code,
                )
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            return text, {
                "input_tokens": usage.get("prompt_tokens", token_cost(prompt_text)),
                "output_tokens": usage.get("completion_tokens", token_cost(text)),
            }
        raise BackendError(f"retries exhausted: {last_error}")


_COORD_TAG = re.compile(r"\s*\[\d+,\d+,\d+,\d+\]")
_ISO_DATE = re.compile(r"\d{4}-\d{2}-\d{2}")
_WS = re.compile(r"\s+")


def _normalize(text: str) -> str:
    return _WS.sub(" ", text.strip()).lower()


def _new_document_block(prompt_text: str) -> str:
    tail = prompt_text.split(NEW_DOCUMENTS_HEADER, 1)[-1]
    start = tail.find("(<Document>)")
    end = tail.find("(</Document>)")
    if start == -1 or end == -1:
        return tail
    return tail[start + len("(<Document>)") : end]


def _reformat_date(value: str, rng: random.Random) -> str:
    year, month, day = value.split("-")
    month_name = [
        "January", "February", "March", "April", "May", "June",
        "July", "August", "September", "October", "November", "December",
    ][int(month) - 1]
    forms = [
        f"{int(month)}/{int(day)}/{year}",
        f"{month_name} {int(day)}, {year}",
        f"{int(day)} {month_name} {year}",
    ]
    return rng.choice(forms)


def _reformat_value(value: str, rng: random.Random) -> str:
    if _ISO_DATE.fullmatch(value.strip()):
        return _reformat_date(value.strip(), rng)
    if value.strip().isdigit() and len(value.strip()) > 1:
        digits = value.strip()
        pos = rng.randrange(1, len(digits))
        return digits[:pos] + " " + digits[pos:]
    if "-" in value:
        return value.replace("-", "–", 1)  # en dash; data cleaning restores it
    if "'" in value:
        return value.replace("'", "’", 1)
    return value


class OracleBackend(_BaseBackend):
    """Deterministic ground-truth backend for tests and dry runs.

    Emits the document's ground-truth entities restricted to the values
    actually present in the prompt's chunk, optionally perturbed by seeded
    noise that synthesizes real LLM failure modes. ``effect_hook`` maps a
    call signature to a number of hallucinated extra values, which lets
    tests shape the configuration-response landscape.
    """

    def __init__(
        self,
        spec: BackendSpec,
        corpus,
        cache: CompletionCache | None = None,
        noise: OracleNoise | None = None,
        effect_hook=None,
    ):
        super().__init__(spec, cache)
        self.corpus = corpus
        self.noise = noise or OracleNoise()
        self.effect_hook = effect_hook

    def _generate(self, prompt_text: str, signature, doc_id):
        if prompt_text.startswith(CONDENSE_INSTRUCTION):
            text = self._condense(prompt_text)
        elif prompt_text.startswith("Convert the following OCR text"):
            text = self._markdown(prompt_text)
        else:
            text = self._extract(prompt_text, signature, doc_id)
        return text, {
            "input_tokens": token_cost(prompt_text),
            "output_tokens": token_cost(text),
        }

    def _condense(self, prompt_text: str) -> str:
        match = re.search(r"Entities:\n(\{.*?\})\nDocument:", prompt_text, re.DOTALL)
        entities = json.loads(match.group(1)) if match else {}
        lines = ["This document records the following details."]
        for attr, values in entities.items():
            if not isinstance(values, list):
                values = [values]
            label = attr.replace("_", " ")
            for value in values:
                lines.append(f"The {label} is {value}.")
        return " ".join(lines)

    def _markdown(self, prompt_text: str) -> str:
        body = prompt_text.split("\n\n", 1)[-1]
        return _COORD_TAG.sub("", body)

    def _rng_for(self, prompt_text: str) -> random.Random:
        seed_material = f"{self.noise.seed}:{cache_key(prompt_text, self.spec)}"
        seed = int.from_bytes(hashlib.sha256(seed_material.encode()).digest()[:8], "big")
        return random.Random(seed)

    def _extract(self, prompt_text: str, signature, doc_id) -> str:
        if doc_id is None:
            raise UsageError("oracle extraction requires a Prompt with a doc_id")
        try:
            doc = self.corpus.by_id(doc_id)
        except KeyError:
            raise UsageError(f"oracle has no document {doc_id!r} in its corpus")
        chunk_text = _normalize(_COORD_TAG.sub("", _new_document_block(prompt_text)))
        rng = self._rng_for(prompt_text)
        noise = self.noise
        entries: dict[str, list[str]] = {}
        for attr, values in doc.ground_truth.items():
            present = [v for v in values if _normalize(v) in chunk_text]
            if not present:
                continue
            emitted = []
            for value in present:
                if rng.random() < noise.value_reformat_rate:
                    value = _reformat_value(value, rng)
                emitted.append(value)
            key = attr
            if rng.random() < noise.key_mangle_rate:
                key = attr.replace("_", " ") if "_" in attr else attr.title()
            entries[key] = emitted
        if rng.random() < noise.hallucination_rate:
            entries[f"extra_note_{rng.randrange(1000)}"] = [
                f"hallucinated-{rng.randrange(10 ** 6)}"
            ]
        extra_count = self.effect_hook(signature) if (self.effect_hook and signature is not None) else 0
        if extra_count and entries:
            first_attr = next(iter(entries))
            for i in range(extra_count):
                entries[first_attr].append(f"zz{rng.getrandbits(32):08x}q{i}")
        payload = {k: (v[0] if len(v) == 1 else v) for k, v in entries.items()}
        text = json.dumps(payload, indent=1)
        if rng.random() < noise.json_corruption_rate:
            text = text.rstrip().rstrip("}")  # truncated brace: never parses
        return text


class ReplayBackend(_BaseBackend):
    """Serves previously stored completions only; never computes."""

    def __init__(self, spec: BackendSpec, cache: CompletionCache):
        super().__init__(spec, cache)

    def _complete_cached(
        self, prompt_text: str, extra: str = "", signature=None, doc_id=None
    ) -> Completion:
        digest = self._digest_for(prompt_text, extra)
        record = self.cache.get(digest)
        if record is None:
            raise CacheMissError(digest)
        return _completion_from_record(digest, record, from_cache=True)


def make_backend(
    spec: BackendSpec,
    cache: CompletionCache | None = None,
    corpus=None,
    noise: OracleNoise | None = None,
    effect_hook=None,
    **http_options,
):
    if spec.kind == "http":
        return HttpBackend(spec, cache=cache, **http_options)
    if spec.kind == "oracle":
        if corpus is None:
            raise UsageError("oracle backend requires a corpus")
        return OracleBackend(spec, corpus, cache=cache, noise=noise, effect_hook=effect_hook)
    if spec.kind == "replay":
        if cache is None:
            raise UsageError("replay backend requires a cache directory")
        return ReplayBackend(spec, cache)
    raise UsageError(f"unknown backend kind {spec.kind!r}")


def complete(prompt: Prompt, spec: BackendSpec, noise: OracleNoise | None = None, **kwargs) -> Completion:
    """One-shot completion without a long-lived backend object."""
    return make_backend(spec, noise=noise, **kwargs).complete(prompt)


@dataclass
class CostSummary:
    total_tokens: int
    total_cost_usd: float
    per_model: dict[str, dict]
    unpriced_models: tuple[str, ...] = ()

    def __add__(self, other: "CostSummary") -> "CostSummary":
        per_model = {m: dict(v) for m, v in self.per_model.items()}
        for model, entry in other.per_model.items():
            bucket = per_model.setdefault(
                model, {"input_tokens": 0, "output_tokens": 0, "cost_usd": 0.0}
            )
            for key in entry:
                bucket[key] += entry[key]
        return CostSummary(
            total_tokens=self.total_tokens + other.total_tokens,
            total_cost_usd=self.total_cost_usd + other.total_cost_usd,
            per_model=per_model,
            unpriced_models=tuple(sorted(set(self.unpriced_models) | set(other.unpriced_models))),
        )


def usage_report(completions, pricing: dict | None = None) -> CostSummary:
    """Sum token usage and price it per model."""
    pricing = pricing if pricing is not None else DEFAULT_PRICING
    per_model: dict[str, dict] = {}
    unpriced = set()
    for completion in completions:
        model = completion.model_name or "unknown"
        bucket = per_model.setdefault(
            model, {"input_tokens": 0, "output_tokens": 0, "cost_usd": 0.0}
        )
        bucket["input_tokens"] += completion.input_tokens
        bucket["output_tokens"] += completion.output_tokens
    total_tokens = 0
    total_cost = 0.0
    for model, bucket in per_model.items():
        total_tokens += bucket["input_tokens"] + bucket["output_tokens"]
        rates = pricing.get(model)
        if rates is None:
            unpriced.add(model)
            log.warning("no pricing for model %r; cost reported as unpriced", model)
            continue
        bucket["cost_usd"] = (
            bucket["input_tokens"] * rates["input"]
            + bucket["output_tokens"] * rates["output"]
        )
        total_cost += bucket["cost_usd"]
    return CostSummary(
        total_tokens=total_tokens,
        total_cost_usd=total_cost,
        per_model=per_model,
        unpriced_models=tuple(sorted(unpriced)),
    )
