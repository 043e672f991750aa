"""Output refinement: completion decoding, schema key mapping, data cleaning.

Each stage produces a new PredictionSet and never mutates its input, so a
document's initial, mapped and cleaned predictions can coexist and be
re-scored independently.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Schema
from .errors import UsageError

log = logging.getLogger(__name__)

STAGES = ("initial", "mapped", "cleaned")

# Seed aliases for the registration-form attributes; extensible via file.
DEFAULT_SYNONYMS = {
    "file_date": ["date of filing", "filing date", "document date"],
    "foreign_princ_name": ["foreign principal", "foreign principal name"],
    "registrant_name": ["registrant", "name of registrant"],
    "registration_num": ["registration number", "registration no", "reg number"],
    "signer_name": ["signature name", "signed by", "name of signer"],
    "signer_title": ["signature title", "title of signer"],
}


@dataclass(frozen=True)
class PredictionSet:
    doc_id: str
    stage: str  # initial | mapped | cleaned
    entries: dict[str, list[str]]
    parse_failures: int = 0
    non_conformant: frozenset = frozenset()  # (attr, value) pairs failing the pattern

    def __post_init__(self):
        if self.stage not in STAGES:
            raise UsageError(f"unknown prediction stage {self.stage!r}")


class SynonymTable:
    """Lowercased alias -> schema attribute lookup."""

    def __init__(self, mapping: dict[str, list[str]] | None = None):
        self._by_alias: dict[str, str] = {}
        for attr, aliases in (mapping or {}).items():
            for alias in aliases:
                alias = alias.lower()
                existing = self._by_alias.get(alias)
                if existing is not None and existing != attr:
                    raise UsageError(
                        f"alias {alias!r} maps to both {existing!r} and {attr!r}"
                    )
                self._by_alias[alias] = attr

    @classmethod
    def default(cls) -> "SynonymTable":
        return cls(DEFAULT_SYNONYMS)

    @classmethod
    def from_file(cls, path) -> "SynonymTable":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def lookup(self, raw_key: str) -> str | None:
        return self._by_alias.get(raw_key.lower())


def _strip_to_json(text: str) -> str:
    """Drop any prose outside the outermost braces."""
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end < start:
        return text
    return text[start : end + 1]


def _flatten_values(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        out = []
        for item in value:
            out.extend(_flatten_values(item))
        return out
    if isinstance(value, dict):
        out = []
        for item in value.values():
            out.extend(_flatten_values(item))
        return out
    text = str(value).strip()
    return [text] if text else []


def decode_completions(doc_id: str, completions) -> PredictionSet:
    """Parse completion texts as JSON and merge them into initial predictions.

    Non-parsing completions are counted and discarded. Values from all
    chunks are unioned per key; distinct values for the same key are all
    retained.
    """
    entries: dict[str, list[str]] = {}
    failures = 0
    for completion in completions:
        text = completion.text if hasattr(completion, "text") else str(completion)
        try:
            obj = json.loads(_strip_to_json(text))
        except json.JSONDecodeError:
            failures += 1
            continue
        if not isinstance(obj, dict):
            failures += 1
            continue
        for key, value in obj.items():
            bucket = entries.setdefault(str(key), [])
            for item in _flatten_values(value):
                if item not in bucket:
                    bucket.append(item)
    entries = {k: v for k, v in entries.items() if v}
    return PredictionSet(
        doc_id=doc_id, stage="initial", entries=entries, parse_failures=failures
    )


def _normalize_key(key: str) -> str:
    return re.sub(r"[\s\-]+", "_", key.strip().lower())


def _resolve_key(raw_key: str, schema: Schema, synonyms: SynonymTable) -> str | None:
    names = schema.names
    if raw_key in names:
        return raw_key
    normalized = _normalize_key(raw_key)
    if normalized in names:
        return normalized
    via_synonym = synonyms.lookup(raw_key.strip().lower())
    if via_synonym is None:
        via_synonym = synonyms.lookup(normalized.replace("_", " "))
    if via_synonym in names:
        return via_synonym
    # Partial match: unique attribute whose token set is a subset or
    # superset of the raw key's tokens.
    raw_tokens = set(normalized.split("_"))
    candidates = []
    for name in names:
        name_tokens = set(name.split("_"))
        if raw_tokens <= name_tokens or name_tokens <= raw_tokens:
            candidates.append(name)
    if len(candidates) == 1:
        return candidates[0]
    if len(candidates) > 1:
        log.info("ambiguous key %r matches %s; dropping", raw_key, candidates)
    return None


def map_keys(
    preds: PredictionSet, schema: Schema, synonyms: SynonymTable | None = None
) -> PredictionSet:
    """Align raw prediction keys with schema attributes.

    Resolution order: exact, normalized (case/space/hyphen), synonym table,
    then unique partial token match. Unresolved keys are dropped and logged;
    values are never altered.
    """
    synonyms = synonyms or SynonymTable.default()
    entries: dict[str, list[str]] = {}
    for raw_key, values in preds.entries.items():
        attr = _resolve_key(raw_key, schema, synonyms)
        if attr is None:
            log.info("document %s: dropping unmapped key %r", preds.doc_id, raw_key)
            continue
        bucket = entries.setdefault(attr, [])
        for value in values:
            if value not in bucket:
                bucket.append(value)
    return PredictionSet(
        doc_id=preds.doc_id,
        stage="mapped",
        entries=entries,
        parse_failures=preds.parse_failures,
    )


_MONTHS = {
    name: i + 1
    for i, name in enumerate(
        [
            "january", "february", "march", "april", "may", "june",
            "july", "august", "september", "october", "november", "december",
        ]
    )
}
_MONTHS.update({name[:3]: num for name, num in list(_MONTHS.items())})

_DATE_PATTERNS = [
    # YYYY-MM-DD (already ISO)
    (re.compile(r"(\d{4})-(\d{1,2})-(\d{1,2})"), lambda m: (m[1], m[2], m[3])),
    # MM/DD/YYYY (US order; the source corpora are US government forms)
    (re.compile(r"(\d{1,2})/(\d{1,2})/(\d{4})"), lambda m: (m[3], m[1], m[2])),
    # DD Month YYYY
    (
        re.compile(r"(\d{1,2})(?:st|nd|rd|th)?\s+([a-z]+),?\s+(\d{4})"),
        lambda m: (m[3], m[2], m[1]),
    ),
    # Month DD, YYYY
    (
        re.compile(r"([a-z]+)\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})"),
        lambda m: (m[3], m[1], m[2]),
    ),
    # Month YYYY (day defaults to 01)
    (re.compile(r"([a-z]+),?\s+(\d{4})"), lambda m: (m[2], m[1], "1")),
    # Bare year (month and day default to 01)
    (re.compile(r"(\d{4})"), lambda m: (m[1], "1", "1")),
]


def _month_number(token: str) -> int | None:
    if token.isdigit():
        value = int(token)
        return value if 1 <= value <= 12 else None
    return _MONTHS.get(token.lower())


def clean_date(value: str) -> str | None:
    """Parse a date in a common format and return ISO YYYY-MM-DD."""
    text = value.strip().lower()
    for pattern, extract in _DATE_PATTERNS:
        match = pattern.fullmatch(text)
        if not match:
            continue
        year, month_tok, day_tok = extract(match)
        month = _month_number(month_tok)
        if month is None:
            continue
        day = int(day_tok)
        if not 1 <= day <= 31:
            continue
        return f"{int(year):04d}-{month:02d}-{day:02d}"
    return None


_CONTROL = re.compile(r"[\x00-\x1f\x7f]")
_QUOTES = {"‘": "'", "’": "'", "“": '"', "”": '"'}
_DASHES = {"–": "-", "—": "-", "−": "-"}


def clean_free_text(value: str) -> str:
    text = unicodedata.normalize("NFC", value)
    for src, dst in {**_QUOTES, **_DASHES}.items():
        text = text.replace(src, dst)
    text = _CONTROL.sub(" ", text)
    return re.sub(r"\s+", " ", text).strip()


def clean_numeric(value: str) -> str:
    digits = re.sub(r"\D", "", value)
    return digits if digits else value.strip()


def clean_values(preds: PredictionSet, schema: Schema) -> PredictionSet:
    """Normalize values per the attribute's declared kind.

    Values that still fail the attribute's pattern after cleaning are kept
    and flagged as non-conformant rather than dropped.
    """
    entries: dict[str, list[str]] = {}
    flagged = set()
    for attr, values in preds.entries.items():
        try:
            spec = schema.attribute(attr)
        except KeyError:
            # Dynamic-schema corpora can carry keys outside the schema at
            # mapped stage only if mapping was skipped; pass them through.
            entries[attr] = list(values)
            continue
        pattern = re.compile(spec.value_pattern)
        bucket = entries.setdefault(attr, [])
        for value in values:
            if spec.kind == "date":
                cleaned = clean_date(value)
                if cleaned is None:
                    cleaned = clean_free_text(value)
            elif spec.kind == "numeric":
                cleaned = clean_numeric(value)
            else:
                cleaned = clean_free_text(value)
            if cleaned not in bucket:
                bucket.append(cleaned)
            if not pattern.fullmatch(cleaned):
                flagged.add((attr, cleaned))
                log.info(
                    "document %s: value %r for %s does not conform to pattern",
                    preds.doc_id,
                    cleaned,
                    attr,
                )
    return PredictionSet(
        doc_id=preds.doc_id,
        stage="cleaned",
        entries=entries,
        parse_failures=preds.parse_failures,
        non_conformant=frozenset(flagged),
    )


def refine_to_stage(
    doc_id: str,
    completions,
    stage: str,
    schema: Schema,
    synonyms: SynonymTable | None = None,
) -> PredictionSet:
    """Run the refinement pipeline up to the requested stage."""
    if stage not in STAGES:
        raise UsageError(f"unknown refinement stage {stage!r}")
    preds = decode_completions(doc_id, completions)
    if stage == "initial":
        return preds
    preds = map_keys(preds, schema, synonyms)
    if stage == "mapped":
        return preds
    return clean_values(preds, schema)
