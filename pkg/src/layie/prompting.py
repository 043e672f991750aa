"""Prompt assembly: few-shot / chain-of-thought templates and example
condensation.

Example blocks carry condensed text without coordinates; the tested chunk
keeps its coordinate tags. With zero examples the examples header is
omitted entirely.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

from .chunker import Chunk
from .corpus import ALLOWED_EXAMPLE_COUNTS, Document, ExampleSet, Schema
from .errors import UsageError

log = logging.getLogger(__name__)

PROMPT_KINDS = ("few_shot", "cot")

EXAMPLES_HEADER = "### Examples ###"
NEW_DOCUMENTS_HEADER = "### New Documents ###"

# Harness-chosen wording; the template structure is fixed but these strings
# are editable per run and participate in the cache key via the prompt text.
DEFAULT_TASK_DESCRIPTION = (
    "Extract the entities defined by the schema below from the document. "
    "Return a single JSON object whose keys are exactly the schema "
    "attributes and whose values are the extracted strings. Use the "
    "document text verbatim; do not invent values."
)
DEFAULT_REASONING = (
    "Locate each schema attribute in the document, considering the layout "
    "coordinates, then read off its value before writing the extraction."
)

CONDENSE_INSTRUCTION = (
    "Condense the following document into a brief text summary. The summary "
    "must contain each listed entity value verbatim."
)
CONDENSE_AUGMENT = (
    "Your previous summary was missing some entity values. Rewrite it and "
    "include every value exactly as listed."
)


@dataclass(frozen=True)
class PromptStrategy:
    kind: str  # few_shot | cot
    example_count: int

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise UsageError(f"unknown prompt kind {self.kind!r}")
        if self.example_count not in ALLOWED_EXAMPLE_COUNTS:
            raise UsageError(
                f"example count must be one of {ALLOWED_EXAMPLE_COUNTS}, "
                f"got {self.example_count}"
            )


@dataclass(frozen=True)
class Prompt:
    doc_id: str
    chunk_index: int
    text: str
    strategy: PromptStrategy
    schema_digest: str


def schema_digest(schema: Schema) -> str:
    return hashlib.sha256(schema.digest_text().encode("utf-8")).hexdigest()[:16]


def _schema_representation(schema: Schema) -> str:
    return json.dumps(
        {a.name: a.value_pattern for a in schema.attributes}, indent=2
    )


def _task_block(schema: Schema, task_description: str) -> str:
    return f"(<Task>)\n{task_description}\n{_schema_representation(schema)}\n(</Task>)"


def _example_block(example, schema, strategy, task_description, reasoning) -> str:
    parts = [
        f"(<Document>)\n{example.condensed_text}\n(</Document>)",
        _task_block(schema, task_description),
    ]
    if strategy.kind == "cot":
        parts.append(f"(<Reasoning>)\n{reasoning}\n(</Reasoning>)")
    extraction = json.dumps(
        {k: v if len(v) != 1 else v[0] for k, v in example.entities.items()}, indent=2
    )
    parts.append(f"(<Extraction>)\n{extraction}\n(</Extraction>)")
    return "\n".join(parts)


def build_prompt(
    chunk: Chunk,
    schema: Schema,
    strategy: PromptStrategy,
    examples: ExampleSet,
    task_description: str = DEFAULT_TASK_DESCRIPTION,
    reasoning: str = DEFAULT_REASONING,
) -> Prompt:
    """Assemble the full prompt for one chunk."""
    if len(examples.examples) != strategy.example_count:
        raise UsageError(
            f"strategy expects {strategy.example_count} examples, "
            f"got {len(examples.examples)}"
        )
    sections = []
    if examples.examples:
        sections.append(EXAMPLES_HEADER)
        for example in examples.examples:
            sections.append(
                _example_block(example, schema, strategy, task_description, reasoning)
            )
    sections.append(NEW_DOCUMENTS_HEADER)
    sections.append(f"(<Document>)\n{chunk.serialize()}\n(</Document>)")
    sections.append(_task_block(schema, task_description))
    if strategy.kind == "cot":
        sections.append(f"(<Reasoning>)\n{reasoning}\n(</Reasoning>)")
    sections.append("(<Extraction>)")
    return Prompt(
        doc_id=chunk.doc_id,
        chunk_index=chunk.index,
        text="\n".join(sections),
        strategy=strategy,
        schema_digest=schema_digest(schema),
    )


def condense_request(doc_text: str, entities: dict[str, list[str]], augment: bool = False) -> str:
    """The text sent to a backend when condensing an example document."""
    parts = [CONDENSE_INSTRUCTION]
    if augment:
        parts.append(CONDENSE_AUGMENT)
    parts.append("Entities:\n" + json.dumps(entities, indent=2))
    parts.append("Document:\n" + doc_text)
    return "\n".join(parts)


def condense_example(
    doc: Document,
    entities: dict[str, list[str]],
    backend,
    doc_text: str | None = None,
    retry_budget: int = 2,
    cache: dict | None = None,
    schema_dig: str = "",
) -> str:
    """Produce a condensed example text containing every entity value.

    Retries with an augmentation instruction when values are missing; after
    the retry budget is exhausted the missing values are appended verbatim
    and the degradation is logged.
    """
    cache_key = (doc.id, schema_dig)
    if cache is not None and cache_key in cache:
        return cache[cache_key]
    if doc_text is None:
        doc_text = " ".join(w.text for w in doc.words())
    all_values = [v for values in entities.values() for v in values]
    text = backend.complete_text(condense_request(doc_text, entities))
    attempts = 0
    while any(v not in text for v in all_values) and attempts < retry_budget:
        attempts += 1
        text = backend.complete_text(condense_request(doc_text, entities, augment=True))
    missing = [v for v in all_values if v not in text]
    if missing:
        log.warning(
            "document %s: condensed example missing %d values after %d retries; "
            "appending verbatim",
            doc.id,
            len(missing),
            attempts,
        )
        text = text.rstrip() + "\nKey values: " + "; ".join(missing)
    if cache is not None:
        cache[cache_key] = text
    return text
