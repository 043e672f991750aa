"""Document model, dataset adapters, schema loading and example selection.

The normalized on-disk corpus format is JSONL, one document per line:

    {"id": "...",
     "pages": [{"width": W, "height": H,
                "words": [{"text": "...", "box": [x0, y0, x1, y1]}, ...]}],
     "ground_truth": {"attr": ["value", ...], ...}}

Dataset-specific adapters (VRDU, FUNSD) map their annotation layouts into
this shape so the rest of the pipeline only ever sees normalized documents.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusError, SchemaError, UsageError

ALLOWED_EXAMPLE_COUNTS = (0, 1, 3, 5)

VALUE_KINDS = ("date", "free_text", "numeric")

# Fixed sanity probe: a date-kind pattern must accept ISO dates.
_ISO_DATE_PROBE = "2000-01-31"


@dataclass(frozen=True)
class Word:
    text: str
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class Page:
    width: float
    height: float
    words: tuple[Word, ...]


@dataclass(frozen=True)
class Document:
    id: str
    pages: tuple[Page, ...]
    ground_truth: dict[str, list[str]] = field(default_factory=dict)

    def words(self):
        """All words across pages in reading order."""
        for page in self.pages:
            yield from page.words


@dataclass(frozen=True)
class SchemaAttribute:
    name: str
    value_pattern: str
    kind: str  # one of VALUE_KINDS


@dataclass(frozen=True)
class Schema:
    attributes: tuple[SchemaAttribute, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> SchemaAttribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def digest_text(self) -> str:
        return json.dumps(
            {a.name: a.value_pattern for a in self.attributes}, sort_keys=False
        )


@dataclass(frozen=True)
class Example:
    condensed_text: str
    entities: dict[str, list[str]]


@dataclass(frozen=True)
class ExampleSet:
    strategy_level: str
    examples: tuple[Example, ...]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    schema: Schema | None = None

    def __len__(self):
        return len(self.documents)

    def by_id(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.id == doc_id:
                return doc
        raise KeyError(doc_id)


def _validate_document(doc: Document, schema: Schema | None = None) -> None:
    if not doc.id:
        raise CorpusError("document with empty id")
    if not doc.pages:
        raise CorpusError(f"document {doc.id!r}: no pages")
    for p_idx, page in enumerate(doc.pages):
        if page.width <= 0 or page.height <= 0:
            raise CorpusError(
                f"document {doc.id!r} page {p_idx}: non-positive dimensions"
            )
        for w_idx, word in enumerate(page.words):
            if not word.text:
                raise CorpusError(
                    f"document {doc.id!r} page {p_idx} word {w_idx}: empty text"
                )
            x0, y0, x1, y1 = word.box
            if not (0 <= x0 <= x1 <= page.width and 0 <= y0 <= y1 <= page.height):
                raise CorpusError(
                    f"document {doc.id!r} page {p_idx} word {w_idx}: "
                    f"box {word.box} outside page {page.width}x{page.height}"
                )
    if schema is not None:
        for attr in doc.ground_truth:
            if attr not in schema.names:
                raise CorpusError(
                    f"document {doc.id!r}: ground-truth attribute {attr!r} "
                    "not in schema"
                )


def _as_value_list(value) -> list[str]:
    if isinstance(value, list):
        return [str(v) for v in value]
    return [str(value)]


def _document_from_record(record: dict) -> Document:
    try:
        doc_id = record["id"]
        pages = []
        for page_rec in record["pages"]:
            words = tuple(
                Word(text=w["text"], box=tuple(float(c) for c in w["box"]))
                for w in page_rec["words"]
            )
            pages.append(
                Page(
                    width=float(page_rec["width"]),
                    height=float(page_rec["height"]),
                    words=words,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(
            f"malformed record for document {record.get('id', '<unknown>')!r}: {exc}"
        ) from exc
    ground_truth = {
        attr: _as_value_list(vals)
        for attr, vals in record.get("ground_truth", {}).items()
    }
    return Document(id=doc_id, pages=tuple(pages), ground_truth=ground_truth)


def document_to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "pages": [
            {
                "width": page.width,
                "height": page.height,
                "words": [{"text": w.text, "box": list(w.box)} for w in page.words],
            }
            for page in doc.pages
        ],
        "ground_truth": doc.ground_truth,
    }


def _load_normalized(path: Path) -> list[Document]:
    documents = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            documents.append(_document_from_record(record))
    return documents


def _load_vrdu(path: Path) -> list[Document]:
    """Adapter for VRDU-style records.

    Expects JSONL where each record carries a filename, an annotation list of
    [attribute, occurrences] pairs and OCR pages with word boxes:

        {"filename": "...",
         "annotations": [["file_date", [["1982-10-31", ...], ...]], ...],
         "ocr": {"pages": [{"width": W, "height": H,
                            "words": [{"text": ..., "box": [...]}]}]}}
    """
    documents = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            doc_id = record.get("filename") or record.get("id")
            if not doc_id:
                raise CorpusError(f"{path}:{line_no}: record without filename")
            ground_truth: dict[str, list[str]] = {}
            for entry in record.get("annotations", []):
                attr, occurrences = entry[0], entry[1]
                values = []
                for occ in occurrences:
                    text = occ[0] if isinstance(occ, list) else occ
                    if text not in values:
                        values.append(str(text))
                if values:
                    ground_truth[attr] = values
            ocr = record.get("ocr", {})
            normalized = {
                "id": doc_id,
                "pages": [
                    {
                        "width": p.get("width", p.get("w")),
                        "height": p.get("height", p.get("h")),
                        "words": [
                            {"text": w["text"], "box": w.get("box", w.get("bbox"))}
                            for w in p.get("words", p.get("tokens", []))
                        ],
                    }
                    for p in ocr.get("pages", [])
                ],
                "ground_truth": ground_truth,
            }
            documents.append(_document_from_record(normalized))
    return documents


def _funsd_entity_text(entity: dict) -> str:
    words = entity.get("words")
    if words:
        return " ".join(w["text"] for w in words if w.get("text"))
    return entity.get("text", "")


def _load_funsd(path: Path) -> list[Document]:
    """Adapter for FUNSD annotation files.

    ``path`` is a directory of per-document JSON files (the dataset's
    ``annotations`` layout). Question-answer links become ground truth:
    attribute = question text, value = answer text. Page dimensions are not
    stored in the annotations, so the page rectangle is the padded hull of
    all word boxes.
    """
    files = sorted(path.glob("*.json"))
    if not files:
        raise CorpusError(f"no FUNSD annotation files under {path}")
    documents = []
    for file in files:
        try:
            record = json.loads(file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{file}: invalid JSON: {exc}") from exc
        entities = record.get("form", [])
        by_id = {e["id"]: e for e in entities if "id" in e}
        all_words = []
        for entity in entities:
            for w in entity.get("words", []):
                if w.get("text"):
                    all_words.append(w)
        if not all_words:
            raise CorpusError(f"{file}: document has no words")
        width = max(w["box"][2] for w in all_words) + 1
        height = max(w["box"][3] for w in all_words) + 1
        ground_truth: dict[str, list[str]] = {}
        for entity in entities:
            if entity.get("label") != "question":
                continue
            question = _funsd_entity_text(entity).strip()
            if not question:
                continue
            for link in entity.get("linking", []):
                other_ids = [i for i in link if i != entity.get("id")]
                for other_id in other_ids:
                    answer_entity = by_id.get(other_id)
                    if not answer_entity or answer_entity.get("label") != "answer":
                        continue
                    answer = _funsd_entity_text(answer_entity).strip()
                    if not answer:
                        continue
                    ground_truth.setdefault(question, [])
                    if answer not in ground_truth[question]:
                        ground_truth[question].append(answer)
        normalized = {
            "id": file.stem,
            "pages": [
                {
                    "width": width,
                    "height": height,
                    "words": [{"text": w["text"], "box": w["box"]} for w in all_words],
                }
            ],
            "ground_truth": ground_truth,
        }
        documents.append(_document_from_record(normalized))
    return documents


_ADAPTERS = {
    "normalized": _load_normalized,
    "vrdu": _load_vrdu,
    "funsd": _load_funsd,
}


def load_corpus(path, adapter: str = "normalized", schema: Schema | None = None) -> Corpus:
    """Load a dataset into normalized documents, validating invariants."""
    if adapter not in _ADAPTERS:
        raise UsageError(
            f"unknown adapter {adapter!r}; expected one of {sorted(_ADAPTERS)}"
        )
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")
    documents = _ADAPTERS[adapter](path)
    seen = set()
    for doc in documents:
        if doc.id in seen:
            raise CorpusError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
        _validate_document(doc, schema)
    return Corpus(documents=tuple(documents), schema=schema)


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the normalized JSONL format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(json.dumps(document_to_record(doc)) + "\n")


def infer_kind(pattern: str) -> str:
    """Classify a value pattern into one of the supported value kinds."""
    compiled = re.compile(pattern)
    if compiled.fullmatch(_ISO_DATE_PROBE) and not compiled.fullmatch("some text"):
        # Accepts ISO dates but not prose: date-like slot. Pure-numeric
        # patterns also match the probe without the dashes, so check those
        # first.
        if not compiled.fullmatch("12345"):
            return "date"
    if compiled.fullmatch("12345") and not compiled.fullmatch("some text"):
        return "numeric"
    return "free_text"


def load_schema(path) -> Schema:
    """Load a schema from a JSON mapping of attribute name to pattern.

    Values may be plain pattern strings (kind inferred from the pattern) or
    objects ``{"pattern": ..., "kind": ...}`` for an explicit kind.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: schema must be a JSON object")
    return schema_from_mapping(raw)


def schema_from_mapping(raw: dict) -> Schema:
    if not raw:
        raise SchemaError("schema defines no attributes")
    attributes = []
    seen = set()
    for name, value in raw.items():
        if name in seen:
            raise SchemaError(f"duplicate schema attribute {name!r}")
        seen.add(name)
        if isinstance(value, dict):
            pattern = value.get("pattern", "")
            kind = value.get("kind")
        else:
            pattern = str(value)
            kind = None
        try:
            re.compile(pattern)
        except re.error as exc:
            raise SchemaError(
                f"attribute {name!r}: pattern does not compile: {exc}"
            ) from exc
        if kind is None:
            kind = infer_kind(pattern)
        if kind not in VALUE_KINDS:
            raise SchemaError(f"attribute {name!r}: unknown kind {kind!r}")
        if kind == "date" and not re.compile(pattern).fullmatch(_ISO_DATE_PROBE):
            raise SchemaError(
                f"attribute {name!r}: date kind but pattern rejects ISO dates"
            )
        attributes.append(SchemaAttribute(name=name, value_pattern=pattern, kind=kind))
    return Schema(attributes=tuple(attributes))


def dynamic_schema_for(doc: Document) -> Schema:
    """Per-document schema built from the document's own ground-truth keys.

    Used for datasets such as FUNSD where keys vary per document and no
    fixed schema exists.
    """
    if not doc.ground_truth:
        raise SchemaError(f"document {doc.id!r} has no ground truth for a dynamic schema")
    return schema_from_mapping({key: r"[\s\S]+" for key in doc.ground_truth})


def select_examples(
    training_docs, count: int, strategy_level: str = "STL"
) -> ExampleSet:
    """Pick the first ``count`` training documents as few-shot examples.

    Condensed texts are left empty here; the prompting module fills them in.
    """
    if count not in ALLOWED_EXAMPLE_COUNTS:
        raise UsageError(
            f"example count must be one of {ALLOWED_EXAMPLE_COUNTS}, got {count}"
        )
    training_docs = list(training_docs)
    if len(training_docs) < count:
        raise UsageError(
            f"need at least {count} training documents, have {len(training_docs)}"
        )
    examples = tuple(
        Example(condensed_text="", entities={k: list(v) for k, v in doc.ground_truth.items()})
        for doc in training_docs[:count]
    )
    return ExampleSet(strategy_level=strategy_level, examples=examples)
