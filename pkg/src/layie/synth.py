"""Seeded synthetic corpus generator for dry runs and tests.

Documents mimic registration-form layouts: labelled entity lines plus
filler prose, with every entity value present verbatim in the word stream
so the oracle backend can recover it from any rendering.
"""

from __future__ import annotations

import random

from .corpus import Corpus, Document, Page, Schema, Word, schema_from_mapping

REGISTRATION_SCHEMA = {
    "file_date": r"\d{4}-\d{2}-\d{2}",
    "foreign_princ_name": r"[\w\s.,'&-]+",
    "registrant_name": r"[\w\s.,'&-]+",
    "registration_num": r"\d+",
    "signer_name": r"[\w\s'.-]+",
    "signer_title": r"[\w\s.,'&-]+",
}

_FIRST_NAMES = [
    "Akira", "Catherine", "Daniel", "Elena", "Franz", "Grace", "Hiro",
    "Ingrid", "Jim", "Keiko", "Luis", "Mara", "Noor", "Otto", "Priya",
]
_LAST_NAMES = [
    "Tsutsumi", "Redman-Randell", "O'Brien", "Slattery", "Manatt", "Weiss",
    "Okafor", "Lindqvist", "Moreau", "Takeda", "Novak", "Herrera",
]
_ORG_WORDS = [
    "Trade", "Center", "Council", "Institute", "Association", "Bureau",
    "Society", "Foundation", "Alliance", "Agency",
]
_PLACES = [
    "Japan", "Norway", "Brazil", "Kenya", "Austria", "Chile", "Jordan",
    "Iceland", "Vietnam", "Portugal",
]
_TITLES = [
    "Director General", "General Manager", "Executive Secretary",
    "Chief Counsel", "Regional Director", "Managing Partner",
]
_FILLER = (
    "pursuant to the provisions of the act the undersigned submits this "
    "statement for the period indicated all activities are described in "
    "the attached exhibits which form part of this filing"
).split()


def registration_schema() -> Schema:
    return schema_from_mapping(REGISTRATION_SCHEMA)


def _entities(rng: random.Random, doc_index: int) -> dict[str, list[str]]:
    year = rng.randrange(1960, 2020)
    month = rng.randrange(1, 13)
    day = rng.randrange(1, 29)
    principal = f"{rng.choice(_PLACES)} {rng.choice(_ORG_WORDS)} {rng.choice(_ORG_WORDS)}"
    registrant = f"{rng.choice(_FIRST_NAMES)} {rng.choice(_LAST_NAMES)} Associates"
    signer = f"{rng.choice(_FIRST_NAMES)} {rng.choice(_LAST_NAMES)}"
    return {
        "file_date": [f"{year:04d}-{month:02d}-{day:02d}"],
        "foreign_princ_name": [principal],
        "registrant_name": [registrant],
        "registration_num": [str(1000 + doc_index * 7 + rng.randrange(7))],
        "signer_name": [signer],
        "signer_title": [rng.choice(_TITLES)],
    }


def _layout_words(rng: random.Random, entities: dict[str, list[str]]) -> list[Word]:
    width, height = 1000.0, 800.0
    words: list[Word] = []
    y = 40.0
    line_height = 18.0

    def add_line(texts: list[str]):
        nonlocal y
        x = 50.0
        for text in texts:
            w = 6.0 * max(len(text), 2)
            words.append(Word(text=text, box=(x, y, min(x + w, width), y + line_height)))
            x += w + 8.0
        y += line_height + 10.0

    add_line(["REGISTRATION", "STATEMENT"])
    for attr, values in entities.items():
        label = attr.replace("_", " ").title() + ":"
        for value in values:
            add_line(label.split() + value.split())
        # Interleave filler so documents are not a bare key-value list.
        start = rng.randrange(0, len(_FILLER) - 8)
        add_line(_FILLER[start : start + rng.randrange(4, 9)])
    return words


def generate_corpus(n_docs: int, seed: int = 0, id_prefix: str = "doc") -> Corpus:
    """Deterministic synthetic corpus with attached registration schema."""
    rng = random.Random(seed)
    schema = registration_schema()
    documents = []
    for i in range(n_docs):
        entities = _entities(rng, i)
        words = tuple(_layout_words(rng, entities))
        page = Page(width=1000.0, height=800.0, words=words)
        documents.append(
            Document(id=f"{id_prefix}-{i:03d}", pages=(page,), ground_truth=entities)
        )
    return Corpus(documents=tuple(documents), schema=schema)
