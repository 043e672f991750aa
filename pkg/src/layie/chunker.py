"""Token-budgeted, word-boundary-preserving document chunking.

Chunks are built by sequentially accumulating whole words up to the token
limit. A line segment may span chunks: the split happens at a word boundary
and each piece keeps the segment's coordinate tag, so no layout information
is lost. Words are never split and never dropped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import UsageError
from .rendering import LayoutText, Segment

log = logging.getLogger(__name__)

CHUNK_LIMITS = {"small": 1024, "medium": 2048, "max": 4096}

# Every coordinate tag "[x0,y0,x1,y1]" is charged a flat token cost.
COORD_TAG_COST = 6


def _default_token_cost(text: str) -> int:
    return sum(max(1, math.ceil(len(word) / 4)) for word in text.split())


_TOKENIZERS = {"default": _default_token_cost}


def register_tokenizer(name: str, fn) -> None:
    _TOKENIZERS[name] = fn


def token_cost(text: str, tokenizer: str = "default") -> int:
    """Token cost of plain text under a registered tokenizer."""
    if tokenizer not in _TOKENIZERS:
        raise UsageError(f"unknown tokenizer {tokenizer!r}")
    return _TOKENIZERS[tokenizer](text)


@dataclass(frozen=True)
class ChunkPolicy:
    size_category: str  # small | medium | max
    tokenizer: str = "default"

    def __post_init__(self):
        if self.size_category not in CHUNK_LIMITS:
            raise UsageError(
                f"unknown chunk size {self.size_category!r}; "
                f"expected one of {sorted(CHUNK_LIMITS)}"
            )
        if self.tokenizer not in _TOKENIZERS:
            raise UsageError(f"unknown tokenizer {self.tokenizer!r}")

    @property
    def token_limit(self) -> int:
        return CHUNK_LIMITS[self.size_category]


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    segments: tuple[Segment, ...]
    token_cost: int
    oversized: bool = False

    def serialize(self) -> str:
        return "\n".join(seg.serialize() for seg in self.segments)

    def words(self) -> list[str]:
        return [w for seg in self.segments for w in seg.text.split()]


def chunk_document(lt: LayoutText, policy: ChunkPolicy) -> list[Chunk]:
    """Split a rendered document into chunks under the policy's token limit.

    Greedy sequential fill: each word is appended while the cumulative cost
    stays within the limit; otherwise the current chunk closes and a new one
    starts. A single word whose cost alone exceeds the limit is emitted as
    its own flagged chunk rather than dropped.
    """
    limit = policy.token_limit
    cost_of = _TOKENIZERS[policy.tokenizer]

    chunks: list[Chunk] = []
    current: list[tuple[Segment, list[str]]] = []  # (source segment, words)
    cost = 0

    def close(oversized: bool = False):
        nonlocal current, cost
        if current:
            segments = tuple(
                Segment(text=" ".join(words), box=seg.box) for seg, words in current
            )
            chunks.append(
                Chunk(
                    doc_id=lt.doc_id,
                    index=len(chunks),
                    segments=segments,
                    token_cost=cost,
                    oversized=oversized,
                )
            )
        current = []
        cost = 0

    for segment in lt.segments:
        words = segment.text.split()
        if not words:
            continue
        tag_cost = COORD_TAG_COST if segment.box is not None else 0
        in_current = False  # segment already has a piece in the open chunk
        for word in words:
            word_cost = max(1, cost_of(word))
            added = word_cost + (0 if in_current else tag_cost)
            if current and cost + added > limit:
                close()
                in_current = False
                added = word_cost + tag_cost
            if not current and added > limit:
                # Degenerate case: this word alone cannot fit the budget.
                log.warning(
                    "document %s: word of cost %d exceeds chunk limit %d; "
                    "emitting oversized chunk",
                    lt.doc_id,
                    added,
                    limit,
                )
                current = [(segment, [word])]
                cost = added
                close(oversized=True)
                in_current = False
                continue
            if not in_current:
                current.append((segment, []))
                in_current = True
            current[-1][1].append(word)
            cost += added
    close()
    return chunks
