"""Input representations: layout-tagged OCR text and Markdown.

Both renderers group words into visual lines with the same deterministic
rule: two words share a line iff the vertical overlap of their boxes is at
least half the shorter box height. Lines are ordered by (page, y-center,
left edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import median

from .corpus import Document, Page, Word
from .errors import UsageError

DEFAULT_GRID = 1000

# Column split heuristics for rule-based Markdown: gutter must be at least
# this fraction of the page width and each side must hold several lines.
_MIN_GUTTER_FRACTION = 0.05
_MIN_COLUMN_LINES = 2


@dataclass(frozen=True)
class QuantBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def as_tag(self) -> str:
        return f"[{self.x0},{self.y0},{self.x1},{self.y1}]"


@dataclass(frozen=True)
class Segment:
    text: str
    box: QuantBox | None

    def serialize(self) -> str:
        if self.box is None:
            return self.text
        return f"{self.text} {self.box.as_tag()}"


@dataclass(frozen=True)
class LayoutText:
    doc_id: str
    segments: tuple[Segment, ...]
    representation: str  # "ocr" or "markdown"

    def serialize(self) -> str:
        return "\n".join(seg.serialize() for seg in self.segments)


def _round_half_away(value: float) -> int:
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def quantize_box(box, page_size, grid: int = DEFAULT_GRID) -> QuantBox:
    """Scale a page-unit rectangle onto an integer 0..grid coordinate system."""
    width, height = page_size
    if width <= 0 or height <= 0:
        raise UsageError(f"page dimensions must be positive, got {width}x{height}")
    x0, y0, x1, y1 = box

    def scale(coord, extent):
        return min(grid, max(0, _round_half_away(coord / extent * grid)))

    qx0, qx1 = scale(x0, width), scale(x1, width)
    qy0, qy1 = scale(y0, height), scale(y1, height)
    return QuantBox(x0=qx0, y0=qy0, x1=qx1, y1=qy1)


def _union_box(words) -> tuple[float, float, float, float]:
    return (
        min(w.box[0] for w in words),
        min(w.box[1] for w in words),
        max(w.box[2] for w in words),
        max(w.box[3] for w in words),
    )


def _same_line(a: Word, b: Word) -> bool:
    overlap = min(a.box[3], b.box[3]) - max(a.box[1], b.box[1])
    shorter = min(a.box[3] - a.box[1], b.box[3] - b.box[1])
    if shorter <= 0:
        return overlap >= 0
    return overlap >= 0.5 * shorter


def group_lines(page: Page) -> list[list[Word]]:
    """Group a page's words into visual lines, ordered top-down, left-right."""
    lines: list[list[Word]] = []
    for word in page.words:
        placed = False
        for line in lines:
            if all(_same_line(word, member) for member in line):
                line.append(word)
                placed = True
                break
        if not placed:
            lines.append([word])
    for line in lines:
        line.sort(key=lambda w: (w.box[0], w.box[1]))

    def line_key(line):
        y_center = sum((w.box[1] + w.box[3]) / 2 for w in line) / len(line)
        return (y_center, line[0].box[0])

    lines.sort(key=line_key)
    return lines


def render_layout_text(doc: Document, grid: int = DEFAULT_GRID) -> LayoutText:
    """Emit the OCR representation: one segment per line, tagged with the
    quantized union box of its words."""
    segments = []
    for page in doc.pages:
        page_size = (page.width, page.height)
        for line in group_lines(page):
            text = " ".join(w.text for w in line)
            box = quantize_box(_union_box(line), page_size, grid)
            segments.append(Segment(text=text, box=box))
    return LayoutText(doc_id=doc.id, segments=tuple(segments), representation="ocr")


def _split_columns(lines: list[list[Word]], page: Page) -> list[list[list[Word]]]:
    """Split lines into column groups when a clear vertical gutter exists."""
    if len(lines) < _MIN_COLUMN_LINES:
        return [lines]
    intervals = sorted((w.box[0], w.box[2]) for line in lines for w in line)
    # Find the widest horizontal gap not covered by any word.
    best_gap, best_split = 0.0, None
    covered_until = intervals[0][1]
    for x0, x1 in intervals[1:]:
        if x0 > covered_until:
            gap = x0 - covered_until
            if gap > best_gap:
                best_gap, best_split = gap, (covered_until + x0) / 2
        covered_until = max(covered_until, x1)
    if best_split is None or best_gap < _MIN_GUTTER_FRACTION * page.width:
        return [lines]
    # A word straddling the gutter means this is not a true two-column layout.
    for line in lines:
        if any(w.box[0] < best_split < w.box[2] for w in line):
            return [lines]
    left, right = [], []
    for line in lines:
        left_part = [w for w in line if w.box[2] <= best_split]
        right_part = [w for w in line if w.box[2] > best_split]
        if left_part:
            left.append(left_part)
        if right_part:
            right.append(right_part)
    if len(left) < _MIN_COLUMN_LINES or len(right) < _MIN_COLUMN_LINES:
        return [lines]
    return [left, right]


def _line_height(line) -> float:
    return max(w.box[3] - w.box[1] for w in line)


def _render_page_markdown(page: Page) -> list[str]:
    lines = group_lines(page)
    if not lines:
        return []
    out: list[str] = []
    heights = [_line_height(line) for line in lines]
    typical = median(heights)
    for column in _split_columns(lines, page):
        previous_bottom = None
        paragraph: list[str] = []
        for line in column:
            text = " ".join(w.text for w in line)
            top = min(w.box[1] for w in line)
            bottom = max(w.box[3] for w in line)
            tall = typical > 0 and _line_height(line) >= 1.3 * typical
            gap = previous_bottom is not None and top - previous_bottom > _line_height(line)
            if tall:
                if paragraph:
                    out.append(" ".join(paragraph))
                    paragraph = []
                out.append(f"## {text}")
            else:
                if gap and paragraph:
                    out.append(" ".join(paragraph))
                    paragraph = []
                paragraph.append(text)
            previous_bottom = bottom
        if paragraph:
            out.append(" ".join(paragraph))
    return out


_MARKDOWN_INSTRUCTION = (
    "Convert the following OCR text with layout coordinates into Markdown. "
    "Preserve every word of the source text; do not summarize or omit "
    "content. Use headings, paragraphs and pipe tables where the layout "
    "suggests them.\n\n"
)


def markdown_conversion_request(doc: Document, grid: int = DEFAULT_GRID) -> str:
    """The text sent to a backend for LLM-assisted Markdown conversion."""
    return _MARKDOWN_INSTRUCTION + render_layout_text(doc, grid).serialize()


def render_markdown(doc: Document, mode: str = "rule_based", backend=None) -> LayoutText:
    """Emit the Markdown representation (no coordinate tags).

    ``rule_based`` infers headings and paragraphs deterministically from the
    line grouping and never alters word content. ``llm_assisted`` asks the
    given backend to produce the Markdown.
    """
    if mode == "rule_based":
        blocks: list[str] = []
        for page in doc.pages:
            blocks.extend(_render_page_markdown(page))
        segments = tuple(Segment(text=block, box=None) for block in blocks)
        return LayoutText(doc_id=doc.id, segments=segments, representation="markdown")
    if mode == "llm_assisted":
        if backend is None:
            raise UsageError("llm_assisted markdown rendering requires a backend")
        text = backend.complete_text(markdown_conversion_request(doc))
        segments = tuple(
            Segment(text=block, box=None) for block in text.split("\n") if block.strip()
        )
        return LayoutText(doc_id=doc.id, segments=segments, representation="markdown")
    raise UsageError(f"unknown markdown mode {mode!r}")


def render_input(doc: Document, input_type: str, grid: int = DEFAULT_GRID) -> LayoutText:
    """Dispatch on the configuration's input type."""
    if input_type == "ocr":
        return render_layout_text(doc, grid)
    if input_type == "markdown":
        return render_markdown(doc, mode="rule_based")
    raise UsageError(f"unknown input type {input_type!r}")
