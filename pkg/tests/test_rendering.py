import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layie.corpus import Document, Page, Word
from layie.errors import UsageError
from layie.rendering import (
    group_lines,
    markdown_conversion_request,
    quantize_box,
    render_input,
    render_layout_text,
    render_markdown,
)
from layie.synth import generate_corpus


def page_of(words, width=1000.0, height=800.0):
    return Page(width=width, height=height, words=tuple(words))


def doc_of(words, doc_id="d", **kwargs):
    return Document(id=doc_id, pages=(page_of(words, **kwargs),))


class TestQuantize:
    def test_frozen_example(self):
        box = quantize_box((123.4, 10.0, 600.0, 20.0), (1000.0, 800.0))
        assert (box.x0, box.y0, box.x1, box.y1) == (123, 13, 600, 25)

    def test_corners_clamped(self):
        box = quantize_box((0.0, 0.0, 1000.0, 800.0), (1000.0, 800.0))
        assert (box.x0, box.y0, box.x1, box.y1) == (0, 0, 1000, 1000)

    def test_half_rounds_away_from_zero(self):
        # 0.5 page units on a 1000-unit page maps to exactly 0.5 grid cells.
        box = quantize_box((0.5, 0.5, 1.5, 1.5), (1000.0, 1000.0))
        assert (box.x0, box.y0, box.x1, box.y1) == (1, 1, 2, 2)

    def test_tag_format(self):
        box = quantize_box((123.4, 10.0, 600.0, 20.0), (1000.0, 800.0))
        assert box.as_tag() == "[123,13,600,25]"

    def test_rejects_bad_page(self):
        with pytest.raises(UsageError):
            quantize_box((0, 0, 1, 1), (0.0, 100.0))

    @given(
        st.tuples(*[st.floats(min_value=0, max_value=500, allow_nan=False)] * 4),
        st.floats(min_value=1, max_value=500),
        st.floats(min_value=1, max_value=500),
    )
    @settings(max_examples=200)
    def test_always_within_grid(self, coords, width, height):
        box = quantize_box(coords, (width, height))
        for value in (box.x0, box.y0, box.x1, box.y1):
            assert 0 <= value <= 1000


class TestLineGrouping:
    def test_same_row_merges(self):
        words = [
            Word("b", (100.0, 10.0, 150.0, 20.0)),
            Word("a", (10.0, 11.0, 50.0, 21.0)),
        ]
        lines = group_lines(page_of(words))
        assert len(lines) == 1
        assert [w.text for w in lines[0]] == ["a", "b"]

    def test_under_half_overlap_splits(self):
        # Boxes of height 10 overlapping by 4: below the half-height rule.
        words = [
            Word("a", (10.0, 10.0, 50.0, 20.0)),
            Word("b", (60.0, 16.0, 100.0, 26.0)),
        ]
        assert len(group_lines(page_of(words))) == 2

    def test_exactly_half_overlap_merges(self):
        words = [
            Word("a", (10.0, 10.0, 50.0, 20.0)),
            Word("b", (60.0, 15.0, 100.0, 25.0)),
        ]
        assert len(group_lines(page_of(words))) == 1

    def test_lines_ordered_top_down(self):
        words = [
            Word("lower", (10.0, 100.0, 60.0, 110.0)),
            Word("upper", (10.0, 10.0, 60.0, 20.0)),
        ]
        lines = group_lines(page_of(words))
        assert [line[0].text for line in lines] == ["upper", "lower"]


class TestLayoutTextRendering:
    def test_line_tagged_with_union_box(self):
        words = [
            Word("hello", (100.0, 80.0, 200.0, 100.0)),
            Word("world", (220.0, 80.0, 320.0, 100.0)),
        ]
        lt = render_layout_text(doc_of(words))
        assert lt.representation == "ocr"
        assert lt.serialize() == "hello world [100,100,320,125]"

    def test_deterministic(self):
        doc = generate_corpus(1, seed=9).documents[0]
        assert render_layout_text(doc).serialize() == render_layout_text(doc).serialize()

    def test_every_word_present(self):
        doc = generate_corpus(1, seed=3).documents[0]
        text = render_layout_text(doc).serialize()
        for word in doc.words():
            assert word.text in text


class TestMarkdownRendering:
    def test_no_coordinates_and_all_words_kept(self):
        doc = generate_corpus(1, seed=4).documents[0]
        md = render_markdown(doc)
        assert md.representation == "markdown"
        text = md.serialize()
        for word in doc.words():
            assert word.text in text
        assert all(seg.box is None for seg in md.segments)

    def test_tall_line_becomes_heading(self):
        words = [
            Word("TITLE", (10.0, 10.0, 100.0, 40.0)),
            Word("body", (10.0, 60.0, 60.0, 70.0)),
            Word("text", (70.0, 60.0, 110.0, 70.0)),
            Word("more", (10.0, 75.0, 60.0, 85.0)),
        ]
        text = render_markdown(doc_of(words)).serialize()
        assert "## TITLE" in text
        assert "body text more" in text

    def test_two_column_reading_order(self):
        left = [Word(f"l{i}", (10.0, 10.0 + 20 * i, 100.0, 22.0 + 20 * i)) for i in range(3)]
        right = [Word(f"r{i}", (600.0, 10.0 + 20 * i, 700.0, 22.0 + 20 * i)) for i in range(3)]
        # Interleave so raw order alternates columns.
        words = [w for pair in zip(left, right) for w in pair]
        text = render_markdown(doc_of(words)).serialize()
        assert text.index("l2") < text.index("r0")

    def test_llm_assisted_uses_backend(self):
        class StubBackend:
            def __init__(self):
                self.requests = []

            def complete_text(self, prompt):
                self.requests.append(prompt)
                return "## Converted\n\ncontent"

        doc = generate_corpus(1, seed=2).documents[0]
        backend = StubBackend()
        md = render_markdown(doc, mode="llm_assisted", backend=backend)
        assert md.serialize() == "## Converted\ncontent"
        assert backend.requests[0].startswith("Convert the following OCR text")
        assert backend.requests[0] == markdown_conversion_request(doc)

    def test_llm_assisted_requires_backend(self):
        doc = generate_corpus(1, seed=2).documents[0]
        with pytest.raises(UsageError):
            render_markdown(doc, mode="llm_assisted")


class TestRenderInput:
    def test_dispatch(self):
        doc = generate_corpus(1, seed=1).documents[0]
        assert render_input(doc, "ocr").representation == "ocr"
        assert render_input(doc, "markdown").representation == "markdown"
        with pytest.raises(UsageError):
            render_input(doc, "html")
