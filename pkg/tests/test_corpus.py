import json

import pytest

from layie.corpus import (
    ALLOWED_EXAMPLE_COUNTS,
    Corpus,
    Document,
    Page,
    Word,
    dynamic_schema_for,
    infer_kind,
    load_corpus,
    load_schema,
    save_corpus,
    schema_from_mapping,
    select_examples,
)
from layie.errors import CorpusError, SchemaError, UsageError
from layie.synth import generate_corpus


def simple_doc(doc_id="d1", gt=None):
    words = (
        Word(text="hello", box=(0.0, 0.0, 50.0, 10.0)),
        Word(text="world", box=(60.0, 0.0, 110.0, 10.0)),
    )
    page = Page(width=200.0, height=100.0, words=words)
    return Document(id=doc_id, pages=(page,), ground_truth=gt or {})


class TestNormalizedRoundTrip:
    def test_save_then_load_identical(self, tmp_path):
        corpus = generate_corpus(6, seed=5)
        out = tmp_path / "corpus.jsonl"
        save_corpus(corpus, out)
        loaded = load_corpus(out, schema=corpus.schema)
        assert loaded.documents == corpus.documents

    def test_blank_lines_skipped(self, tmp_path):
        corpus = Corpus(documents=(simple_doc(),))
        out = tmp_path / "c.jsonl"
        save_corpus(corpus, out)
        out.write_text(out.read_text() + "\n\n")
        assert len(load_corpus(out)) == 1

    def test_invalid_json_rejected(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json}\n")
        with pytest.raises(CorpusError):
            load_corpus(bad)

    def test_missing_path(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "nope.jsonl")

    def test_unknown_adapter(self, tmp_path):
        with pytest.raises(UsageError):
            load_corpus(tmp_path, adapter="hocr")


class TestValidation:
    def _write(self, tmp_path, docs):
        out = tmp_path / "c.jsonl"
        save_corpus(Corpus(documents=tuple(docs)), out)
        return out

    def test_duplicate_ids(self, tmp_path):
        out = self._write(tmp_path, [simple_doc("x"), simple_doc("x")])
        with pytest.raises(CorpusError, match="duplicate"):
            load_corpus(out)

    def test_box_outside_page(self, tmp_path):
        word = Word(text="far", box=(0.0, 0.0, 500.0, 10.0))
        doc = Document(id="d", pages=(Page(width=200.0, height=100.0, words=(word,)),))
        out = self._write(tmp_path, [doc])
        with pytest.raises(CorpusError, match="outside page"):
            load_corpus(out)

    def test_ground_truth_attr_not_in_schema(self, tmp_path):
        doc = simple_doc(gt={"mystery": ["value"]})
        out = self._write(tmp_path, [doc])
        schema = schema_from_mapping({"known": r".+"})
        with pytest.raises(CorpusError, match="not in schema"):
            load_corpus(out, schema=schema)
        # Without a schema the same corpus loads fine.
        assert len(load_corpus(out)) == 1


class TestVrduAdapter:
    def test_annotations_become_ground_truth(self, tmp_path):
        record = {
            "filename": "form-001.pdf",
            "annotations": [
                ["file_date", [["1982-10-31", [0, [1, 2, 3, 4]]]]],
                ["signer_name", [["Jim Slattery"], ["Jim Slattery"]]],
            ],
            "ocr": {
                "pages": [
                    {
                        "width": 612,
                        "height": 792,
                        "words": [{"text": "1982-10-31", "box": [10, 10, 80, 22]}],
                    }
                ]
            },
        }
        path = tmp_path / "vrdu.jsonl"
        path.write_text(json.dumps(record) + "\n")
        corpus = load_corpus(path, adapter="vrdu")
        doc = corpus.by_id("form-001.pdf")
        assert doc.ground_truth["file_date"] == ["1982-10-31"]
        # Duplicate occurrences collapse to one value.
        assert doc.ground_truth["signer_name"] == ["Jim Slattery"]


class TestFunsdAdapter:
    def test_question_answer_links(self, tmp_path):
        record = {
            "form": [
                {
                    "id": 0,
                    "label": "question",
                    "words": [{"text": "TO:", "box": [10, 10, 40, 20]}],
                    "linking": [[0, 1]],
                },
                {
                    "id": 1,
                    "label": "answer",
                    "words": [
                        {"text": "R.", "box": [50, 10, 60, 20]},
                        {"text": "Smith", "box": [65, 10, 110, 20]},
                    ],
                    "linking": [[0, 1]],
                },
            ]
        }
        ann_dir = tmp_path / "annotations"
        ann_dir.mkdir()
        (ann_dir / "0001.json").write_text(json.dumps(record))
        corpus = load_corpus(ann_dir, adapter="funsd")
        doc = corpus.by_id("0001")
        assert doc.ground_truth == {"TO:": ["R. Smith"]}
        schema = dynamic_schema_for(doc)
        assert schema.names == ("TO:",)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path, adapter="funsd")


class TestSchema:
    def test_infer_kinds(self):
        assert infer_kind(r"\d{4}-\d{2}-\d{2}") == "date"
        assert infer_kind(r"\d+") == "numeric"
        assert infer_kind(r"[\w\s.,'&-]+") == "free_text"

    def test_load_schema_file(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text(json.dumps({"file_date": r"\d{4}-\d{2}-\d{2}", "num": r"\d+"}))
        schema = load_schema(path)
        assert schema.attribute("file_date").kind == "date"
        assert schema.attribute("num").kind == "numeric"

    def test_explicit_kind_object(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text(json.dumps({"code": {"pattern": r"\d+", "kind": "free_text"}}))
        assert load_schema(path).attribute("code").kind == "free_text"

    def test_bad_pattern(self):
        with pytest.raises(SchemaError):
            schema_from_mapping({"a": r"(["})

    def test_date_kind_must_accept_iso(self):
        with pytest.raises(SchemaError):
            schema_from_mapping({"a": {"pattern": r"[A-Z]+", "kind": "date"}})

    def test_empty_schema(self):
        with pytest.raises(SchemaError):
            schema_from_mapping({})


class TestSelectExamples:
    def test_prefix_rule(self):
        docs = generate_corpus(8, seed=1).documents
        selected = select_examples(docs, 3)
        assert len(selected.examples) == 3
        assert [e.entities for e in selected.examples] == [
            d.ground_truth for d in docs[:3]
        ]

    def test_zero_examples(self):
        assert select_examples([], 0).examples == ()

    def test_disallowed_count(self):
        docs = generate_corpus(8, seed=1).documents
        for count in (2, 4, -1):
            assert count not in ALLOWED_EXAMPLE_COUNTS
            with pytest.raises(UsageError):
                select_examples(docs, count)

    def test_insufficient_training_docs(self):
        docs = generate_corpus(2, seed=1).documents
        with pytest.raises(UsageError):
            select_examples(docs, 5)
