"""Configuration lattice, OFAT and full-factorial searches, reporting.

Only the call signature of a configuration (input type, chunk size, prompt
type, example count, model) triggers model calls; refinement stage and
evaluation technique are free dimensions re-scored from stored completions.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

from .backend import Completion, CostSummary, usage_report
from .chunker import ChunkPolicy, chunk_document
from .corpus import Corpus, ExampleSet, Schema, select_examples
from .errors import UsageError
from .metrics import MatchTechnique, aggregate, score_document
from .prompting import Prompt, PromptStrategy, build_prompt, condense_example, schema_digest
from .refine import SynonymTable, refine_to_stage
from .rendering import render_input

DIMENSIONS = {
    "input_type": ("ocr", "markdown"),
    "chunk_size": ("small", "medium", "max"),
    "prompt_type": ("few_shot", "cot"),
    "example_count": (0, 1, 3, 5),
    "refinement_stage": ("initial", "mapped", "cleaned"),
    "technique": ("exact", "substring", "fuzzy"),
}

# The dimensions whose values change what is sent to the model.
CALL_DIMENSIONS = ("input_type", "chunk_size", "prompt_type", "example_count")

BASELINE_VALUES = {
    "input_type": "ocr",
    "chunk_size": "medium",
    "prompt_type": "few_shot",
    "example_count": 0,
    "refinement_stage": "initial",
    "technique": "exact",
}


@dataclass(frozen=True)
class RunConfig:
    input_type: str
    chunk_size: str
    prompt_type: str
    example_count: int
    refinement_stage: str
    technique: str
    model: str = "oracle"

    def __post_init__(self):
        for name, allowed in DIMENSIONS.items():
            if getattr(self, name) not in allowed:
                raise UsageError(
                    f"{name} must be one of {allowed}, got {getattr(self, name)!r}"
                )

    def call_signature(self) -> tuple:
        return (
            self.input_type,
            self.chunk_size,
            self.prompt_type,
            self.example_count,
            self.model,
        )

    def replace(self, **changes) -> "RunConfig":
        values = {name: getattr(self, name) for name in DIMENSIONS}
        values["model"] = self.model
        values.update(changes)
        return RunConfig(**values)

    def as_dict(self) -> dict:
        return {
            **{name: getattr(self, name) for name in DIMENSIONS},
            "model": self.model,
        }


def baseline_config(model: str = "oracle", **overrides) -> RunConfig:
    """The general-practice baseline: OCR, medium chunks, zero-shot
    few-shot prompting, initial predictions, exact match."""
    values = dict(BASELINE_VALUES)
    values.update(overrides)
    return RunConfig(model=model, **values)


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    precision: float
    recall: float
    f1: float
    usage: CostSummary
    llm_calls: int
    cache_hits: int
    incomplete: bool = False

    def as_record(self) -> dict:
        """Serializable scores; run-local call accounting stays out so a
        deterministic replay produces byte-identical records."""
        return {
            "config": self.config.as_dict(),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "total_tokens": self.usage.total_tokens,
            "total_cost_usd": self.usage.total_cost_usd,
        }


def enumerate_space(space: dict | None = None, model: str = "oracle") -> list[RunConfig]:
    """Cartesian product of the dimension values, in documented order."""
    space = dict(space) if space else {k: list(v) for k, v in DIMENSIONS.items()}
    for name in DIMENSIONS:
        values = space.get(name)
        if not values:
            raise UsageError(f"dimension {name!r} has no values")
    configs = []
    for combo in product(*(space[name] for name in DIMENSIONS)):
        configs.append(RunConfig(**dict(zip(DIMENSIONS, combo)), model=model))
    return configs


class CompletionStore:
    """Per-CallSignature completion sets, optionally persisted to disk."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[tuple, dict[str, list[Completion]]] = {}
        self.computed_signatures = 0  # completion-set computations this run

    @staticmethod
    def _slug(signature: tuple) -> str:
        return "sig_" + "_".join(str(part) for part in signature)

    def get(self, signature: tuple) -> dict[str, list[Completion]] | None:
        if signature in self._memory:
            return self._memory[signature]
        if self.directory:
            path = self.directory / f"{self._slug(signature)}.json"
            if path.exists():
                raw = json.loads(path.read_text(encoding="utf-8"))
                loaded = {
                    doc_id: [
                        Completion(
                            prompt_digest=c["prompt_digest"],
                            text=c["text"],
                            input_tokens=c["input_tokens"],
                            output_tokens=c["output_tokens"],
                            from_cache=True,
                            model_name=c["model_name"],
                        )
                        for c in comps
                    ]
                    for doc_id, comps in raw.items()
                }
                self._memory[signature] = loaded
                return loaded
        return None

    def put(self, signature: tuple, completions: dict[str, list[Completion]]) -> None:
        self._memory[signature] = completions
        if self.directory:
            raw = {
                doc_id: [
                    {
                        "prompt_digest": c.prompt_digest,
                        "text": c.text,
                        "input_tokens": c.input_tokens,
                        "output_tokens": c.output_tokens,
                        "model_name": c.model_name,
                    }
                    for c in comps
                ]
                for doc_id, comps in completions.items()
            }
            path = self.directory / f"{self._slug(signature)}.json"
            path.write_text(json.dumps(raw, indent=1), encoding="utf-8")


def _gather_completions(
    cfg: RunConfig,
    corpus: Corpus,
    schema: Schema,
    backend,
    training_docs,
    condense_cache: dict,
) -> dict[str, list[Completion]]:
    examples = select_examples(training_docs or [], cfg.example_count)
    dig = schema_digest(schema)
    condensed = []
    for example, doc in zip(examples.examples, (training_docs or [])[: cfg.example_count]):
        text = condense_example(
            doc, example.entities, backend, cache=condense_cache, schema_dig=dig
        )
        condensed.append(type(example)(condensed_text=text, entities=example.entities))
    examples = ExampleSet(strategy_level=examples.strategy_level, examples=tuple(condensed))
    strategy = PromptStrategy(kind=cfg.prompt_type, example_count=cfg.example_count)
    policy = ChunkPolicy(size_category=cfg.chunk_size)
    signature = cfg.call_signature()
    completions: dict[str, list[Completion]] = {}
    for doc in corpus.documents:
        layout = render_input(doc, cfg.input_type)
        chunks = chunk_document(layout, policy)
        doc_completions = []
        for chunk in chunks:
            prompt = build_prompt(chunk, schema, strategy, examples)
            doc_completions.append(backend.complete(prompt, signature=signature))
        completions[doc.id] = doc_completions
    return completions


def execute_config(
    cfg: RunConfig,
    corpus: Corpus,
    backend,
    store: CompletionStore | None = None,
    schema: Schema | None = None,
    training_docs=None,
    synonyms: SynonymTable | None = None,
    condense_cache: dict | None = None,
) -> RunResult:
    """Run the full pipeline for one configuration.

    Completions are reused from the store whenever this configuration's call
    signature has already been executed; only refinement and scoring are
    redone.
    """
    schema = schema or corpus.schema
    if schema is None:
        raise UsageError("execute_config needs a schema (corpus has none attached)")
    signature = cfg.call_signature()
    completions = store.get(signature) if store is not None else None
    if completions is None:
        completions = _gather_completions(
            cfg, corpus, schema, backend, training_docs,
            condense_cache if condense_cache is not None else {},
        )
        if store is not None:
            store.put(signature, completions)
            store.computed_signatures += 1
    all_completions = [c for comps in completions.values() for c in comps]
    llm_calls = sum(1 for c in all_completions if not c.from_cache)
    cache_hits = sum(1 for c in all_completions if c.from_cache)
    technique = MatchTechnique(kind=cfg.technique)
    counts = []
    incomplete = False
    for doc in corpus.documents:
        doc_completions = completions.get(doc.id)
        if doc_completions is None:
            incomplete = True
            continue
        preds = refine_to_stage(
            doc.id, doc_completions, cfg.refinement_stage, schema, synonyms
        )
        counts.append(score_document(preds, doc.ground_truth, technique))
    prf = aggregate(counts)
    return RunResult(
        config=cfg,
        precision=prf.precision,
        recall=prf.recall,
        f1=prf.f1,
        usage=usage_report(all_completions),
        llm_calls=llm_calls,
        cache_hits=cache_hits,
        incomplete=incomplete,
    )


@dataclass
class SearchOutcome:
    chosen: RunConfig | dict | None
    results: list[RunResult]
    scored_configs: int
    call_bearing_configs: int
    space_size: int
    best: RunConfig | None = None
    worst: RunConfig | None = None

    @property
    def scored_fraction(self) -> float:
        return self.scored_configs / self.space_size if self.space_size else 0.0


class _Runner:
    """Executes configs across models with result memoization."""

    def __init__(self, corpus, backends, store, schema, training_docs, synonyms):
        self.corpus = corpus
        self.backends = backends  # model name -> backend
        self.store = store if store is not None else CompletionStore()
        self.schema = schema
        self.training_docs = training_docs
        self.synonyms = synonyms
        self.condense_cache: dict = {}
        self._results: dict[RunConfig, RunResult] = {}

    def run(self, cfg: RunConfig) -> RunResult:
        if cfg not in self._results:
            self._results[cfg] = execute_config(
                cfg,
                self.corpus,
                self.backends[cfg.model],
                store=self.store,
                schema=self.schema,
                training_docs=self.training_docs,
                synonyms=self.synonyms,
                condense_cache=self.condense_cache,
            )
        return self._results[cfg]

    def mean_f1(self, base: RunConfig, **changes) -> float:
        return statistics.fmean(
            self.run(base.replace(**changes).replace(model=model)).f1
            for model in self.backends
        )


def _as_backends(backend_or_map, models) -> dict:
    if isinstance(backend_or_map, dict):
        return backend_or_map
    return {model: backend_or_map for model in models}


def ofat_search(
    space: dict | None,
    baseline: RunConfig,
    corpus: Corpus,
    backend,
    policy: str = "global_average",
    store: CompletionStore | None = None,
    schema: Schema | None = None,
    training_docs=None,
    synonyms: SynonymTable | None = None,
    models: tuple[str, ...] | None = None,
) -> SearchOutcome:
    """One-factor-at-a-time search around the baseline.

    Each dimension is swept with every other dimension held at the baseline;
    the per-dimension F1 argmax values (ties going to the baseline value)
    are composed into the chosen configuration.
    """
    if policy not in ("global_average", "per_model"):
        raise UsageError(f"unknown OFAT policy {policy!r}")
    space = dict(space) if space else {k: list(v) for k, v in DIMENSIONS.items()}
    for name in DIMENSIONS:
        if getattr(baseline, name) not in space.get(name, ()):
            raise UsageError(f"baseline {name}={getattr(baseline, name)!r} not in space")
    models = tuple(models or (baseline.model,))
    backends = _as_backends(backend, models)
    runner = _Runner(corpus, backends, store, schema, training_docs, synonyms)

    def choose(score_fn) -> RunConfig:
        chosen_values = {}
        for name in DIMENSIONS:
            baseline_value = getattr(baseline, name)
            best_value, best_score = baseline_value, score_fn(**{name: baseline_value})
            for value in space[name]:
                if value == baseline_value:
                    continue
                score = score_fn(**{name: value})
                if score > best_score:
                    best_value, best_score = value, score
            chosen_values[name] = best_value
        return baseline.replace(**chosen_values)

    if policy == "global_average":
        chosen = choose(lambda **changes: runner.mean_f1(baseline, **changes))
    else:
        chosen = {
            model: choose(
                lambda **changes: runner.run(
                    baseline.replace(**changes).replace(model=model)
                ).f1
            ).replace(model=model)
            for model in models
        }
    results = list(runner._results.values())
    scored = len({cfg.replace(model=models[0]) for cfg in runner._results})
    call_bearing = len({cfg.call_signature()[:4] for cfg in runner._results})
    space_size = 1
    for name in DIMENSIONS:
        space_size *= len(space[name])
    return SearchOutcome(
        chosen=chosen,
        results=results,
        scored_configs=scored,
        call_bearing_configs=call_bearing,
        space_size=space_size,
    )


def factorial_search(
    space: dict | None,
    corpus: Corpus,
    backend,
    store: CompletionStore | None = None,
    schema: Schema | None = None,
    training_docs=None,
    synonyms: SynonymTable | None = None,
    models: tuple[str, ...] | None = None,
) -> SearchOutcome:
    """Exhaustive scoring of the whole configuration lattice."""
    models = tuple(models or ("oracle",))
    backends = _as_backends(backend, models)
    runner = _Runner(corpus, backends, store, schema, training_docs, synonyms)
    configs = []
    for model in models:
        configs.extend(enumerate_space(space, model=model))
    results = [runner.run(cfg) for cfg in configs]
    by_config: dict[tuple, list[float]] = {}
    order: list[RunConfig] = []
    for result in results:
        key = tuple(getattr(result.config, name) for name in DIMENSIONS)
        if key not in by_config:
            order.append(result.config.replace(model=models[0]))
        by_config.setdefault(key, []).append(result.f1)

    def avg(cfg: RunConfig) -> float:
        return statistics.fmean(
            by_config[tuple(getattr(cfg, name) for name in DIMENSIONS)]
        )

    best = max(order, key=avg) if order else None
    worst = min(order, key=avg) if order else None
    space_size = len(order)
    return SearchOutcome(
        chosen=best,
        results=results,
        scored_configs=len(order),
        call_bearing_configs=len({cfg.call_signature()[:4] for cfg in runner._results}),
        space_size=space_size,
        best=best,
        worst=worst,
    )


def _dimension_tables(results: list[RunResult], baseline: RunConfig) -> dict:
    """Per-dimension sweep tables in the style of the experiment write-up:
    for each dimension value, per-model F1 of the config that equals the
    baseline everywhere else, plus delta vs baseline and mean/stdev."""
    by_key = {}
    for result in results:
        by_key[(tuple(getattr(result.config, n) for n in DIMENSIONS), result.config.model)] = result
    models = sorted({r.config.model for r in results})
    tables = {}
    for name, values in DIMENSIONS.items():
        rows = []
        for value in values:
            cfg = baseline.replace(**{name: value})
            key = tuple(getattr(cfg, n) for n in DIMENSIONS)
            per_model = {}
            for model in models:
                result = by_key.get((key, model))
                if result is not None:
                    per_model[model] = result.f1
            if not per_model:
                continue
            baseline_key = tuple(getattr(baseline, n) for n in DIMENSIONS)
            deltas = {
                model: per_model[model] - by_key[(baseline_key, model)].f1
                for model in per_model
                if (baseline_key, model) in by_key
            }
            f1s = list(per_model.values())
            rows.append(
                {
                    "value": value,
                    "per_model_f1": per_model,
                    "delta_vs_baseline": deltas,
                    "mean_f1": statistics.fmean(f1s),
                    "stdev_f1": statistics.stdev(f1s) if len(f1s) > 1 else 0.0,
                }
            )
        tables[name] = rows
    return tables


def emit_report(
    results: list[RunResult],
    out_dir,
    formats=("json",),
    baseline: RunConfig | None = None,
    summary: dict | None = None,
    manifest_hash: str = "",
) -> list[Path]:
    """Write result tables; returns the paths written."""
    if not results:
        raise UsageError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    baseline = baseline or baseline_config(model=results[0].config.model)
    tables = _dimension_tables(results, baseline)
    written = []
    for fmt in formats:
        if fmt == "json":
            path = out_dir / "report.json"
            payload = {
                "manifest_hash": manifest_hash,
                "results": [r.as_record() for r in results],
                "dimension_tables": tables,
                "summary": summary or {},
            }
            path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
        elif fmt == "csv":
            path = out_dir / "report.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    list(DIMENSIONS) + ["model", "precision", "recall", "f1",
                                        "total_tokens", "total_cost_usd",
                                        "manifest_hash"]
                )
                for r in results:
                    writer.writerow(
                        [getattr(r.config, n) for n in DIMENSIONS]
                        + [r.config.model, repr(r.precision), repr(r.recall), repr(r.f1),
                           r.usage.total_tokens, repr(r.usage.total_cost_usd),
                           manifest_hash]
                    )
        elif fmt == "markdown_tables":
            path = out_dir / "report.md"
            lines = ["# Sweep report", ""]
            if manifest_hash:
                lines.append(f"Manifest: `{manifest_hash}`")
                lines.append("")
            for name, rows in tables.items():
                if not rows:
                    continue
                models = sorted(rows[0]["per_model_f1"])
                lines.append(f"## {name}")
                lines.append("")
                lines.append("| value | " + " | ".join(models) + " | mean (±stdev) |")
                lines.append("|" + "---|" * (len(models) + 2))
                for row in rows:
                    cells = [str(row["value"])]
                    for model in models:
                        f1 = row["per_model_f1"].get(model)
                        delta = row["delta_vs_baseline"].get(model, 0.0)
                        cells.append(f"{f1:.3f} ({delta:+.3f})" if f1 is not None else "-")
                    cells.append(f"{row['mean_f1']:.3f} (±{row['stdev_f1']:.3f})")
                    lines.append("| " + " | ".join(cells) + " |")
                lines.append("")
            if summary:
                lines.append("## Summary")
                lines.append("")
                for key, value in summary.items():
                    lines.append(f"- {key}: {value}")
                lines.append("")
            path.write_text("\n".join(lines), encoding="utf-8")
        else:
            raise UsageError(f"unknown report format {fmt!r}")
        written.append(path)
    return written
