"""Command-line entry point for batch operation.

Subcommands:
  ingest   convert VRDU/FUNSD annotations to the normalized JSONL format
  run      execute a single configuration
  sweep    OFAT or full-factorial search over the configuration space
  score    re-score stored completions under a new stage/technique
  report   render result tables from a completed run directory

A manifest file (JSON or TOML) is the single source of truth for a run;
command-line flags override individual manifest fields. Every artifact
embeds the manifest hash so mixed-provenance reports are refused.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import backend as backend_mod
from . import sweep as sweep_mod
from .backend import BackendSpec, CompletionCache, OracleNoise, Sampling, make_backend
from .corpus import load_corpus, load_schema, save_corpus
from .errors import LayieError, UsageError
from .refine import SynonymTable
from .synth import generate_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_manifest(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text)


def _manifest_hash(manifest: dict) -> str:
    material = {k: v for k, v in sorted(manifest.items()) if k != "out"}
    return hashlib.sha256(
        json.dumps(material, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:16]


def _resolve(manifest: dict, args, fields) -> dict:
    resolved = dict(manifest)
    for field in fields:
        value = getattr(args, field.replace("-", "_"), None)
        if value is not None:
            resolved[field] = value
    resolved.setdefault("seed", 0)
    resolved.setdefault("backend", "oracle")
    resolved.setdefault("model", "oracle")
    return resolved


def _build_corpus(resolved: dict):
    corpus_path = resolved.get("corpus")
    schema = load_schema(resolved["schema"]) if resolved.get("schema") else None
    if corpus_path == "synthetic" or corpus_path is None:
        corpus = generate_corpus(
            int(resolved.get("synthetic_docs", 40)), seed=int(resolved["seed"])
        )
        return corpus, schema or corpus.schema
    corpus = load_corpus(corpus_path, adapter=resolved.get("adapter", "normalized"), schema=schema)
    if schema is None:
        raise UsageError("a schema file is required for non-synthetic corpora")
    return corpus, schema


def _build_backend(resolved: dict, corpus, out_dir: Path):
    kind = resolved["backend"]
    spec = BackendSpec(
        kind=kind,
        model_name=resolved.get("model", "oracle"),
        sampling=Sampling(
            temperature=float(resolved.get("temperature", 0.0)),
            max_output_tokens=int(resolved.get("max_output_tokens", 1024)),
        ),
        base_url=resolved.get("base_url", "https://api.openai.com/v1"),
    )
    cache = CompletionCache(out_dir / "backend_cache")
    noise_cfg = resolved.get("noise", {})
    noise = OracleNoise(
        key_mangle_rate=float(noise_cfg.get("key_mangle_rate", 0.0)),
        value_reformat_rate=float(noise_cfg.get("value_reformat_rate", 0.0)),
        hallucination_rate=float(noise_cfg.get("hallucination_rate", 0.0)),
        json_corruption_rate=float(noise_cfg.get("json_corruption_rate", 0.0)),
        seed=int(resolved.get("seed", 0)),
    )
    return make_backend(spec, cache=cache, corpus=corpus, noise=noise)


def _baseline_from(resolved: dict) -> sweep_mod.RunConfig:
    overrides = dict(resolved.get("baseline", {}))
    for key in ("technique", "stage"):
        flag = resolved.get(key)
        if flag:
            overrides["refinement_stage" if key == "stage" else "technique"] = flag
    return sweep_mod.baseline_config(model=resolved.get("model", "oracle"), **overrides)


def _synonyms(resolved: dict) -> SynonymTable:
    path = resolved.get("synonyms")
    return SynonymTable.from_file(path) if path else SynonymTable.default()


def _write_scores(out_dir: Path, results, manifest_hash: str, seed) -> Path:
    path = out_dir / "scores.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            record = result.as_record()
            record["manifest_hash"] = manifest_hash
            record["seed"] = seed
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def _cmd_ingest(args) -> int:
    manifest = _load_manifest(args.manifest)
    resolved = _resolve(manifest, args, ["corpus", "schema", "adapter", "out"])
    schema = load_schema(resolved["schema"]) if resolved.get("schema") else None
    corpus = load_corpus(resolved["corpus"], adapter=resolved.get("adapter", "vrdu"), schema=schema)
    out = Path(resolved.get("out", "corpus.jsonl"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    print(f"wrote {len(corpus)} documents to {out}")
    return EXIT_OK


def _prepare(args, fields):
    manifest = _load_manifest(args.manifest)
    resolved = _resolve(manifest, args, fields)
    out_dir = Path(resolved.get("out", "runs/latest"))
    out_dir.mkdir(parents=True, exist_ok=True)
    mhash = _manifest_hash(resolved)
    (out_dir / "manifest.json").write_text(
        json.dumps({**resolved, "manifest_hash": mhash}, indent=1, default=str),
        encoding="utf-8",
    )
    corpus, schema = _build_corpus(resolved)
    backend = _build_backend(resolved, corpus, out_dir)
    store = sweep_mod.CompletionStore(out_dir / "completions")
    return resolved, out_dir, mhash, corpus, schema, backend, store


_RUN_FIELDS = [
    "corpus", "schema", "adapter", "backend", "model", "mode", "out", "seed",
    "jobs", "technique", "stage", "synonyms",
]


def _cmd_run(args) -> int:
    resolved, out_dir, mhash, corpus, schema, backend, store = _prepare(args, _RUN_FIELDS)
    cfg = _baseline_from(resolved)
    result = sweep_mod.execute_config(
        cfg,
        corpus,
        backend,
        store=store,
        schema=schema,
        training_docs=list(corpus.documents[:5]),
        synonyms=_synonyms(resolved),
    )
    _write_scores(out_dir, [result], mhash, resolved["seed"])
    print(
        f"f1={result.f1:.4f} precision={result.precision:.4f} "
        f"recall={result.recall:.4f} llm_calls={result.llm_calls} "
        f"cache_hits={result.cache_hits}"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    resolved, out_dir, mhash, corpus, schema, backend, store = _prepare(args, _RUN_FIELDS)
    baseline = _baseline_from(resolved)
    synonyms = _synonyms(resolved)
    training = list(corpus.documents[:5])
    mode = resolved.get("mode", "ofat")
    if mode == "ofat":
        outcome = sweep_mod.ofat_search(
            None, baseline, corpus, backend,
            store=store, schema=schema, training_docs=training, synonyms=synonyms,
        )
    elif mode == "factorial":
        outcome = sweep_mod.factorial_search(
            None, corpus, backend,
            store=store, schema=schema, training_docs=training, synonyms=synonyms,
            models=(baseline.model,),
        )
    else:
        raise UsageError(f"unknown sweep mode {mode!r}")
    (out_dir / "configs.json").write_text(
        json.dumps(
            {
                "manifest_hash": mhash,
                "mode": mode,
                "baseline": baseline.as_dict(),
                "chosen": outcome.chosen.as_dict()
                if hasattr(outcome.chosen, "as_dict")
                else {m: c.as_dict() for m, c in (outcome.chosen or {}).items()},
                "scored_configs": outcome.scored_configs,
                "call_bearing_configs": outcome.call_bearing_configs,
                "scored_fraction": outcome.scored_fraction,
            },
            indent=1,
        ),
        encoding="utf-8",
    )
    _write_scores(out_dir, outcome.results, mhash, resolved["seed"])
    summary = {
        "mode": mode,
        "scored_configs": outcome.scored_configs,
        "call_bearing_configs": outcome.call_bearing_configs,
        "scored_fraction": f"{100 * outcome.scored_fraction:.1f}%",
        "completion_set_computations": store.computed_signatures,
    }
    if outcome.best is not None:
        summary["best"] = outcome.best.as_dict()
        summary["worst"] = outcome.worst.as_dict()
    sweep_mod.emit_report(
        outcome.results, out_dir, formats=("json", "csv", "markdown_tables"),
        baseline=baseline, summary=summary, manifest_hash=mhash,
    )
    print(
        f"mode={mode} scored={outcome.scored_configs} "
        f"computed_signatures={store.computed_signatures} "
        f"fraction={100 * outcome.scored_fraction:.1f}%"
    )
    return EXIT_OK


def _cmd_score(args) -> int:
    resolved, out_dir, mhash, corpus, schema, backend, store = _prepare(args, _RUN_FIELDS)
    cfg = _baseline_from(resolved)
    result = sweep_mod.execute_config(
        cfg,
        corpus,
        backend,
        store=store,
        schema=schema,
        training_docs=list(corpus.documents[:5]),
        synonyms=_synonyms(resolved),
    )
    _write_scores(out_dir, [result], mhash, resolved["seed"])
    print(
        f"stage={cfg.refinement_stage} technique={cfg.technique} "
        f"f1={result.f1:.4f} llm_calls={result.llm_calls}"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    records = []
    hashes = set()
    for run_dir in args.run_dirs:
        path = Path(run_dir) / "scores.jsonl"
        if not path.exists():
            raise UsageError(f"no scores.jsonl under {run_dir}")
        for line in path.read_text(encoding="utf-8").splitlines():
            record = json.loads(line)
            hashes.add(record.get("manifest_hash", ""))
            records.append(record)
    if len(hashes) > 1:
        raise UsageError(f"refusing mixed-manifest inputs: {sorted(hashes)}")
    out_dir = Path(args.out or args.run_dirs[0])
    results = [_result_from_record(r) for r in records]
    baseline = sweep_mod.baseline_config(model=results[0].config.model)
    formats = tuple((args.format or "markdown_tables").split(","))
    written = sweep_mod.emit_report(
        results, out_dir, formats=formats, baseline=baseline,
        manifest_hash=next(iter(hashes)),
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _result_from_record(record: dict) -> sweep_mod.RunResult:
    cfg = sweep_mod.RunConfig(**record["config"])
    usage = backend_mod.CostSummary(
        total_tokens=record.get("total_tokens", 0),
        total_cost_usd=record.get("total_cost_usd", 0.0),
        per_model={},
    )
    return sweep_mod.RunResult(
        config=cfg,
        precision=record["precision"],
        recall=record["recall"],
        f1=record["f1"],
        usage=usage,
        llm_calls=record.get("llm_calls", 0),
        cache_hits=record.get("cache_hits", 0),
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="layie", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--manifest", help="manifest file (JSON or TOML)")
        p.add_argument("--corpus", help="corpus path or 'synthetic'")
        p.add_argument("--schema", help="schema JSON file")
        p.add_argument("--adapter", choices=["vrdu", "funsd", "normalized"])
        p.add_argument("--backend", choices=["http", "oracle", "replay"])
        p.add_argument("--model")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--synonyms", help="synonym table JSON file")
        p.add_argument("--technique", choices=["exact", "substring", "fuzzy"])
        p.add_argument("--stage", choices=["initial", "mapped", "cleaned"])

    p_ingest = sub.add_parser("ingest", help="convert a dataset to normalized JSONL")
    p_ingest.add_argument("--manifest")
    p_ingest.add_argument("--corpus", required=True)
    p_ingest.add_argument("--schema")
    p_ingest.add_argument("--adapter", choices=["vrdu", "funsd", "normalized"])
    p_ingest.add_argument("--out")
    p_ingest.set_defaults(fn=_cmd_ingest)

    p_run = sub.add_parser("run", help="execute one configuration")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="configuration search")
    common(p_sweep)
    p_sweep.add_argument("--mode", choices=["ofat", "factorial"])
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_score = sub.add_parser("score", help="re-score stored completions")
    common(p_score)
    p_score.set_defaults(fn=_cmd_score)

    p_report = sub.add_parser("report", help="render tables from run directories")
    p_report.add_argument("run_dirs", nargs="+")
    p_report.add_argument("--out")
    p_report.add_argument("--format", help="comma-separated: csv,markdown_tables,json")
    p_report.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except LayieError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
