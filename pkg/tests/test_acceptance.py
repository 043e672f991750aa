"""End-to-end acceptance checks for the extraction harness.

Each test prints a single pass/fail line for its criterion before
asserting, so a full run yields a ten-line scoreboard.
"""

import itertools
import json
import random
import time

from layie.backend import BackendSpec, Completion, OracleNoise, make_backend, usage_report
from layie.chunker import ChunkPolicy, chunk_document
from layie.metrics import MatchTechnique, fuzzy_ratio, value_match
from layie.refine import clean_date
from layie.rendering import LayoutText, QuantBox, Segment
from layie.sweep import (
    DIMENSIONS,
    CompletionStore,
    baseline_config,
    execute_config,
    factorial_search,
    ofat_search,
)
from layie.synth import generate_corpus


def report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def oracle_for(corpus, **kwargs):
    return make_backend(BackendSpec(kind="oracle"), corpus=corpus, **kwargs)


def lcs_length(a: str, b: str) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def reference_ratio(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 2 * lcs_length(a, b) / (len(a) + len(b))


def test_01_fuzzy_ratio_equals_reference_within_time_budget():
    start = time.monotonic()
    pairs_checked = 0
    strings = [""]
    for length in range(1, 6):
        strings.extend("".join(p) for p in itertools.product("ab", repeat=length))
    worst = 0.0
    for a in strings:
        for b in strings:
            worst = max(worst, abs(fuzzy_ratio(a, b) - reference_ratio(a, b)))
            pairs_checked += 1
    rng = random.Random(13)
    alphabet = "abcdefg -."
    for _ in range(3000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 33)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 33)))
        worst = max(worst, abs(fuzzy_ratio(a, b) - reference_ratio(a, b)))
        pairs_checked += 1
    elapsed = time.monotonic() - start
    report(
        1,
        worst <= 1e-12 and elapsed < 10,
        f"{pairs_checked} pairs vs reference, max deviation {worst:.1e}, "
        f"{elapsed:.1f}s (< 10s)",
    )


def test_02_documented_match_pairs():
    ratio = fuzzy_ratio("jim slattery", "jim slatters")
    fuzzy_ok = abs(ratio - 22 / 24) < 1e-12 and value_match(
        "Jim Slattery", "Jim Slatters", MatchTechnique(kind="fuzzy")
    )
    substring_ok = value_match(
        "general manager, north america", "general manager", MatchTechnique(kind="substring")
    ) and not value_match(
        "general manager, north america", "general manager", MatchTechnique(kind="exact")
    )
    date_ok = clean_date("April 1992") == "1992-04-01"
    report(
        2,
        fuzzy_ok and substring_ok and date_ok,
        f"slattery ratio {ratio:.6f} (22/24), substring>exact on title pair, "
        "month-year date normalized",
    )


def test_03_chunker_invariants_on_random_documents():
    rng = random.Random(99)
    policies = {name: ChunkPolicy(size_category=name) for name in ("small", "medium", "max")}
    checked = 0
    ok = True
    for i in range(1000):
        n_segments = rng.randrange(0, 25)
        segments = []
        for s in range(n_segments):
            words = ["w" * rng.randrange(1, 50) for _ in range(rng.randrange(1, 80))]
            box = QuantBox(0, s, 10, s + 1) if rng.random() < 0.8 else None
            segments.append(Segment(text=" ".join(words), box=box))
        layout = LayoutText(doc_id=f"r{i}", segments=tuple(segments), representation="ocr")
        original = [w for seg in layout.segments for w in seg.text.split()]
        n_chunks = {}
        for name, policy in policies.items():
            chunks = chunk_document(layout, policy)
            flat = [w for c in chunks for w in c.words()]
            ok = ok and flat == original
            ok = ok and all(
                c.token_cost <= policy.token_limit or len(c.words()) == 1 for c in chunks
            )
            repeat = chunk_document(layout, policy)
            ok = ok and [c.serialize() for c in repeat] == [c.serialize() for c in chunks]
            n_chunks[name] = len(chunks)
        ok = ok and n_chunks["small"] >= n_chunks["medium"] >= n_chunks["max"]
        checked += 1
    report(3, ok, f"partition/budget/monotonicity/determinism on {checked} random documents")


def test_04_noiseless_baseline_is_perfect():
    corpus = generate_corpus(40, seed=7)
    result = execute_config(baseline_config(), corpus, oracle_for(corpus))
    report(
        4,
        result.f1 == 1.0 and result.precision == 1.0 and result.recall == 1.0,
        f"40-document noiseless baseline: f1={result.f1:.3f} "
        f"(llm_calls={result.llm_calls})",
    )


def test_05_refinement_stages_recover_noise():
    corpus = generate_corpus(40, seed=7)
    store_keys = CompletionStore()
    mangled = oracle_for(corpus, noise=OracleNoise(key_mangle_rate=0.3, seed=11))
    initial = execute_config(baseline_config(), corpus, mangled, store=store_keys)
    mapped = execute_config(
        baseline_config(refinement_stage="mapped"), corpus, mangled, store=store_keys
    )

    store_values = CompletionStore()
    reformatted = oracle_for(corpus, noise=OracleNoise(value_reformat_rate=0.3, seed=11))
    mapped_noisy = execute_config(
        baseline_config(refinement_stage="mapped"), corpus, reformatted, store=store_values
    )
    cleaned = execute_config(
        baseline_config(refinement_stage="cleaned"), corpus, reformatted, store=store_values
    )
    mapping_ok = mapped.f1 == 1.0 and mapped.f1 > initial.f1
    cleaning_ok = cleaned.f1 == 1.0 and cleaned.f1 > mapped_noisy.f1
    report(
        5,
        mapping_ok and cleaning_ok,
        f"key mapping {initial.f1:.3f}->{mapped.f1:.3f}, "
        f"value cleaning {mapped_noisy.f1:.3f}->{cleaned.f1:.3f}",
    )


def test_06_lenient_techniques_never_score_below_exact():
    corpus = generate_corpus(40, seed=7)
    store = CompletionStore()
    backend = oracle_for(corpus, noise=OracleNoise(value_reformat_rate=0.5, seed=23))
    scores = {}
    for technique in ("exact", "substring", "fuzzy"):
        result = execute_config(
            baseline_config(technique=technique), corpus, backend, store=store
        )
        scores[technique] = result.f1
    ok = (
        scores["exact"] < 1.0
        and scores["substring"] >= scores["exact"]
        and scores["fuzzy"] >= scores["exact"]
    )
    report(
        6,
        ok,
        "f1 exact={exact:.3f} <= substring={substring:.3f}, fuzzy={fuzzy:.3f}".format(**scores),
    )


def test_07_search_accounting_within_time_budget():
    start = time.monotonic()
    corpus = generate_corpus(12, seed=41)
    training = generate_corpus(6, seed=42, id_prefix="train").documents

    factorial_store = CompletionStore()
    factorial = factorial_search(
        None, corpus, oracle_for(corpus), store=factorial_store, training_docs=training
    )
    ofat_store = CompletionStore()
    ofat = ofat_search(
        None,
        baseline_config(),
        corpus,
        oracle_for(corpus),
        store=ofat_store,
        training_docs=training,
    )
    elapsed = time.monotonic() - start
    factorial_ok = (
        factorial_store.computed_signatures == 48
        and len(factorial.results) == 432
        and factorial.scored_configs == 432
    )
    expected_budget = sum(len(v) - 1 for v in DIMENSIONS.values()) + 1
    ofat_ok = (
        ofat.scored_configs == expected_budget
        and abs(ofat.scored_fraction - 12 / 432) < 1e-9
        and ofat.call_bearing_configs == 8
    )
    report(
        7,
        factorial_ok and ofat_ok and elapsed < 300,
        f"factorial: {factorial_store.computed_signatures} completion sets / "
        f"{len(factorial.results)} rows; ofat: {ofat.scored_configs} configs "
        f"({100 * ofat.scored_fraction:.1f}% of space, "
        f"{ofat.call_bearing_configs} call-bearing); {elapsed:.1f}s (< 300s)",
    )


_ADDITIVE_EFFECTS = {
    "input_type": {"ocr": 0, "markdown": 2},
    "chunk_size": {"small": 1, "medium": 0, "max": 3},
    "prompt_type": {"few_shot": 0, "cot": 1},
    "example_count": {0: 0, 1: 1, 3: 2, 5: 3},
}


def _additive_hook(signature):
    input_type, chunk_size, prompt_type, example_count, _model = signature
    return (
        _ADDITIVE_EFFECTS["input_type"][input_type]
        + _ADDITIVE_EFFECTS["chunk_size"][chunk_size]
        + _ADDITIVE_EFFECTS["prompt_type"][prompt_type]
        + _ADDITIVE_EFFECTS["example_count"][example_count]
    )


def _interaction_hook(signature):
    input_type, _chunk, prompt_type, _k, _model = signature
    table = {
        ("ocr", "few_shot"): 2,
        ("ocr", "cot"): 3,
        ("markdown", "few_shot"): 3,
        ("markdown", "cot"): 0,
    }
    return table[(input_type, prompt_type)]


def test_08_ofat_recovers_factorial_optimum_when_effects_are_additive():
    corpus = generate_corpus(8, seed=51)
    training = generate_corpus(6, seed=52, id_prefix="train").documents

    backend = oracle_for(corpus, effect_hook=_additive_hook)
    store = CompletionStore()
    factorial = factorial_search(None, corpus, backend, store=store, training_docs=training)
    ofat = ofat_search(
        None, baseline_config(), corpus, backend, store=store, training_docs=training
    )
    additive_ok = ofat.chosen == factorial.best

    tangled = oracle_for(corpus, effect_hook=_interaction_hook)
    tangled_store = CompletionStore()
    tangled_factorial = factorial_search(
        None, corpus, tangled, store=tangled_store, training_docs=training
    )
    tangled_ofat = ofat_search(
        None, baseline_config(), corpus, tangled, store=tangled_store, training_docs=training
    )
    by_config = {r.config: r for r in tangled_factorial.results}
    gap = by_config[tangled_factorial.best].f1 - by_config[tangled_ofat.chosen].f1
    interaction_ok = tangled_ofat.chosen != tangled_factorial.best and gap > 0
    report(
        8,
        additive_ok and interaction_ok,
        f"additive landscape: ofat choice equals factorial optimum "
        f"({ofat.chosen.as_dict() == factorial.best.as_dict()}); "
        f"interaction landscape: choices diverge, f1 gap {gap:.3f}",
    )


def test_09_rerun_is_call_free_and_byte_identical(tmp_path):
    corpus = generate_corpus(6, seed=61)
    training = generate_corpus(6, seed=62, id_prefix="train").documents
    store_dir = tmp_path / "completions"

    def run(backend):
        outcome = ofat_search(
            None,
            baseline_config(),
            corpus,
            backend,
            store=CompletionStore(store_dir),
            training_docs=training,
        )
        lines = sorted(
            json.dumps(r.as_record(), sort_keys=True) for r in outcome.results
        )
        return "\n".join(lines).encode("utf-8")

    first_backend = oracle_for(corpus)
    first_bytes = run(first_backend)
    second_backend = oracle_for(corpus)
    second_bytes = run(second_backend)
    report(
        9,
        second_backend.calls == 0 and first_bytes == second_bytes,
        f"rerun made {second_backend.calls} backend calls; "
        f"score records byte-identical: {first_bytes == second_bytes}",
    )


def test_10_cost_ledger_arithmetic():
    completions = [
        Completion(
            prompt_digest=f"d{i}",
            text="",
            input_tokens=30_200,
            output_tokens=2_000,
            model_name="gpt-3.5-turbo",
        )
        for i in range(10)
    ]
    summary = usage_report(completions)
    ok = summary.total_tokens == 322_000 and abs(summary.total_cost_usd - 0.18) <= 0.005
    report(
        10,
        ok,
        f"{summary.total_tokens} tokens priced at ${summary.total_cost_usd:.3f} "
        "(within $0.005 of $0.18)",
    )
