"""LayIE: a configurable harness for information extraction from
layout-rich documents with LLMs."""

from .backend import (
    BackendSpec,
    Completion,
    CompletionCache,
    CostSummary,
    OracleNoise,
    Sampling,
    cache_key,
    make_backend,
    usage_report,
)
from .chunker import Chunk, ChunkPolicy, chunk_document, token_cost
from .corpus import (
    Corpus,
    Document,
    ExampleSet,
    Page,
    Schema,
    Word,
    load_corpus,
    load_schema,
    save_corpus,
    select_examples,
)
from .metrics import MatchCounts, MatchTechnique, aggregate, fuzzy_ratio, score_document, value_match
from .prompting import Prompt, PromptStrategy, build_prompt, condense_example
from .refine import PredictionSet, SynonymTable, clean_values, decode_completions, map_keys
from .rendering import LayoutText, QuantBox, quantize_box, render_layout_text, render_markdown
from .sweep import (
    CompletionStore,
    RunConfig,
    RunResult,
    baseline_config,
    enumerate_space,
    execute_config,
    factorial_search,
    ofat_search,
)
from .synth import generate_corpus

__version__ = "0.1.0"
