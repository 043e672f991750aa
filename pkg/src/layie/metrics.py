"""Value matching (exact, substring, fuzzy) and micro-averaged P/R/F1.

Values are normalized before comparison: lowercase, trimmed, internal
whitespace collapsed. Fuzzy similarity is the normalized indel ratio
(|a| + |b| - indel_distance) / (|a| + |b|), so it is 1.0 exactly when the
normalized strings are equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import UsageError

MATCH_TECHNIQUES = ("exact", "substring", "fuzzy")

DEFAULT_FUZZY_THRESHOLD = 0.8

ERROR_CATEGORIES = (
    "ocr_error",
    "gt_error",
    "llm_hallucination",
    "additional_info",
    "wrong_info",
    "human_error",
    "incomplete_prediction",
)

_WS = re.compile(r"\s+")


def normalize(value: str) -> str:
    return _WS.sub(" ", value.strip()).lower()


@dataclass(frozen=True)
class MatchTechnique:
    kind: str
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in MATCH_TECHNIQUES:
            raise UsageError(f"unknown match technique {self.kind!r}")
        if self.kind == "fuzzy":
            threshold = self.threshold if self.threshold is not None else DEFAULT_FUZZY_THRESHOLD
            if not 0 < threshold <= 1:
                raise UsageError(f"fuzzy threshold must be in (0, 1], got {threshold}")
            object.__setattr__(self, "threshold", threshold)
        elif self.threshold is not None:
            raise UsageError(f"threshold only applies to fuzzy matching")


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # true when a denominator was empty


def indel_distance(a: str, b: str) -> int:
    """Edit distance with insertions and deletions only (no substitutions)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            if ca == cb:
                current.append(previous[j - 1])
            else:
                current.append(1 + min(previous[j], current[-1]))
        previous = current
    return previous[-1]


def fuzzy_ratio(a: str, b: str) -> float:
    """Normalized indel similarity in [0, 1]; both empty counts as 1.0."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return (total - indel_distance(a, b)) / total


def value_match(pred: str, gt: str, tech: MatchTechnique) -> bool:
    """Compare one predicted value against one ground-truth value."""
    pred_n, gt_n = normalize(pred), normalize(gt)
    if tech.kind == "exact":
        return pred_n == gt_n
    if tech.kind == "substring":
        return gt_n in pred_n
    return fuzzy_ratio(pred_n, gt_n) >= tech.threshold


def _score_attribute(preds: list[str], gts: list[str], tech: MatchTechnique) -> MatchCounts:
    # One-to-one greedy assignment in descending similarity order over the
    # pairs that satisfy the technique.
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gt in enumerate(gts):
            if value_match(pred, gt, tech):
                ratio = fuzzy_ratio(normalize(pred), normalize(gt))
                candidates.append((-ratio, pi, gi))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    tp = 0
    for _, pi, gi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        tp += 1
    return MatchCounts(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp)


def score_document(preds, gt: dict[str, list[str]], tech: MatchTechnique) -> MatchCounts:
    """Score one document's predictions against its ground truth.

    ``preds`` maps attribute -> list of predicted values (a PredictionSet's
    entries work directly). Attributes are scored independently and summed.
    """
    entries = preds.entries if hasattr(preds, "entries") else preds
    counts = MatchCounts()
    for attr in set(entries) | set(gt):
        counts = counts + _score_attribute(
            list(entries.get(attr, [])), list(gt.get(attr, [])), tech
        )
    return counts


def aggregate(counts) -> PRF:
    """Micro-averaged precision/recall/F1 over per-document counts."""
    total = MatchCounts()
    for c in counts:
        total = total + c
    degenerate = False
    if total.tp + total.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = total.tp / (total.tp + total.fp)
    if total.tp + total.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = total.tp / (total.tp + total.fn)
    if precision + recall == 0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return PRF(precision=precision, recall=recall, f1=f1, degenerate=degenerate)
