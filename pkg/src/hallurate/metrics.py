"""Token-level scoring, inter-annotator agreement, and dataset statistics.

Detector scoring is precision/recall/F1 over tokens. The binary task treats
any non-O label as the positive class; the category task micro-averages
true/false positives and false negatives over the six hallucination types,
with O excluded from the positives. A predicted non-O token whose class
differs from a non-O gold class counts as one false positive (for the
predicted class) and one false negative (for the gold class).

Agreement is Cohen's kappa on token-level label decisions, averaged over
unordered annotator pairs. Annotator screening uses raw observed agreement;
adjudication picks the annotator with the highest kappa against the
machine-generated ("silver") annotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .labeling import BINARY, CATEGORY, OUTSIDE, Token, TokenLabels
from .markup import TYPE_ORDER, AnnotatedText


class TokenMismatchError(DataError):
    """Two labelings do not share the same token stream."""


class EmptyInputError(DataError):
    """No tokens or no annotators to work with."""


class AllScreenedOutError(DataError):
    """Every annotator fell below the screening threshold."""


class OutOfRangeError(DataError):
    """A rating outside the 1..5 scale."""


@dataclass(frozen=True)
class ConfusionCounts:
    """Token-level confusion counts.

    For the binary task ``tp + fp + fn + tn`` equals the token count. For
    the category task the aggregate counts are micro sums over the six
    classes (``per_class`` holds the per-type breakdown) and ``tn`` counts
    tokens that are O in both gold and prediction.
    """

    tp: int
    fp: int
    fn: int
    tn: int
    per_class: Optional[Mapping[str, Tuple[int, int, int]]] = None


@dataclass(frozen=True)
class ScoreReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    task: str


@dataclass(frozen=True)
class AgreementResult:
    """Cohen's kappa with its observed/expected agreement components."""

    kappa: float
    observed_agreement: float
    expected_agreement: float
    mode: str


@dataclass(frozen=True)
class AdjudicationResult:
    chosen: str
    agreements: Mapping[str, AgreementResult]
    flagged: Tuple[str, ...]


def _require_same_stream(a: TokenLabels, b: TokenLabels) -> None:
    if a.tokens is b.tokens:
        return
    if len(a) != len(b):
        raise TokenMismatchError(f"{len(a)} tokens vs {len(b)}")
    for ta, tb in zip(a.tokens, b.tokens):
        if ta.start != tb.start or ta.end != tb.end:
            raise TokenMismatchError(
                f"token offsets differ: ({ta.start},{ta.end}) vs ({tb.start},{tb.end})"
            )


def _prf(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def score_tokens(gold: TokenLabels, pred: TokenLabels, task: str = BINARY) -> ScoreReport:
    """Score ``pred`` against ``gold`` on their shared token stream."""
    _require_same_stream(gold, pred)
    g = np.asarray(gold.labels, dtype=object)
    p = np.asarray(pred.labels, dtype=object)
    n = len(g)

    if task == BINARY:
        gpos = g != OUTSIDE
        ppos = p != OUTSIDE
        tp = int(np.count_nonzero(gpos & ppos))
        fp = int(np.count_nonzero(~gpos & ppos))
        fn = int(np.count_nonzero(gpos & ~ppos))
        tn = n - tp - fp - fn
        counts = ConfusionCounts(tp, fp, fn, tn)
    elif task == CATEGORY:
        per_class = {}
        for htype in TYPE_ORDER:
            cls = htype.name
            gc = g == cls
            pc = p == cls
            per_class[cls] = (
                int(np.count_nonzero(gc & pc)),
                int(np.count_nonzero(~gc & pc)),
                int(np.count_nonzero(gc & ~pc)),
            )
        tp = sum(c[0] for c in per_class.values())
        fp = sum(c[1] for c in per_class.values())
        fn = sum(c[2] for c in per_class.values())
        tn = int(np.count_nonzero((g == OUTSIDE) & (p == OUTSIDE)))
        counts = ConfusionCounts(tp, fp, fn, tn, per_class)
    else:
        raise ValueError(f"unknown task {task!r}")

    precision, recall, f1 = _prf(counts.tp, counts.fp, counts.fn)
    return ScoreReport(precision, recall, f1, counts, task)


def score_corpus(
    pairs: Iterable[Tuple[TokenLabels, TokenLabels]], task: str = BINARY
) -> ScoreReport:
    """Micro-averaged score over (gold, pred) document pairs.

    Confusion counts are summed across documents before computing
    precision/recall/F1, so partitioning a corpus and summing is exact.
    """
    tp = fp = fn = tn = 0
    per_class: Optional[Dict[str, List[int]]] = (
        {htype.name: [0, 0, 0] for htype in TYPE_ORDER}
        if task == CATEGORY
        else None
    )
    n_docs = 0
    for gold, pred in pairs:
        counts = score_tokens(gold, pred, task).counts
        tp += counts.tp
        fp += counts.fp
        fn += counts.fn
        tn += counts.tn
        if per_class is not None:
            for cls, triple in counts.per_class.items():
                acc = per_class[cls]
                acc[0] += triple[0]
                acc[1] += triple[1]
                acc[2] += triple[2]
        n_docs += 1
    if n_docs == 0:
        raise EmptyInputError("no documents to score")
    merged = ConfusionCounts(
        tp, fp, fn, tn,
        None if per_class is None
        else {cls: tuple(acc) for cls, acc in per_class.items()},
    )
    precision, recall, f1 = _prf(tp, fp, fn)
    return ScoreReport(precision, recall, f1, merged, task)


def cohen_kappa(a: TokenLabels, b: TokenLabels, mode: Optional[str] = None) -> AgreementResult:
    """Cohen's kappa between two labelings of the same token stream.

    ``mode="binary"`` collapses labels to {O, H} first; by default labels
    are compared as given. When expected agreement is 1 (both labelings
    constant on the same label) kappa is 1 if they agree everywhere, else 0,
    so constant-label documents do not poison averages.
    """
    _require_same_stream(a, b)
    if len(a) == 0:
        raise EmptyInputError("cannot compute agreement over zero tokens")
    if mode not in (None, BINARY, CATEGORY):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == BINARY or (mode is None and a.task != b.task):
        # Mixed-task comparisons only make sense on the merged positive class.
        a, b = a.binarized(), b.binarized()
    result_mode = mode or a.task

    n = len(a)
    agree = sum(x == y for x, y in zip(a.labels, b.labels))
    p_o = agree / n

    counts_a: Dict[str, int] = {}
    counts_b: Dict[str, int] = {}
    for lab in a.labels:
        counts_a[lab] = counts_a.get(lab, 0) + 1
    for lab in b.labels:
        counts_b[lab] = counts_b.get(lab, 0) + 1
    # p_e == 1 exactly iff both labelings are constant on one shared label;
    # detect via integer counts to dodge float comparisons.
    degenerate = any(
        counts_a.get(lab, 0) == n and counts_b.get(lab, 0) == n for lab in counts_a
    )
    p_e = sum(
        (counts_a[lab] / n) * (counts_b.get(lab, 0) / n) for lab in counts_a
    )
    if degenerate:
        kappa = 1.0 if agree == n else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementResult(kappa, p_o, p_e, result_mode)


AnnotatorLabels = Union[TokenLabels, Sequence[TokenLabels]]


def concatenate_labels(docs: AnnotatorLabels) -> TokenLabels:
    """Join per-document labelings into one stream with re-based offsets."""
    if isinstance(docs, TokenLabels):
        return docs
    docs = list(docs)
    if not docs:
        raise EmptyInputError("annotator has no documents")
    if len(docs) == 1:
        return docs[0]
    # Re-base offsets so the concatenated stream is itself a valid stream.
    tokens = []
    labels = []
    offset = 0
    for doc in docs:
        for tok in doc.tokens:
            tokens.append(Token(tok.text, tok.start + offset, tok.end + offset))
        labels.extend(doc.labels)
        if doc.tokens:
            offset += doc.tokens[-1].end + 1
    task = BINARY if all(d.task == BINARY for d in docs) else CATEGORY
    return TokenLabels(tuple(tokens), tuple(labels), task)


def pairwise_iaa(annotations: Sequence[AnnotatorLabels], mode: str = CATEGORY) -> float:
    """Mean Cohen's kappa over all unordered annotator pairs.

    Each annotator's input may be a single labeling or a sequence of
    per-document labelings; documents are concatenated (in order) before
    each pairwise kappa.
    """
    if len(annotations) < 2:
        raise EmptyInputError("need at least two annotators")
    streams = [concatenate_labels(ann) for ann in annotations]
    kappas = [
        cohen_kappa(x, y, mode=mode).kappa for x, y in combinations(streams, 2)
    ]
    return float(np.mean(kappas))


def adjudicate(
    annotators: Mapping[str, TokenLabels],
    silver: TokenLabels,
    screen_threshold: float = 0.40,
) -> AdjudicationResult:
    """Screen annotators and pick the one agreeing best with silver.

    Screening flags annotators whose raw observed agreement with silver
    falls below ``screen_threshold``; among the rest, the annotator with
    the highest kappa wins, ties broken by lexicographically smallest id.
    """
    if not annotators:
        raise EmptyInputError("no annotators given")
    if not 0.0 <= screen_threshold <= 1.0:
        raise ValueError("screen_threshold must lie in [0, 1]")
    agreements = {
        aid: cohen_kappa(labels, silver) for aid, labels in annotators.items()
    }
    flagged = tuple(
        sorted(
            aid
            for aid, agr in agreements.items()
            if agr.observed_agreement < screen_threshold
        )
    )
    eligible = [aid for aid in agreements if aid not in flagged]
    if not eligible:
        raise AllScreenedOutError(
            f"all annotators below {screen_threshold:.0%} observed agreement"
        )
    chosen = min(eligible, key=lambda aid: (-agreements[aid].kappa, aid))
    return AdjudicationResult(chosen, agreements, flagged)


#: Reserved row key for column totals in span-count tables.
TOTAL = "Total"


def span_stats(
    docs_by_language: Mapping[str, Iterable[AnnotatedText]],
) -> Dict[str, Dict[str, int]]:
    """Span counts per (language, type), with row and column totals.

    Returns one row per language plus a ``"Total"`` row; each row maps the
    six type names plus ``"Total"`` to counts, in fixed column order.
    """
    table: Dict[str, Dict[str, int]] = {}
    for language, docs in docs_by_language.items():
        row = {htype.name: 0 for htype in TYPE_ORDER}
        for doc in docs:
            for span in doc.spans:
                row[span.htype.name] += 1
        row[TOTAL] = sum(row.values())
        table[language] = row
    totals = {htype.name: 0 for htype in TYPE_ORDER}
    for row in table.values():
        for htype in TYPE_ORDER:
            totals[htype.name] += row[htype.name]
    totals[TOTAL] = sum(totals.values())
    table[TOTAL] = totals
    return table


LIKERT_LEVELS = ("Very Unlikely", "Unlikely", "Neutral", "Likely", "Very Likely")


def likert_distribution(ratings: Iterable[int]) -> List[float]:
    """Percentage of 1..5 ratings at each level, rounded to one decimal."""
    counts = [0] * 5
    total = 0
    for rating in ratings:
        if rating not in (1, 2, 3, 4, 5):
            raise OutOfRangeError(f"rating {rating!r} outside 1..5")
        counts[rating - 1] += 1
        total += 1
    if total == 0:
        raise EmptyInputError("no ratings given")
    return [round(100.0 * c / total, 1) for c in counts]
