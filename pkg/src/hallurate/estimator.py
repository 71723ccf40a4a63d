"""Precision/recall-corrected hallucination-rate estimation.

A detector run over a response corpus yields a detected-token count
``h_det`` out of ``n`` total tokens. The naive rate ``h_det / n`` inherits
the detector's mistakes; the corrected estimate discounts false positives
by the detector's measured precision and restores false negatives through
its recall::

    rate_pct = 100 * precision * h_det / (recall * n)

Multiplying by precision removes the expected share of wrong detections
(precision is exactly the fraction of detections that are real), and
dividing by recall adds back the expected share of missed hallucinations.
With a perfect detector (precision == recall) the correction cancels and
the corrected rate equals the naive one.

Estimates above 100% are reported as-is with an ``exceeds-100`` flag:
clamping would hide a precision/recall measurement that does not match the
corpus, which is precisely the situation worth noticing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import DataError
from .labeling import OUTSIDE, TokenLabels

SILVER = "silver"
GOLD = "gold"

EXCEEDS_100 = "exceeds-100"


class ZeroRecallError(DataError):
    """Recall of zero makes the correction undefined."""


class ZeroCorpusError(DataError):
    """No tokens to estimate over."""


class EmptyCorpusError(ZeroCorpusError):
    """A detection count was requested over an empty corpus."""


class EmptyGroupError(DataError):
    """An aggregation group contains no estimates."""


@dataclass(frozen=True)
class DetectorPerformance:
    """Measured token-level precision/recall of a detector for one language.

    ``source`` records which evaluation set produced the numbers (silver:
    machine-annotated; gold: human-adjudicated); ``task`` is binary or
    category.
    """

    language: str
    precision: float
    recall: float
    source: str = SILVER
    task: str = "binary"

    def __post_init__(self):
        if not 0.0 <= self.precision <= 1.0:
            raise DataError(f"precision {self.precision} outside [0, 1]")
        if not 0.0 <= self.recall <= 1.0:
            raise DataError(f"recall {self.recall} outside [0, 1]")
        if self.source not in (SILVER, GOLD):
            raise DataError(f"source must be silver or gold, got {self.source!r}")


@dataclass(frozen=True)
class DetectionRun:
    """One detector instance x generation seed pass over a corpus."""

    language: str
    model_id: str
    seed: int
    detector_instance: str
    h_det: int
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise DataError(f"run must cover a non-empty corpus, got n={self.n}")
        if not 0 <= self.h_det <= self.n:
            raise DataError(f"h_det={self.h_det} outside [0, n={self.n}]")


@dataclass(frozen=True)
class RateResult:
    """Corrected and naive rate for a single run, in percent."""

    hr_est: float
    naive: float
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RunEstimate:
    """A corrected rate tagged with its aggregation keys."""

    language: str
    model_id: str
    hr_est: float
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RateEstimate:
    """Mean +/- sample std of corrected rates for one (language, model) cell."""

    language: str
    model_id: str
    mean: float
    std: float
    n_runs: int
    flags: Tuple[str, ...] = ()


def count_detections(preds: Iterable[TokenLabels]) -> Tuple[int, int]:
    """Count (detected tokens, total tokens) across predicted labelings.

    Any non-O label counts as detected, so binary and category outputs are
    handled uniformly.
    """
    h_det = 0
    n = 0
    for doc in preds:
        n += len(doc.labels)
        h_det += sum(1 for lab in doc.labels if lab != OUTSIDE)
    if n == 0:
        raise EmptyCorpusError("no tokens in corpus")
    return h_det, n


def estimate_rate(perf: DetectorPerformance, h_det: int, n: int) -> RateResult:
    """Apply the precision/recall correction to one detection count."""
    if n <= 0:
        raise ZeroCorpusError("total token count must be positive")
    if not 0 <= h_det <= n:
        raise DataError(f"h_det={h_det} outside [0, n={n}]")
    if perf.recall == 0.0:
        raise ZeroRecallError(
            f"recall is 0 for language {perf.language!r}; correction undefined"
        )
    naive = 100.0 * h_det / n
    hr_est = 100.0 * perf.precision * h_det / (perf.recall * n)
    flags = (EXCEEDS_100,) if hr_est > 100.0 else ()
    return RateResult(hr_est, naive, flags)


def estimate_run(perf: DetectorPerformance, run: DetectionRun) -> RunEstimate:
    """Correct one detection run, keeping its aggregation keys."""
    result = estimate_rate(perf, run.h_det, run.n)
    return RunEstimate(run.language, run.model_id, result.hr_est, result.flags)


def aggregate_runs(estimates: Iterable[RunEstimate]) -> List[RateEstimate]:
    """Aggregate per-run estimates into mean +/- std per (language, model).

    Uses the sample standard deviation (n-1 denominator), 0 for singleton
    groups. Flags raised by any member run propagate to the cell.
    """
    groups: Dict[Tuple[str, str], List[RunEstimate]] = {}
    for est in estimates:
        groups.setdefault((est.language, est.model_id), []).append(est)
    out = []
    for (language, model_id), members in sorted(groups.items()):
        if not members:
            raise EmptyGroupError(f"no estimates for ({language}, {model_id})")
        values = [m.hr_est for m in members]
        mean = math.fsum(values) / len(values)
        if len(values) > 1:
            var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        flags = tuple(sorted({f for m in members for f in m.flags}))
        out.append(RateEstimate(language, model_id, mean, std, len(values), flags))
    return out
