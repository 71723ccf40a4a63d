"""Records and persistence for the estimation pipeline.

JSONL is the interchange format between pipeline stages. Serialization is
canonical: UTF-8, one compact JSON object per line with fields in a fixed
documented order, so equal records always produce identical bytes and
``load(store(x)) == x``.

Schemas (field names exact):

* ``article``   — ``{id, language, text, depth}``; char_len is measured,
  not stored.
* ``query``     — ``{id, article_id, language, text}``
* ``response``  — ``{id, query_id, model_id, seed, answer|answer_markup}``
* ``annotated`` — ``{id, language, text, spans}``, spans as
  ``[start, end, type]`` triples in character offsets.
* ``labels``    — ``{id, task, tokens, labels}``, tokens as
  ``[text, start, end]`` triples.
* ``perf``      — ``{language, task, source, precision, recall}``
* ``run``       — ``{language, model_id, seed, detector_instance, h_det, n}``
* ``estimate``  — ``{language, model_id, mean, std, n_runs, flags}``
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from .errors import DataError, HallurateError
from .estimator import DetectionRun, DetectorPerformance, RateEstimate
from .labeling import Token, TokenLabels
from .markup import AnnotatedText, HallucinationType, Span


class SchemaViolationError(DataError):
    """A record does not match its schema; message carries file:line."""


class MalformedJsonError(DataError):
    pass


class IoFailureError(HallurateError):
    pass


# ---------------------------------------------------------------------------
# Record types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArticleRecord:
    """A source article with its quality metadata.

    ``char_len`` is always the measured Unicode length of ``text``; passing
    a contradicting value is an error. ``depth`` is ingested as precomputed
    metadata and accepted as any non-negative real.
    """

    id: str
    language: str
    text: str
    depth: float
    char_len: Optional[int] = None

    def __post_init__(self):
        if not self.id or not self.language:
            raise DataError("article needs non-empty id and language")
        if self.depth < 0:
            raise DataError(f"article {self.id}: depth is negative ({self.depth})")
        measured = len(self.text)
        if self.char_len is None:
            object.__setattr__(self, "char_len", measured)
        elif self.char_len != measured:
            raise DataError(
                f"article {self.id}: char_len {self.char_len} != "
                f"measured length {measured}"
            )


@dataclass(frozen=True)
class QueryRecord:
    id: str
    article_id: str
    language: str
    text: str

    def __post_init__(self):
        if not self.id or not self.article_id:
            raise DataError("query needs non-empty id and article_id")


@dataclass(frozen=True)
class ResponseRecord:
    """One model answer to a query, either clean or still carrying markup."""

    id: str
    query_id: str
    model_id: str
    seed: int
    answer: Optional[str] = None
    answer_markup: Optional[str] = None

    def __post_init__(self):
        if not self.id or not self.query_id:
            raise DataError("response needs non-empty id and query_id")
        if (self.answer is None) == (self.answer_markup is None):
            raise DataError(
                f"response {self.id}: exactly one of answer/answer_markup required"
            )


@dataclass(frozen=True)
class AnnotatedRecord:
    """A document with validated hallucination spans."""

    id: str
    language: str
    doc: AnnotatedText

    def __post_init__(self):
        if not self.id:
            raise DataError("annotated record needs a non-empty id")


@dataclass(frozen=True)
class LabelsRecord:
    """Token labels for one document, as produced by projection or a detector."""

    id: str
    labels: TokenLabels

    def __post_init__(self):
        if not self.id:
            raise DataError("labels record needs a non-empty id")


# ---------------------------------------------------------------------------
# Schema (de)serialization
# ---------------------------------------------------------------------------

ARTICLE = "article"
QUERY = "query"
RESPONSE = "response"
ANNOTATED = "annotated"
LABELS = "labels"
PERF = "perf"
RUN = "run"
ESTIMATE = "estimate"


def _want(obj: dict, key: str, kinds, where: str):
    if key not in obj:
        raise SchemaViolationError(f"{where}: missing field {key!r}")
    value = obj[key]
    # bool is an int subclass; never accept it for numeric fields.
    if isinstance(value, bool) and bool not in (
        kinds if isinstance(kinds, tuple) else (kinds,)
    ):
        raise SchemaViolationError(f"{where}: field {key!r} has wrong type bool")
    if not isinstance(value, kinds):
        raise SchemaViolationError(
            f"{where}: field {key!r} has wrong type {type(value).__name__}"
        )
    return value


def _article_to_obj(rec: ArticleRecord) -> dict:
    return {
        "id": rec.id, "language": rec.language,
        "text": rec.text, "depth": rec.depth,
    }


def _article_from_obj(obj: dict, where: str) -> ArticleRecord:
    return ArticleRecord(
        id=_want(obj, "id", str, where),
        language=_want(obj, "language", str, where),
        text=_want(obj, "text", str, where),
        depth=_want(obj, "depth", (int, float), where),
    )


def _query_to_obj(rec: QueryRecord) -> dict:
    return {
        "id": rec.id, "article_id": rec.article_id,
        "language": rec.language, "text": rec.text,
    }


def _query_from_obj(obj: dict, where: str) -> QueryRecord:
    return QueryRecord(
        id=_want(obj, "id", str, where),
        article_id=_want(obj, "article_id", str, where),
        language=_want(obj, "language", str, where),
        text=_want(obj, "text", str, where),
    )


def _response_to_obj(rec: ResponseRecord) -> dict:
    out = {
        "id": rec.id, "query_id": rec.query_id,
        "model_id": rec.model_id, "seed": rec.seed,
    }
    if rec.answer is not None:
        out["answer"] = rec.answer
    else:
        out["answer_markup"] = rec.answer_markup
    return out


def _response_from_obj(obj: dict, where: str) -> ResponseRecord:
    answer = obj.get("answer")
    markup = obj.get("answer_markup")
    if answer is not None and not isinstance(answer, str):
        raise SchemaViolationError(f"{where}: field 'answer' has wrong type")
    if markup is not None and not isinstance(markup, str):
        raise SchemaViolationError(f"{where}: field 'answer_markup' has wrong type")
    return ResponseRecord(
        id=_want(obj, "id", str, where),
        query_id=_want(obj, "query_id", str, where),
        model_id=_want(obj, "model_id", str, where),
        seed=_want(obj, "seed", int, where),
        answer=answer,
        answer_markup=markup,
    )


def _annotated_to_obj(rec: AnnotatedRecord) -> dict:
    return {
        "id": rec.id,
        "language": rec.language,
        "text": rec.doc.text,
        "spans": [[s.start, s.end, s.htype.tag] for s in rec.doc.spans],
    }


def _annotated_from_obj(obj: dict, where: str) -> AnnotatedRecord:
    raw_spans = _want(obj, "spans", list, where)
    spans = []
    for i, item in enumerate(raw_spans):
        if (
            not isinstance(item, list) or len(item) != 3
            or not isinstance(item[0], int) or not isinstance(item[1], int)
            or not isinstance(item[2], str)
        ):
            raise SchemaViolationError(
                f"{where}: spans[{i}] must be [start, end, type]"
            )
        spans.append(Span(item[0], item[1], HallucinationType.from_tag(item[2])))
    return AnnotatedRecord(
        id=_want(obj, "id", str, where),
        language=_want(obj, "language", str, where),
        doc=AnnotatedText(_want(obj, "text", str, where), tuple(spans)),
    )


def _labels_to_obj(rec: LabelsRecord) -> dict:
    tl = rec.labels
    return {
        "id": rec.id,
        "task": tl.task,
        "tokens": [[t.text, t.start, t.end] for t in tl.tokens],
        "labels": list(tl.labels),
    }


def _labels_from_obj(obj: dict, where: str) -> LabelsRecord:
    raw_tokens = _want(obj, "tokens", list, where)
    tokens = []
    for i, item in enumerate(raw_tokens):
        if (
            not isinstance(item, list) or len(item) != 3
            or not isinstance(item[0], str)
            or not isinstance(item[1], int) or not isinstance(item[2], int)
        ):
            raise SchemaViolationError(
                f"{where}: tokens[{i}] must be [text, start, end]"
            )
        tokens.append(Token(item[0], item[1], item[2]))
    raw_labels = _want(obj, "labels", list, where)
    if not all(isinstance(lab, str) for lab in raw_labels):
        raise SchemaViolationError(f"{where}: labels must be strings")
    return LabelsRecord(
        id=_want(obj, "id", str, where),
        labels=TokenLabels(
            tuple(tokens), tuple(raw_labels), task=_want(obj, "task", str, where)
        ),
    )


def _perf_to_obj(rec: DetectorPerformance) -> dict:
    return {
        "language": rec.language, "task": rec.task, "source": rec.source,
        "precision": rec.precision, "recall": rec.recall,
    }


def _perf_from_obj(obj: dict, where: str) -> DetectorPerformance:
    return DetectorPerformance(
        language=_want(obj, "language", str, where),
        precision=_want(obj, "precision", (int, float), where),
        recall=_want(obj, "recall", (int, float), where),
        source=_want(obj, "source", str, where),
        task=_want(obj, "task", str, where),
    )


def _run_to_obj(rec: DetectionRun) -> dict:
    return {
        "language": rec.language, "model_id": rec.model_id, "seed": rec.seed,
        "detector_instance": rec.detector_instance,
        "h_det": rec.h_det, "n": rec.n,
    }


def _run_from_obj(obj: dict, where: str) -> DetectionRun:
    return DetectionRun(
        language=_want(obj, "language", str, where),
        model_id=_want(obj, "model_id", str, where),
        seed=_want(obj, "seed", int, where),
        detector_instance=_want(obj, "detector_instance", str, where),
        h_det=_want(obj, "h_det", int, where),
        n=_want(obj, "n", int, where),
    )


def _estimate_to_obj(rec: RateEstimate) -> dict:
    return {
        "language": rec.language, "model_id": rec.model_id,
        "mean": rec.mean, "std": rec.std, "n_runs": rec.n_runs,
        "flags": list(rec.flags),
    }


def _estimate_from_obj(obj: dict, where: str) -> RateEstimate:
    flags = _want(obj, "flags", list, where)
    if not all(isinstance(f, str) for f in flags):
        raise SchemaViolationError(f"{where}: flags must be strings")
    return RateEstimate(
        language=_want(obj, "language", str, where),
        model_id=_want(obj, "model_id", str, where),
        mean=_want(obj, "mean", (int, float), where),
        std=_want(obj, "std", (int, float), where),
        n_runs=_want(obj, "n_runs", int, where),
        flags=tuple(flags),
    )


_SCHEMAS = {
    ARTICLE: (ArticleRecord, _article_to_obj, _article_from_obj),
    QUERY: (QueryRecord, _query_to_obj, _query_from_obj),
    RESPONSE: (ResponseRecord, _response_to_obj, _response_from_obj),
    ANNOTATED: (AnnotatedRecord, _annotated_to_obj, _annotated_from_obj),
    LABELS: (LabelsRecord, _labels_to_obj, _labels_from_obj),
    PERF: (DetectorPerformance, _perf_to_obj, _perf_from_obj),
    RUN: (DetectionRun, _run_to_obj, _run_from_obj),
    ESTIMATE: (RateEstimate, _estimate_to_obj, _estimate_from_obj),
}

_TYPE_TO_SCHEMA = {cls: name for name, (cls, _, _) in _SCHEMAS.items()}


def _check_schema(schema: str) -> None:
    if schema not in _SCHEMAS:
        raise DataError(
            f"unknown schema {schema!r}; expected one of {sorted(_SCHEMAS)}"
        )


def load_jsonl(path, schema: str) -> Iterator:
    """Stream typed records from a JSONL file, validating each line.

    Errors carry ``path:line`` context. Blank lines are skipped.
    """
    _check_schema(schema)
    from_obj = _SCHEMAS[schema][2]
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(raw)
            except ValueError as exc:
                raise MalformedJsonError(f"{where}: {exc}") from exc
            if not isinstance(obj, dict):
                raise SchemaViolationError(f"{where}: expected a JSON object")
            try:
                yield from_obj(obj, where)
            except SchemaViolationError:
                raise
            except DataError as exc:
                raise SchemaViolationError(f"{where}: {exc}") from exc


def record_to_json(record) -> str:
    """Canonical single-line JSON for any known record type."""
    schema = _TYPE_TO_SCHEMA.get(type(record))
    if schema is None:
        raise DataError(f"no schema for record type {type(record).__name__}")
    to_obj = _SCHEMAS[schema][1]
    return json.dumps(to_obj(record), ensure_ascii=False, separators=(",", ":"))


def store_jsonl(records: Iterable, path) -> int:
    """Write records as canonical JSONL; returns the number of lines."""
    count = 0
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(record_to_json(record))
                fh.write("\n")
                count += 1
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return count


# ---------------------------------------------------------------------------
# Article quality filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterReport:
    kept: int
    dropped_short: int
    dropped_shallow: int

    @property
    def total(self) -> int:
        return self.kept + self.dropped_short + self.dropped_shallow


def filter_articles(records: Iterable[ArticleRecord], min_len: int = 2000,
                    min_depth: float = 5.0) -> Tuple[List[ArticleRecord], FilterReport]:
    """Keep articles with char_len >= min_len and depth >= min_depth.

    Both thresholds are inclusive. When an article fails both, it is
    counted under the length reason (checked first).
    """
    kept: List[ArticleRecord] = []
    dropped_short = 0
    dropped_shallow = 0
    for rec in records:
        if rec.char_len < min_len:
            dropped_short += 1
        elif rec.depth < min_depth:
            dropped_shallow += 1
        else:
            kept.append(rec)
    return kept, FilterReport(len(kept), dropped_short, dropped_shallow)


# ---------------------------------------------------------------------------
# Referential integrity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceReport:
    """Dangling references are failures; one-query articles only a warning."""

    dangling_queries: Tuple[str, ...]
    dangling_responses: Tuple[str, ...]
    one_query_articles: Tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.dangling_queries and not self.dangling_responses


def verify_references(articles: Sequence[ArticleRecord],
                      queries: Sequence[QueryRecord],
                      responses: Sequence[ResponseRecord]) -> ReferenceReport:
    """Check that queries resolve to articles and responses to queries."""
    article_ids = {a.id for a in articles}
    query_ids = {q.id for q in queries}
    dangling_q = tuple(
        q.id for q in queries if q.article_id not in article_ids
    )
    dangling_r = tuple(
        r.id for r in responses if r.query_id not in query_ids
    )
    per_article: dict = {}
    for q in queries:
        per_article[q.article_id] = per_article.get(q.article_id, 0) + 1
    single = tuple(
        a.id for a in articles if per_article.get(a.id, 0) == 1
    )
    return ReferenceReport(dangling_q, dangling_r, single)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def write_score_csv(path, rows) -> None:
    """Score table: one row per (language, source, ScoreReport).

    Fixed column order: language,task,source,precision,recall,f1.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["language", "task", "source", "precision", "recall", "f1"]
            )
            for language, source, report in rows:
                writer.writerow(
                    [language, report.task, source,
                     repr(report.precision), repr(report.recall), repr(report.f1)]
                )
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_iaa_csv(path, language: str, task: str, pairs,
                  mean_kappa: float) -> None:
    """Agreement table: one row per annotator pair plus a mean row.

    ``pairs`` yields ``(name_a, name_b, AgreementResult)``.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["language", "task", "pair", "kappa",
                 "observed_agreement", "expected_agreement"]
            )
            for name_a, name_b, agr in pairs:
                writer.writerow(
                    [language, task, f"{name_a}|{name_b}", repr(agr.kappa),
                     repr(agr.observed_agreement), repr(agr.expected_agreement)]
                )
            writer.writerow([language, task, "mean", repr(mean_kappa), "", ""])
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_estimate_csv(path, estimates: Sequence[RateEstimate]) -> None:
    """Rate matrix: languages down, models across, cells ``mean±std``."""
    languages = sorted({e.language for e in estimates})
    models = sorted({e.model_id for e in estimates})
    cells = {(e.language, e.model_id): e for e in estimates}
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["language"] + models)
            for lang in languages:
                row = [lang]
                for model in models:
                    est = cells.get((lang, model))
                    row.append(
                        "" if est is None else f"{est.mean:.2f}±{est.std:.2f}"
                    )
                writer.writerow(row)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
