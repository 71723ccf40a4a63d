"""Tokenization with character offsets and span-to-token label projection.

Labels follow the Inside-Out scheme: a token is either inside a hallucinated
span (labelled with the span's type, or ``H`` in the binary task) or outside
(``O``). There is no Begin marker.

Two tokenizer modes cover the language set: ``whitespace`` splits on Unicode
whitespace runs; ``per_codepoint`` emits one token per non-whitespace scalar
value for unspaced scripts (Chinese, Japanese, Cantonese). Which mode defines
"token" is a per-language configuration choice, not something this module
guesses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import DataError
from .markup import AnnotatedText, HallucinationType, Span

#: Label for tokens outside every span.
OUTSIDE = "O"
#: Merged positive label used by the binary task.
BINARY_POSITIVE = "H"

BINARY = "binary"
CATEGORY = "category"

WHITESPACE = "whitespace"
PER_CODEPOINT = "per_codepoint"
TOKENIZER_MODES = (WHITESPACE, PER_CODEPOINT)

_CATEGORY_LABELS = frozenset({OUTSIDE} | {t.name for t in HallucinationType})
_BINARY_LABELS = frozenset({OUTSIDE, BINARY_POSITIVE})


class OffsetMismatchError(DataError):
    """Token offsets do not fit the text they were supposedly drawn from."""


@dataclass(frozen=True)
class Token:
    """A token with its half-open character range in the host text."""

    text: str
    start: int
    end: int


@dataclass(frozen=True)
class TokenLabels:
    """A token stream with one label per token.

    ``task`` is ``"binary"`` (labels in {O, H}) or ``"category"``
    (labels in {O} plus the six type names).
    """

    tokens: tuple = field(default_factory=tuple)
    labels: tuple = field(default_factory=tuple)
    task: str = CATEGORY

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.tokens) != len(self.labels):
            raise DataError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )
        allowed = _BINARY_LABELS if self.task == BINARY else _CATEGORY_LABELS
        bad = set(self.labels) - allowed
        if bad:
            raise DataError(f"labels {sorted(bad)} not valid for task {self.task!r}")

    def __len__(self) -> int:
        return len(self.labels)

    def binarized(self) -> "TokenLabels":
        """Merge every non-O label into the single positive class ``H``."""
        if self.task == BINARY:
            return self
        labels = tuple(
            OUTSIDE if lab == OUTSIDE else BINARY_POSITIVE for lab in self.labels
        )
        return TokenLabels(self.tokens, labels, BINARY)


_NONSPACE_RUN = re.compile(r"\S+")


def tokenize(text: str, mode: str = "whitespace") -> List[Token]:
    """Tokenize ``text``, returning tokens with scalar-value offsets."""
    if mode == "whitespace":
        return [
            Token(m.group(0), m.start(), m.end())
            for m in _NONSPACE_RUN.finditer(text)
        ]
    if mode == "per_codepoint":
        return [
            Token(ch, i, i + 1) for i, ch in enumerate(text) if not ch.isspace()
        ]
    raise ValueError(f"unknown tokenizer mode {mode!r}")


def project_labels(
    doc: AnnotatedText, tokens: Sequence[Token], task: str = CATEGORY
) -> TokenLabels:
    """Project span annotations onto tokens under the Inside-Out scheme.

    A token takes a span's label iff their character ranges share at least
    one character; every other token is labelled O. When a token straddles
    two adjacent spans, the earlier-starting span wins. The binary task maps
    every hallucination type to ``H``.
    """
    text_len = len(doc.text)
    for tok in tokens:
        if not (0 <= tok.start < tok.end <= text_len):
            raise OffsetMismatchError(
                f"token ({tok.start}, {tok.end}) outside text of length {text_len}"
            )

    labels = []
    spans = doc.spans
    si = 0
    for tok in tokens:
        # Spans and tokens are both sorted; drop spans that end at or
        # before this token.
        while si < len(spans) and spans[si].end <= tok.start:
            si += 1
        if si < len(spans) and spans[si].start < tok.end:
            labels.append(spans[si].htype.name)
        else:
            labels.append(OUTSIDE)

    out = TokenLabels(tuple(tokens), tuple(labels), CATEGORY)
    if task == BINARY:
        return out.binarized()
    if task == CATEGORY:
        return out
    raise ValueError(f"unknown task {task!r}")


def labels_to_spans(tl: TokenLabels) -> List[Span]:
    """Merge maximal runs of equal non-O labels back into spans.

    Each run becomes one span from the first token's start to the last
    token's end. A label change splits runs. Binary runs (label ``H``)
    yield untyped spans (``htype is None``).
    """
    spans: List[Span] = []
    run_label: Optional[str] = None
    run_start = run_end = 0
    for tok, lab in zip(tl.tokens, tl.labels):
        if lab == run_label and lab != OUTSIDE:
            run_end = tok.end
            continue
        if run_label is not None and run_label != OUTSIDE:
            spans.append(Span(run_start, run_end, _label_type(run_label)))
        run_label = lab
        run_start, run_end = tok.start, tok.end
    if run_label is not None and run_label != OUTSIDE:
        spans.append(Span(run_start, run_end, _label_type(run_label)))
    return spans


def _label_type(label: str) -> Optional[HallucinationType]:
    return None if label == BINARY_POSITIVE else HallucinationType[label]
