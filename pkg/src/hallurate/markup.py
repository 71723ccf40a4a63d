"""Inline tag markup for hallucination span annotations.

Annotated passages arrive as plain text with hallucinated stretches wrapped
in one of six tags, e.g.::

    Messi is an <entity>American</entity> soccer player.

Parsing strips the tags and records each wrapped stretch as a typed,
character-offset span over the clean text; rendering is the exact inverse.
Offsets count Unicode scalar values (Python string indices), never bytes.

Tags may not nest or overlap. Empty tag pairs (``<entity></entity>``) are
tolerated on input but dropped with a warning: they select no characters.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import DataError


class HallucinationType(Enum):
    """The six span categories, keyed by their canonical tag name."""

    ENT = "entity"
    REL = "relation"
    INV = "invented"
    CON = "contradictory"
    UNV = "unverifiable"
    SUB = "subjective"

    @property
    def tag(self) -> str:
        """Canonical lowercase tag name used in markup."""
        return self.value

    @classmethod
    def from_tag(cls, tag: str) -> "HallucinationType":
        try:
            return _TAG_TO_TYPE[tag.lower()]
        except KeyError:
            raise UnknownTagError(f"unknown tag name {tag!r}") from None

    @classmethod
    def from_label(cls, label: str) -> "HallucinationType":
        """Resolve a short label such as ``"ENT"`` (case-sensitive)."""
        return cls[label]


_TAG_TO_TYPE = {t.value: t for t in HallucinationType}

#: Fixed presentation order for per-type tables.
TYPE_ORDER = (
    HallucinationType.ENT,
    HallucinationType.REL,
    HallucinationType.INV,
    HallucinationType.CON,
    HallucinationType.UNV,
    HallucinationType.SUB,
)


class MarkupError(DataError):
    """Malformed tag markup. ``offset`` indexes the offending character."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnbalancedTagError(MarkupError):
    """Opening tag without a matching close, or vice versa."""


class NestedTagError(MarkupError):
    """A tag opened while another tag was still open."""


class UnknownTagError(MarkupError):
    """Tag name outside the six-type taxonomy."""


class InvalidSpansError(DataError):
    """Span set violates ordering, bounds, or overlap rules."""


class ZeroLengthSpanWarning(UserWarning):
    """An empty tag pair was dropped during parsing."""


@dataclass(frozen=True)
class Span:
    """Half-open character range ``[start, end)`` with a hallucination type.

    ``htype`` is ``None`` only for untyped spans recovered from binary
    label sequences; annotation spans are always typed.
    """

    start: int
    end: int
    htype: Optional[HallucinationType]

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class AnnotatedText:
    """Clean text plus its ordered, non-overlapping typed spans."""

    text: str
    spans: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        check_spans(self.spans, len(self.text))

    def span_text(self, span: Span) -> str:
        return self.text[span.start:span.end]


def check_spans(spans: Sequence[Span], text_len: int) -> None:
    """Raise :class:`InvalidSpansError` unless spans are valid over a text
    of ``text_len`` characters: typed, in-bounds, sorted, non-overlapping."""
    prev_end = 0
    for span in spans:
        if span.htype is None:
            raise InvalidSpansError(f"span {span} has no hallucination type")
        if not (0 <= span.start < span.end <= text_len):
            raise InvalidSpansError(
                f"span ({span.start}, {span.end}) out of bounds for text of "
                f"length {text_len}"
            )
        if span.start < prev_end:
            raise InvalidSpansError(
                f"span starting at {span.start} overlaps or precedes the "
                f"previous span ending at {prev_end}"
            )
        prev_end = span.end


_TAG_RE = re.compile(r"</?([A-Za-z]+)>")


def parse_markup(tagged: str) -> AnnotatedText:
    """Parse tag markup into clean text plus typed spans.

    Tag names match case-insensitively. Reported offsets index the tagged
    input. Empty tag pairs are dropped with :class:`ZeroLengthSpanWarning`.
    """
    parts = []
    spans = []
    clean_len = 0
    cursor = 0
    open_type: Optional[HallucinationType] = None
    open_clean_start = 0
    open_offset = 0

    for match in _TAG_RE.finditer(tagged):
        chunk = tagged[cursor:match.start()]
        parts.append(chunk)
        clean_len += len(chunk)
        cursor = match.end()

        name = match.group(1).lower()
        if name not in _TAG_TO_TYPE:
            raise UnknownTagError(f"unknown tag <{match.group(1)}>", match.start())
        htype = _TAG_TO_TYPE[name]

        if match.group(0).startswith("</"):
            if open_type is None or open_type is not htype:
                raise UnbalancedTagError(
                    f"closing </{name}> does not match an open tag", match.start()
                )
            if clean_len == open_clean_start:
                warnings.warn(
                    f"dropping empty <{name}></{name}> pair at offset "
                    f"{open_offset}: it selects no characters",
                    ZeroLengthSpanWarning,
                    stacklevel=2,
                )
            else:
                spans.append(Span(open_clean_start, clean_len, htype))
            open_type = None
        else:
            if open_type is not None:
                raise NestedTagError(
                    f"<{name}> opened inside <{open_type.tag}>", match.start()
                )
            open_type = htype
            open_clean_start = clean_len
            open_offset = match.start()

    if open_type is not None:
        raise UnbalancedTagError(f"<{open_type.tag}> never closed", open_offset)

    parts.append(tagged[cursor:])
    return AnnotatedText("".join(parts), tuple(spans))


def render_markup(doc: AnnotatedText) -> str:
    """Render clean text plus spans back into tag markup.

    Exact inverse of :func:`parse_markup`: parsing the result reproduces
    ``doc``. Raises :class:`InvalidSpansError` on an inconsistent span set.
    """
    check_spans(doc.spans, len(doc.text))
    parts = []
    cursor = 0
    for span in doc.spans:
        parts.append(doc.text[cursor:span.start])
        parts.append(f"<{span.htype.tag}>")
        parts.append(doc.text[span.start:span.end])
        parts.append(f"</{span.htype.tag}>")
        cursor = span.end
    parts.append(doc.text[cursor:])
    return "".join(parts)
