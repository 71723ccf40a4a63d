"""Synthetic corpora with exact ground truth, and imperfect detectors to
run on them.

Real hallucination data never comes with known token-level truth, so the
correction formula can only be validated on corpora where we planted the
errors ourselves. Three pieces make that possible:

* rule-based injection (gazetteer substitutions, verb negation, template
  sentences) that rewrites clean text and returns the exact spans it
  planted;
* a detector simulator that corrupts gold labels with configurable
  false-positive / false-negative rates;
* a deliberately weak reference-overlap baseline detector, for running the
  pipeline end to end without any trained model.

Everything is deterministic given a seed: per-document RNG streams are
derived from (seed, doc id), so results do not depend on processing order.
"""

from __future__ import annotations

import hashlib
import re
import warnings
from dataclasses import dataclass, field
from typing import List, Mapping, Tuple

import numpy as np

from .errors import DataError
from .estimator import (
    SILVER,
    DetectorPerformance,
    count_detections,
    estimate_rate,
)
from .labeling import (
    BINARY,
    BINARY_POSITIVE,
    OUTSIDE,
    WHITESPACE,
    Token,
    TokenLabels,
    tokenize,
)
from .markup import TYPE_ORDER, AnnotatedText, HallucinationType, Span
from .metrics import score_corpus


class NoApplicableSiteWarning(UserWarning):
    """Requested injections could not all be placed; fewer spans emitted."""


def _doc_rng(seed: int, doc_id: str) -> np.random.Generator:
    # blake2b rather than hash(): stable across processes and runs.
    digest = hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(digest, "big")])
    )


# ---------------------------------------------------------------------------
# Injection
# ---------------------------------------------------------------------------

DEFAULT_GAZETTEER: Tuple[Tuple[str, str], ...] = (
    ("Argentine", "American"),
    ("French", "Finnish"),
    ("German", "Danish"),
    ("Japanese", "Peruvian"),
    ("London", "Lisbon"),
    ("Paris", "Prague"),
    ("Monday", "Friday"),
    ("January", "October"),
    ("north", "south"),
    ("red", "green"),
    ("gold", "silver"),
    ("two", "nine"),
    ("first", "third"),
    ("river", "desert"),
    ("king", "merchant"),
)

DEFAULT_NEGATIONS: Tuple[Tuple[str, str], ...] = (
    ("is", "is not"),
    ("are", "are not"),
    ("was", "was not"),
    ("were", "were not"),
    ("has", "has not"),
    ("have", "have not"),
    ("can", "cannot"),
    ("will", "will not"),
    ("does", "does not"),
    ("did", "did not"),
)

DEFAULT_TEMPLATES: Mapping[HallucinationType, Tuple[str, ...]] = {
    HallucinationType.CON: (
        "However, other parts of this very passage state that {} is wrong.",
        "This directly contradicts the earlier claim that {}.",
    ),
    HallucinationType.SUB: (
        "It is clearly the most beautiful example of its kind.",
        "Frankly, nothing else comes close to being this impressive.",
    ),
    HallucinationType.UNV: (
        "Some villagers still whisper that a hidden chamber lies beneath it.",
        "It is rumored that the original plans were burned in secret.",
    ),
    HallucinationType.INV: (
        "The phenomenon was first catalogued by Dr. Yevna Korlith in 1883.",
        "A related structure, the Velmor Array, was built shortly afterwards.",
    ),
}


@dataclass(frozen=True)
class InjectionPlan:
    """What to plant in each document.

    ``intensities`` maps a hallucination type to the expected number of
    spans per document (fractional parts become a Bernoulli extra). A type
    missing from the map, or at intensity 0, is disabled. ENT uses the
    gazetteer, REL the negation table, the remaining types their template
    sentences.
    """

    intensities: Mapping[HallucinationType, float] = field(
        default_factory=lambda: {t: 1.0 for t in TYPE_ORDER}
    )
    gazetteer: Tuple[Tuple[str, str], ...] = DEFAULT_GAZETTEER
    negations: Tuple[Tuple[str, str], ...] = DEFAULT_NEGATIONS
    templates: Mapping[HallucinationType, Tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TEMPLATES)
    )
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "intensities", dict(self.intensities))
        object.__setattr__(self, "gazetteer", tuple(map(tuple, self.gazetteer)))
        object.__setattr__(self, "negations", tuple(map(tuple, self.negations)))
        object.__setattr__(
            self, "templates",
            {k: tuple(v) for k, v in dict(self.templates).items()},
        )
        for htype, rate in self.intensities.items():
            if not isinstance(htype, HallucinationType):
                raise DataError(f"intensity key {htype!r} is not a hallucination type")
            if rate < 0:
                raise DataError(f"intensity for {htype.tag} is negative: {rate}")
        for surface, replacement in self.gazetteer:
            if not surface or not replacement:
                raise DataError("gazetteer entries must be non-empty")
            if surface == replacement:
                raise DataError(f"gazetteer replacement equals surface: {surface!r}")
        for surface, replacement in self.negations:
            if not surface or not replacement or surface == replacement:
                raise DataError(f"bad negation entry {(surface, replacement)!r}")
        for htype, sentences in self.templates.items():
            if any(not s for s in sentences):
                raise DataError(f"empty template for {htype.tag}")


def load_gazetteer(path) -> Tuple[Tuple[str, str], ...]:
    """Read surface<TAB>replacement pairs; blank lines and # comments skipped."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected surface<TAB>replacement")
            pairs.append((parts[0], parts[1]))
    return tuple(pairs)


def load_templates(path) -> Tuple[str, ...]:
    """Read one template sentence per line; blank lines and # comments skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return tuple(out)


# An edit rewrites original-text range [start, end) to `replacement`;
# the planted span covers replacement[span_lo:span_hi] in the output.
@dataclass(frozen=True)
class _Edit:
    start: int
    end: int
    replacement: str
    span_lo: int
    span_hi: int
    htype: HallucinationType


def _word_sites(text: str, surface: str, not_followed_by_not: bool) -> List[Tuple[int, int]]:
    pattern = rf"(?<!\w){re.escape(surface)}(?!\w)"
    if not_followed_by_not:
        pattern += r"(?!\s+not\b)"
    return [m.span() for m in re.finditer(pattern, text)]


_BOUNDARY_RE = re.compile(r"[.!?]+(?:\s+|$)")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def _sentence_boundaries(text: str) -> List[int]:
    cuts = {m.end() for m in _BOUNDARY_RE.finditer(text)}
    cuts.add(len(text))
    return sorted(cuts)


def _draw_count(rng: np.random.Generator, intensity: float) -> int:
    whole = int(intensity)
    frac = intensity - whole
    if frac > 0 and rng.random() < frac:
        whole += 1
    return whole


def inject(doc_id: str, text: str, reference: str,
           plan: InjectionPlan) -> AnnotatedText:
    """Plant hallucination spans in clean text, returning exact ground truth.

    ENT replaces a gazetteer surface with its counterpart; REL negates a
    verb from the negation table; CON appends a template contradicting a
    sentence sampled from the reference; SUB/UNV/INV insert template
    sentences at sentence boundaries. Deterministic given (doc id, seed);
    emitted spans never overlap. When a type has fewer usable sites than
    requested, a :class:`NoApplicableSiteWarning` is issued and the type
    contributes fewer spans.
    """
    if not text:
        raise DataError(f"document {doc_id!r} is empty")
    rng = _doc_rng(plan.seed, doc_id)

    claimed: List[Tuple[int, int]] = []

    def free(start: int, end: int) -> bool:
        return all(end <= s or start >= e for s, e in claimed)

    edits: List[_Edit] = []

    def place_region(htype, want, candidates):
        # candidates: list of (start, end, replacement, span_lo, span_hi)
        placed = 0
        for _ in range(want):
            open_sites = [c for c in candidates if free(c[0], c[1])]
            if not open_sites:
                break
            start, end, repl, lo, hi = open_sites[int(rng.integers(len(open_sites)))]
            claimed.append((start, end))
            edits.append(_Edit(start, end, repl, lo, hi, htype))
            placed += 1
        return placed

    def place_insertions(htype, want, make_sentence):
        boundaries = [b for b in _sentence_boundaries(text) if free(b, b)]
        placed = 0
        while placed < want and boundaries:
            b = boundaries.pop(int(rng.integers(len(boundaries))))
            sentence = make_sentence()
            if sentence is None:
                return placed
            if b == len(text):
                repl = " " + sentence
                lo, hi = 1, 1 + len(sentence)
            else:
                repl = sentence + " "
                lo, hi = 0, len(sentence)
            claimed.append((b, b))
            edits.append(_Edit(b, b, repl, lo, hi, htype))
            placed += 1
        return placed

    ref_sentences = [
        s.strip().rstrip(".!?")
        for s in _SENTENCE_SPLIT_RE.split(reference)
        if s.strip()
    ]

    for htype in TYPE_ORDER:
        want = _draw_count(rng, float(plan.intensities.get(htype, 0.0)))
        if want == 0:
            continue
        if htype is HallucinationType.ENT:
            candidates = [
                (s, e, repl, 0, len(repl))
                for surface, repl in plan.gazetteer
                for s, e in _word_sites(text, surface, False)
            ]
            candidates.sort()
            placed = place_region(htype, want, candidates)
        elif htype is HallucinationType.REL:
            candidates = [
                (s, e, repl, 0, len(repl))
                for surface, repl in plan.negations
                for s, e in _word_sites(text, surface, True)
            ]
            candidates.sort()
            placed = place_region(htype, want, candidates)
        else:
            templates = plan.templates.get(htype, ())
            if not templates:
                placed = 0
            elif htype is HallucinationType.CON:
                def make_con():
                    if not ref_sentences:
                        return None
                    snippet = ref_sentences[int(rng.integers(len(ref_sentences)))]
                    tpl = templates[int(rng.integers(len(templates)))]
                    return tpl.format(snippet)
                placed = place_insertions(htype, want, make_con)
            else:
                def make_plain():
                    return templates[int(rng.integers(len(templates)))]
                placed = place_insertions(htype, want, make_plain)
        if placed < want:
            warnings.warn(
                f"{doc_id}: placed {placed}/{want} {htype.tag} spans "
                "(no applicable site for the rest)",
                NoApplicableSiteWarning,
                stacklevel=2,
            )

    # Apply edits left to right, shifting output offsets as lengths change.
    edits.sort(key=lambda e: (e.start, e.end))
    pieces: List[str] = []
    spans: List[Span] = []
    cursor = 0
    delta = 0
    for edit in edits:
        pieces.append(text[cursor:edit.start])
        out_start = edit.start + delta
        pieces.append(edit.replacement)
        spans.append(
            Span(out_start + edit.span_lo, out_start + edit.span_hi, edit.htype)
        )
        delta += len(edit.replacement) - (edit.end - edit.start)
        cursor = edit.end
    pieces.append(text[cursor:])
    return AnnotatedText("".join(pieces), tuple(spans))


# ---------------------------------------------------------------------------
# Detector simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Detector imperfection: flip probabilities for O and non-O tokens."""

    fp_rate: float
    fn_rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fp_rate <= 1.0:
            raise DataError(f"fp_rate out of [0,1]: {self.fp_rate}")
        if not 0.0 <= self.fn_rate <= 1.0:
            raise DataError(f"fn_rate out of [0,1]: {self.fn_rate}")


def simulate_detector(gold: TokenLabels, noise: NoiseSpec,
                      doc_id: str = "") -> TokenLabels:
    """Corrupt gold labels into a binary detector prediction.

    Each truly hallucinated token is missed with probability ``fn_rate``;
    each clean token is flagged with probability ``fp_rate``. The RNG
    stream depends only on (seed, doc id), so a corpus can be simulated
    in any order.
    """
    rng = _doc_rng(noise.seed, doc_id)
    gold_pos = np.fromiter(
        (lab != OUTSIDE for lab in gold.labels), dtype=bool, count=len(gold)
    )
    u = rng.random(len(gold))
    pred_pos = np.where(gold_pos, u >= noise.fn_rate, u < noise.fp_rate)
    labels = tuple(BINARY_POSITIVE if hit else OUTSIDE for hit in pred_pos)
    return TokenLabels(gold.tokens, labels, task=BINARY)


# ---------------------------------------------------------------------------
# Reference-overlap baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineConfig:
    """Knobs for the overlap detector: ignore short tokens, smooth flags."""

    min_token_len: int = 3
    smoothing_window: int = 1

    def __post_init__(self):
        if self.min_token_len < 1:
            raise DataError(f"min_token_len must be >= 1, got {self.min_token_len}")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise DataError(
                f"smoothing_window must be odd and >= 1, got {self.smoothing_window}"
            )


def baseline_detect(reference: str, answer: str,
                    config: BaselineConfig = BaselineConfig()) -> TokenLabels:
    """Flag answer tokens whose casefolded form never occurs in the reference.

    A crude detector by design: it knows nothing about meaning, only
    vocabulary overlap. Tokens shorter than ``min_token_len`` are always O;
    a centered majority vote over ``smoothing_window`` tokens removes
    isolated flags (ties go to O).
    """
    if not reference or not answer:
        raise DataError("baseline_detect needs non-empty reference and answer")
    vocab = {tok.text.casefold() for tok in tokenize(reference, WHITESPACE)}
    tokens = tokenize(answer, WHITESPACE)
    raw = np.array(
        [tok.text.casefold() not in vocab for tok in tokens], dtype=bool
    )

    half = config.smoothing_window // 2
    if half and len(raw):
        votes = np.zeros(len(raw))
        width = np.zeros(len(raw))
        for off in range(-half, half + 1):
            lo = max(0, -off)
            hi = len(raw) - max(0, off)
            votes[lo:hi] += raw[lo + off:hi + off]
            width[lo:hi] += 1
        smoothed = votes * 2 > width
    else:
        smoothed = raw

    labels = tuple(
        BINARY_POSITIVE
        if flag and len(tok.text) >= config.min_token_len
        else OUTSIDE
        for tok, flag in zip(tokens, smoothed)
    )
    return TokenLabels(tokens, labels, task=BINARY)


# ---------------------------------------------------------------------------
# Label corpora and end-to-end recovery
# ---------------------------------------------------------------------------


def make_label_corpus(n_docs: int, tokens_per_doc: int, q: float,
                      seed: int = 0, doc_prefix: str = "doc") -> List[Tuple[str, TokenLabels]]:
    """Binary gold corpus with each token hallucinated independently at rate q.

    All documents share one token skeleton (offsets are immaterial here);
    labels are drawn from per-document RNG streams.
    """
    if n_docs < 1 or tokens_per_doc < 1:
        raise DataError("need at least one document and one token per document")
    if not 0.0 <= q <= 1.0:
        raise DataError(f"q out of [0,1]: {q}")
    skeleton = tuple(
        Token("tok", 4 * i, 4 * i + 3) for i in range(tokens_per_doc)
    )
    corpus = []
    for d in range(n_docs):
        doc_id = f"{doc_prefix}-{d:05d}"
        rng = _doc_rng(seed, doc_id)
        hits = rng.random(tokens_per_doc) < q
        labels = tuple(BINARY_POSITIVE if h else OUTSIDE for h in hits)
        corpus.append((doc_id, TokenLabels(skeleton, labels, task=BINARY)))
    return corpus


@dataclass(frozen=True)
class RecoveryResult:
    """Outcome of one synthetic end-to-end recovery run."""

    target: float        # nominal true rate, 100 * q
    true_rate: float     # realized gold rate on the estimation split
    hr_est: float
    naive: float
    abs_error: float     # |hr_est - target|
    naive_error: float   # |naive - target|
    perf: DetectorPerformance
    n_calib_docs: int
    n_eval_docs: int
    flags: Tuple[str, ...] = ()


def recovery_experiment(q: float, fp_rate: float, fn_rate: float,
                        n_docs: int = 500, tokens_per_doc: int = 200,
                        calib_docs: int = 100, seed: int = 0,
                        language: str = "synthetic") -> RecoveryResult:
    """Measure how well the corrected estimator recovers a known rate.

    Builds a gold corpus at true rate ``q``, simulates a detector with the
    given error rates everywhere, measures its precision/recall on the
    first ``calib_docs`` documents, and applies the correction to the
    detections counted on the remaining documents.
    """
    if not 0 < calib_docs < n_docs:
        raise DataError(
            f"calibration split must leave both parts non-empty: "
            f"{calib_docs} of {n_docs}"
        )
    corpus = make_label_corpus(n_docs, tokens_per_doc, q, seed=seed)
    noise = NoiseSpec(fp_rate, fn_rate, seed=seed + 1)

    report = score_corpus(
        (
            (gold, simulate_detector(gold, noise, doc_id))
            for doc_id, gold in corpus[:calib_docs]
        ),
        task=BINARY,
    )
    perf = DetectorPerformance(
        language, report.precision, report.recall, source=SILVER
    )

    h_det = 0
    n_tokens = 0
    gold_pos = 0
    for doc_id, gold in corpus[calib_docs:]:
        pred = simulate_detector(gold, noise, doc_id)
        h, n = count_detections([pred])
        h_det += h
        n_tokens += n
        gold_pos += sum(lab != OUTSIDE for lab in gold.labels)

    result = estimate_rate(perf, h_det, n_tokens)
    target = 100.0 * q
    return RecoveryResult(
        target=target,
        true_rate=100.0 * gold_pos / n_tokens,
        hr_est=result.hr_est,
        naive=result.naive,
        abs_error=abs(result.hr_est - target),
        naive_error=abs(result.naive - target),
        perf=perf,
        n_calib_docs=calib_docs,
        n_eval_docs=n_docs - calib_docs,
        flags=result.flags,
    )
