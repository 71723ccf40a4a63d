import warnings

import numpy as np
import pytest

from hallurate.errors import DataError
from hallurate.estimator import count_detections
from hallurate.labeling import (
    BINARY_POSITIVE,
    OUTSIDE,
    WHITESPACE,
    project_labels,
    tokenize,
)
from hallurate.markup import HallucinationType, TYPE_ORDER
from hallurate.metrics import score_corpus
from hallurate.synth import (
    BaselineConfig,
    DEFAULT_GAZETTEER,
    DEFAULT_TEMPLATES,
    InjectionPlan,
    NoApplicableSiteWarning,
    NoiseSpec,
    baseline_detect,
    inject,
    load_gazetteer,
    load_templates,
    make_label_corpus,
    recovery_experiment,
    simulate_detector,
)

ENT = HallucinationType.ENT
REL = HallucinationType.REL
CON = HallucinationType.CON
SUB = HallucinationType.SUB
UNV = HallucinationType.UNV
INV = HallucinationType.INV

RICH_TEXT = (
    "The old bridge crosses the river near the town. It was the first "
    "structure of its kind. The builders were Argentine engineers. "
    "Records show the king paid for it in gold. Two arches survive."
)
RICH_REF = (
    "The bridge is medieval. Its arches are sandstone. "
    "The crossing was busy for centuries."
)


class TestInjectionPlan:
    def test_negative_intensity_rejected(self):
        with pytest.raises(DataError):
            InjectionPlan(intensities={ENT: -0.5})

    def test_identity_replacement_rejected(self):
        with pytest.raises(DataError):
            InjectionPlan(gazetteer=(("same", "same"),))

    def test_non_type_key_rejected(self):
        with pytest.raises(DataError):
            InjectionPlan(intensities={"entity": 1.0})

    def test_defaults_cover_all_types(self):
        plan = InjectionPlan()
        assert set(plan.intensities) == set(TYPE_ORDER)


class TestInject:
    def test_gazetteer_swap(self):
        plan = InjectionPlan(
            intensities={ENT: 1.0}, gazetteer=(("Argentine", "American"),)
        )
        doc = inject("d1", "Messi is an Argentine soccer player.", "", plan)
        assert doc.text == "Messi is an American soccer player."
        (span,) = doc.spans
        assert (span.start, span.end, span.htype) == (12, 20, ENT)
        assert doc.text[span.start:span.end] == "American"

    def test_negation_swap(self):
        plan = InjectionPlan(intensities={REL: 1.0}, negations=(("is", "is not"),))
        doc = inject("d1", "The tower is tall.", "", plan)
        assert doc.text == "The tower is not tall."
        (span,) = doc.spans
        assert doc.text[span.start:span.end] == "is not"
        assert span.htype is REL

    def test_negation_skips_already_negated(self):
        plan = InjectionPlan(intensities={REL: 1.0}, negations=(("is", "is not"),))
        with pytest.warns(NoApplicableSiteWarning):
            doc = inject("d1", "The tower is not tall.", "", plan)
        assert doc.text == "The tower is not tall."
        assert doc.spans == ()

    def test_zero_intensities_noop(self):
        plan = InjectionPlan(intensities={})
        doc = inject("d1", RICH_TEXT, RICH_REF, plan)
        assert doc.text == RICH_TEXT
        assert doc.spans == ()

    def test_deterministic_per_doc(self):
        plan = InjectionPlan(seed=7)
        a = inject("doc-A", RICH_TEXT, RICH_REF, plan)
        b = inject("doc-A", RICH_TEXT, RICH_REF, plan)
        assert a == b

    def test_all_types_placed_on_rich_text(self):
        doc = inject("d1", RICH_TEXT, RICH_REF, InjectionPlan(seed=3))
        assert {s.htype for s in doc.spans} == set(TYPE_ORDER)
        # AnnotatedText construction already enforces sorted, non-overlapping,
        # in-bounds spans; check the surfaces are what the plan planted
        for span in doc.spans:
            covered = doc.text[span.start:span.end]
            if span.htype is ENT:
                assert covered in {repl for _, repl in DEFAULT_GAZETTEER}
            elif span.htype is REL:
                assert covered.endswith("not") or covered == "cannot"

    def test_insertion_at_document_end(self):
        plan = InjectionPlan(intensities={SUB: 1.0})
        text = "A river runs north."
        doc = inject("d9", text, "", plan)
        (span,) = doc.spans
        assert doc.text.startswith(text + " ")
        assert doc.text[span.start:span.end] in DEFAULT_TEMPLATES[SUB]

    def test_contradiction_quotes_reference(self):
        plan = InjectionPlan(intensities={CON: 1.0})
        reference = "The sky is blue. Water is wet."
        doc = inject("d2", "Stars shine at night.", reference, plan)
        (span,) = doc.spans
        covered = doc.text[span.start:span.end]
        assert any(
            covered == tpl.format(snippet)
            for tpl in DEFAULT_TEMPLATES[CON]
            for snippet in ("The sky is blue", "Water is wet")
        )

    def test_contradiction_without_reference_warns(self):
        plan = InjectionPlan(intensities={CON: 1.0})
        with pytest.warns(NoApplicableSiteWarning):
            doc = inject("d2", "Stars shine at night.", "", plan)
        assert doc.spans == ()

    def test_site_exhaustion_warns_but_keeps_placed(self):
        plan = InjectionPlan(
            intensities={ENT: 2.0}, gazetteer=(("Argentine", "American"),)
        )
        with pytest.warns(NoApplicableSiteWarning):
            doc = inject("d1", "An Argentine writer came by.", "", plan)
        assert len(doc.spans) == 1

    def test_fractional_intensity_rate(self):
        plan = InjectionPlan(
            intensities={ENT: 0.5}, gazetteer=(("Argentine", "American"),)
        )
        hits = sum(
            bool(inject(f"d{i}", "An Argentine writer.", "", plan).spans)
            for i in range(400)
        )
        # Bernoulli(0.5) over 400 docs: 3 sigma is exactly 30
        assert 170 <= hits <= 230

    def test_empty_document_rejected(self):
        with pytest.raises(DataError):
            inject("d1", "", "", InjectionPlan())

    def test_projected_gold_matches_span_mass(self):
        # the planted spans are exact ground truth for label projection
        doc = inject("d4", RICH_TEXT, RICH_REF, InjectionPlan(seed=1))
        labels = project_labels(doc, tokenize(doc.text, WHITESPACE))
        assert any(lab != OUTSIDE for lab in labels.labels)
        for tok, lab in zip(labels.tokens, labels.labels):
            overlaps = any(
                min(tok.end, s.end) > max(tok.start, s.start) for s in doc.spans
            )
            assert (lab != OUTSIDE) == overlaps


class TestLexiconFiles:
    def test_gazetteer_round_trip(self, tmp_path):
        path = tmp_path / "gaz.tsv"
        path.write_text(
            "# surface\treplacement\n\nParis\tPrague\nred\tgreen\n",
            encoding="utf-8",
        )
        assert load_gazetteer(path) == (("Paris", "Prague"), ("red", "green"))

    def test_gazetteer_bad_line(self, tmp_path):
        path = tmp_path / "gaz.tsv"
        path.write_text("Paris Prague\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_gazetteer(path)

    def test_templates_file(self, tmp_path):
        path = tmp_path / "tpl.txt"
        path.write_text("# comment\nFirst sentence.\n\nSecond one.\n", encoding="utf-8")
        assert load_templates(path) == ("First sentence.", "Second one.")


class TestSimulateDetector:
    def test_noise_spec_validation(self):
        with pytest.raises(DataError):
            NoiseSpec(fp_rate=1.5, fn_rate=0.0)
        with pytest.raises(DataError):
            NoiseSpec(fp_rate=0.0, fn_rate=-0.1)

    def test_perfect_detector_is_identity(self):
        (_, gold), = make_label_corpus(1, 50, 0.3, seed=4)
        pred = simulate_detector(gold, NoiseSpec(0.0, 0.0), "doc")
        assert pred.labels == gold.labels

    def test_certain_false_positives(self):
        (_, gold), = make_label_corpus(1, 30, 0.0, seed=4)
        assert all(lab == OUTSIDE for lab in gold.labels)
        pred = simulate_detector(gold, NoiseSpec(1.0, 0.0), "doc")
        assert all(lab == BINARY_POSITIVE for lab in pred.labels)

    def test_certain_false_negatives(self):
        (_, gold), = make_label_corpus(1, 30, 1.0, seed=4)
        pred = simulate_detector(gold, NoiseSpec(0.0, 1.0), "doc")
        assert all(lab == OUTSIDE for lab in pred.labels)

    def test_doc_order_independent(self):
        corpus = make_label_corpus(3, 40, 0.2, seed=9)
        noise = NoiseSpec(0.1, 0.2, seed=5)
        straight = {d: simulate_detector(g, noise, d) for d, g in corpus}
        for doc_id, gold in reversed(corpus):
            assert simulate_detector(gold, noise, doc_id) == straight[doc_id]

    def test_flip_rates_calibrated(self):
        # one long document: binomial counts must sit within 3 sigma
        n = 100_000
        (_, gold), = make_label_corpus(1, n, 0.4, seed=2)
        noise = NoiseSpec(fp_rate=0.05, fn_rate=0.25, seed=3)
        pred = simulate_detector(gold, noise, "big")
        fp = fn = n_pos = n_neg = 0
        for g, p in zip(gold.labels, pred.labels):
            if g == OUTSIDE:
                n_neg += 1
                fp += p != OUTSIDE
            else:
                n_pos += 1
                fn += p == OUTSIDE
        for count, total, rate in ((fp, n_neg, 0.05), (fn, n_pos, 0.25)):
            sigma = (total * rate * (1 - rate)) ** 0.5
            assert abs(count - total * rate) <= 3 * sigma

    def test_precision_recall_follow_closed_form(self):
        # P -> q(1-fn) / (q(1-fn) + (1-q)fp), R -> 1-fn
        q, fp, fn = 0.3, 0.08, 0.2
        corpus = make_label_corpus(60, 500, q, seed=8)
        noise = NoiseSpec(fp, fn, seed=1)
        report = score_corpus(
            (g, simulate_detector(g, noise, d)) for d, g in corpus
        )
        p_want = q * (1 - fn) / (q * (1 - fn) + (1 - q) * fp)
        assert report.recall == pytest.approx(1 - fn, abs=0.02)
        assert report.precision == pytest.approx(p_want, abs=0.02)


class TestBaseline:
    def test_identical_answer_all_outside(self):
        ref = "the sky is blue today"
        labels = baseline_detect(ref, "the sky is blue today")
        assert all(lab == OUTSIDE for lab in labels.labels)

    def test_novel_word_flagged(self):
        labels = baseline_detect("the sky is blue", "the sky is green")
        flagged = [
            tok.text for tok, lab in zip(labels.tokens, labels.labels)
            if lab == BINARY_POSITIVE
        ]
        assert flagged == ["green"]

    def test_case_insensitive_overlap(self):
        labels = baseline_detect("The Sky", "the sky")
        assert all(lab == OUTSIDE for lab in labels.labels)

    def test_short_tokens_never_flagged(self):
        labels = baseline_detect("alpha beta", "xy gammaword")
        by_text = dict(zip((t.text for t in labels.tokens), labels.labels))
        assert by_text["xy"] == OUTSIDE
        assert by_text["gammaword"] == BINARY_POSITIVE

    def test_smoothing_removes_isolated_flag(self):
        ref = "aaa bbb ccc ddd eee"
        ans = "aaa bbb zzz ddd eee"
        cfg = BaselineConfig(smoothing_window=3)
        labels = baseline_detect(ref, ans, cfg)
        assert all(lab == OUTSIDE for lab in labels.labels)
        # without smoothing the novel token is caught
        raw = baseline_detect(ref, ans, BaselineConfig(smoothing_window=1))
        assert sum(lab == BINARY_POSITIVE for lab in raw.labels) == 1

    def test_smoothing_keeps_runs(self):
        ref = "aaa bbb ccc ddd eee"
        ans = "aaa qqq zzz www eee"
        cfg = BaselineConfig(smoothing_window=3)
        labels = baseline_detect(ref, ans, cfg)
        assert sum(lab == BINARY_POSITIVE for lab in labels.labels) == 3

    def test_window_must_be_odd(self):
        with pytest.raises(DataError):
            BaselineConfig(smoothing_window=2)

    def test_empty_inputs_rejected(self):
        with pytest.raises(DataError):
            baseline_detect("", "something")
        with pytest.raises(DataError):
            baseline_detect("something", "")


class TestLabelCorpus:
    def test_shape_and_ids(self):
        corpus = make_label_corpus(3, 10, 0.5, seed=1, doc_prefix="x")
        assert [d for d, _ in corpus] == ["x-00000", "x-00001", "x-00002"]
        assert all(len(g) == 10 for _, g in corpus)

    def test_rate_zero_and_one(self):
        (_, zero), = make_label_corpus(1, 20, 0.0)
        (_, one), = make_label_corpus(1, 20, 1.0)
        assert all(lab == OUTSIDE for lab in zero.labels)
        assert all(lab == BINARY_POSITIVE for lab in one.labels)

    def test_global_rate_near_q(self):
        corpus = make_label_corpus(50, 200, 0.12, seed=6)
        h, n = count_detections([g for _, g in corpus])
        sigma = (n * 0.12 * 0.88) ** 0.5
        assert abs(h - n * 0.12) <= 3 * sigma

    def test_validation(self):
        with pytest.raises(DataError):
            make_label_corpus(0, 10, 0.5)
        with pytest.raises(DataError):
            make_label_corpus(1, 10, 1.5)


class TestRecovery:
    def test_correction_beats_naive_here(self):
        res = recovery_experiment(
            q=0.12, fp_rate=0.05, fn_rate=0.25,
            n_docs=500, tokens_per_doc=200, calib_docs=100, seed=0,
        )
        assert res.target == pytest.approx(12.0)
        assert res.n_calib_docs == 100
        assert res.n_eval_docs == 400
        assert res.abs_error <= 1.5
        assert res.abs_error < res.naive_error
        # naive rate is biased down here: fn kills more than fp adds
        assert res.naive != res.hr_est

    def test_perfect_detector_recovers_exactly(self):
        res = recovery_experiment(
            q=0.2, fp_rate=0.0, fn_rate=0.0,
            n_docs=40, tokens_per_doc=100, calib_docs=10, seed=3,
        )
        assert res.hr_est == pytest.approx(res.true_rate, abs=1e-9)
        assert res.perf.precision == 1.0
        assert res.perf.recall == 1.0

    def test_split_validation(self):
        with pytest.raises(DataError):
            recovery_experiment(0.1, 0.05, 0.2, n_docs=10, calib_docs=10)
