"""Command-line pipeline.

Stages are composed through files (JSONL between steps, CSV/JSON/PNG at the
end), so each one can be rerun or tested in isolation:

    parse -> project -> score --perf-out   (markup to measured P/R)
    inject / simulate                       (synthetic data in, noise on top)
    count -> estimate                       (detections to corrected rates)
    iaa / adjudicate                        (annotation agreement)
    analyze corr|ttest|lmm                  (analysis over a rate CSV)
    filter / validate                       (corpus prep; end-to-end check)

Exit codes: 0 success, 1 usage error, 2 data error. Every artifact gets a
``<name>.runconfig.json`` sidecar recording the exact arguments (seeds
included) that produced it.
"""

from __future__ import annotations

import argparse
import json
import sys
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .corpus import (
    ANNOTATED,
    ARTICLE,
    LABELS,
    PERF,
    QUERY,
    RESPONSE,
    RUN,
    AnnotatedRecord,
    LabelsRecord,
    filter_articles,
    load_jsonl,
    store_jsonl,
    verify_references,
    write_estimate_csv,
    write_iaa_csv,
    write_score_csv,
)
from .errors import DataError, HallurateError
from .estimator import (
    DetectionRun,
    DetectorPerformance,
    RateEstimate,
    aggregate_runs,
    count_detections,
    estimate_run,
)
from .labeling import (
    BINARY,
    CATEGORY,
    TOKENIZER_MODES,
    WHITESPACE,
    TokenLabels,
    project_labels,
    tokenize,
)
from .markup import HallucinationType, parse_markup
from .metrics import (
    adjudicate,
    cohen_kappa,
    concatenate_labels,
    pairwise_iaa,
    score_corpus,
)
from .stats import POOLED, WELCH, AnalysisFrame, fit_lmm, lr_test, pearson, ttest_two_sample
from .synth import InjectionPlan, NoiseSpec, inject, load_gazetteer, recovery_experiment, simulate_detector

DEFAULT_SEEDS = (42, 43, 44, 47, 49)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit(2) on bad arguments; the contract here is
    # exit 1 for usage problems, so surface them as exceptions instead.
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}error: {message}")


def _seed_list(text: str) -> List[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _intensity_map(text: str) -> Dict[HallucinationType, float]:
    out: Dict[HallucinationType, float] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        tag, sep, value = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected type=rate, got {part!r}")
        try:
            out[HallucinationType.from_tag(tag.strip())] = float(value)
        except (DataError, ValueError) as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hallurate",
        description="Precision/recall-corrected hallucination-rate pipeline.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("parse", help="tagged responses -> annotated JSONL")
    p.add_argument("--input", required=True, help="response JSONL")
    p.add_argument("--output", required=True, help="annotated JSONL")
    p.add_argument("--lang", default="und", help="language code to record")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("project", help="annotated JSONL -> token labels JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tokenizer", choices=TOKENIZER_MODES, default=WHITESPACE)
    p.add_argument("--task", choices=(BINARY, CATEGORY), default=CATEGORY)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("score", help="score predicted labels against gold")
    p.add_argument("--input", required=True, help="predicted labels JSONL")
    p.add_argument("--gold", required=True, help="gold labels JSONL")
    p.add_argument("--output", required=True, help="score CSV")
    p.add_argument("--task", choices=(BINARY, CATEGORY), default=BINARY)
    p.add_argument("--lang", default="und")
    p.add_argument("--source", choices=("silver", "gold"), default="silver")
    p.add_argument("--perf-out", help="also write a perf JSONL record")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("iaa", help="pairwise agreement across annotators")
    p.add_argument("--input", required=True, action="append",
                   help="labels JSONL, once per annotator")
    p.add_argument("--output", required=True, help="agreement CSV")
    p.add_argument("--task", choices=(BINARY, CATEGORY), default=CATEGORY)
    p.add_argument("--lang", default="und")
    p.set_defaults(func=_cmd_iaa)

    p = sub.add_parser("adjudicate",
                       help="screen annotators and pick the best vs silver")
    p.add_argument("--input", required=True, action="append",
                   help="labels JSONL, once per annotator")
    p.add_argument("--silver", required=True, help="silver labels JSONL")
    p.add_argument("--output", required=True, help="JSON report")
    p.add_argument("--threshold", type=float, default=0.40,
                   help="minimum observed agreement (default 0.40)")
    p.set_defaults(func=_cmd_adjudicate)

    p = sub.add_parser("inject", help="plant hallucination spans in articles")
    p.add_argument("--input", required=True, help="article JSONL")
    p.add_argument("--output", required=True, help="annotated JSONL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intensities", type=_intensity_map, default=None,
                   help="per-type rates, e.g. entity=1,relation=0.5")
    p.add_argument("--gazetteer", help="surface<TAB>replacement file")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("simulate", help="corrupt gold labels into detector output")
    p.add_argument("--input", required=True, help="gold labels JSONL")
    p.add_argument("--output", required=True, help="predicted labels JSONL")
    p.add_argument("--fp", type=float, required=True, help="false-positive rate")
    p.add_argument("--fn", type=float, required=True, help="false-negative rate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("count", help="count detections into a run record")
    p.add_argument("--input", required=True, help="predicted labels JSONL")
    p.add_argument("--output", required=True, help="run JSONL (one record)")
    p.add_argument("--lang", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--seed", type=int, default=42, help="generation seed")
    p.add_argument("--detector-instance", default="d0")
    p.set_defaults(func=_cmd_count)

    p = sub.add_parser("estimate", help="corrected rates from runs + perf")
    p.add_argument("--input", required=True, help="run JSONL")
    p.add_argument("--perf", required=True, help="perf JSONL")
    p.add_argument("--output", required=True, help="rate matrix CSV")
    p.add_argument("--seeds", type=_seed_list, default=list(DEFAULT_SEEDS),
                   help="generation seeds to keep (default 42,43,44,47,49)")
    p.add_argument("--rates-out", help="also write aggregated rates JSONL")
    p.add_argument("--heatmap", help="also render a rate heatmap PNG")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("analyze", help="statistics over a rate CSV")
    asub = p.add_subparsers(dest="analysis", metavar="kind")

    a = asub.add_parser("corr", help="Pearson correlation between two columns")
    a.add_argument("--input", required=True, help="analysis CSV")
    a.add_argument("--x", required=True)
    a.add_argument("--y", default="rate")
    a.add_argument("--output", help="JSON report")
    a.add_argument("--plot", help="scatter PNG")
    a.set_defaults(func=_cmd_analyze_corr)

    a = asub.add_parser("ttest", help="two-sample t-test between groups")
    a.add_argument("--input", required=True)
    a.add_argument("--by", default="size_class", help="grouping column")
    a.add_argument("--value", default="rate", help="value column")
    a.add_argument("--variant", choices=(POOLED, WELCH), default=POOLED)
    a.add_argument("--output", help="JSON report")
    a.set_defaults(func=_cmd_analyze_ttest)

    a = asub.add_parser("lmm", help="random-intercept mixed model")
    a.add_argument("--input", required=True)
    a.add_argument("--fixed", required=True,
                   help="comma-separated terms, e.g. "
                        "size_class,n_supported_langs,size_class:n_supported_langs")
    a.add_argument("--reduced",
                   help="terms of a nested model to test against (may be empty)")
    a.add_argument("--group-by", default="language")
    a.add_argument("--output", help="JSON report")
    a.add_argument("--plot", help="interaction-line PNG")
    a.set_defaults(func=_cmd_analyze_lmm)

    p = sub.add_parser("filter", help="apply article quality thresholds")
    p.add_argument("--input", required=True, help="article JSONL")
    p.add_argument("--output", required=True, help="kept articles JSONL")
    p.add_argument("--min-len", type=int, default=2000)
    p.add_argument("--min-depth", type=float, default=5.0)
    p.add_argument("--queries", help="query JSONL for referential checks")
    p.add_argument("--responses", help="response JSONL for referential checks")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("validate", help="synthetic end-to-end recovery check")
    p.add_argument("--q", type=float, default=0.12, help="true token rate")
    p.add_argument("--fp", type=float, default=0.05)
    p.add_argument("--fn", type=float, default=0.25)
    p.add_argument("--docs", type=int, default=500)
    p.add_argument("--tokens", type=int, default=200, help="tokens per document")
    p.add_argument("--calib", type=int, default=100,
                   help="documents used to measure P/R")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="JSON report")
    p.set_defaults(func=_cmd_validate)

    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and run one subcommand, returning the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args.func(args)
    except HallurateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(dispatch(argv))


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _write_runconfig(args, outputs) -> None:
    arguments = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func",) or callable(value):
            continue
        if isinstance(value, dict):
            value = {getattr(k, "tag", str(k)): v for k, v in value.items()}
        arguments[key] = value
    payload = {
        "subcommand": " ".join(
            part for part in (args.command, getattr(args, "analysis", None)) if part
        ),
        "arguments": arguments,
        "outputs": [str(o) for o in outputs],
    }
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    for out in outputs:
        Path(f"{out}.runconfig.json").write_text(text, encoding="utf-8")


def _write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def _labels_map(path) -> Dict[str, TokenLabels]:
    out: Dict[str, TokenLabels] = {}
    for rec in load_jsonl(path, LABELS):
        if rec.id in out:
            raise DataError(f"{path}: duplicate document id {rec.id!r}")
        out[rec.id] = rec.labels
    if not out:
        raise DataError(f"{path}: no label records")
    return out


def _aligned_label_lists(paths) -> tuple:
    """Load several label files and align their documents by id."""
    maps = [_labels_map(path) for path in paths]
    names = [Path(path).stem for path in paths]
    ids = [i for i in maps[0] if all(i in m for m in maps)]
    if not ids:
        raise DataError("no common document ids across label files")
    return names, [[m[i] for i in ids] for m in maps]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_parse(args) -> None:
    records = []
    for resp in load_jsonl(args.input, RESPONSE):
        tagged = resp.answer_markup if resp.answer_markup is not None else resp.answer
        records.append(AnnotatedRecord(resp.id, args.lang, parse_markup(tagged)))
    count = store_jsonl(records, args.output)
    _write_runconfig(args, [args.output])
    print(f"parsed {count} responses -> {args.output}")


def _cmd_project(args) -> None:
    records = []
    for rec in load_jsonl(args.input, ANNOTATED):
        tokens = tokenize(rec.doc.text, args.tokenizer)
        records.append(
            LabelsRecord(rec.id, project_labels(rec.doc, tokens, task=args.task))
        )
    count = store_jsonl(records, args.output)
    _write_runconfig(args, [args.output])
    print(f"projected {count} documents -> {args.output}")


def _cmd_score(args) -> None:
    gold = _labels_map(args.gold)
    pred = _labels_map(args.input)
    odd = sorted(set(gold) ^ set(pred))
    if odd:
        raise DataError(f"gold/pred ids differ (e.g. {odd[:5]})")
    report = score_corpus(((gold[i], pred[i]) for i in gold), task=args.task)
    write_score_csv(args.output, [(args.lang, args.source, report)])
    outputs = [args.output]
    if args.perf_out:
        perf = DetectorPerformance(
            args.lang, report.precision, report.recall,
            source=args.source, task=args.task,
        )
        store_jsonl([perf], args.perf_out)
        outputs.append(args.perf_out)
    _write_runconfig(args, outputs)
    print(
        f"{args.lang} {args.task}: P={report.precision:.4f} "
        f"R={report.recall:.4f} F1={report.f1:.4f} ({len(gold)} docs)"
    )


def _cmd_iaa(args) -> None:
    if len(args.input) < 2:
        raise DataError("iaa needs at least two --input files")
    names, per_annotator = _aligned_label_lists(args.input)
    streams = [concatenate_labels(docs) for docs in per_annotator]
    rows = []
    for (name_a, sa), (name_b, sb) in combinations(zip(names, streams), 2):
        rows.append((name_a, name_b, cohen_kappa(sa, sb, mode=args.task)))
    mean = pairwise_iaa(per_annotator, mode=args.task)
    write_iaa_csv(args.output, args.lang, args.task, rows, mean)
    _write_runconfig(args, [args.output])
    print(f"mean pairwise kappa over {len(names)} annotators: {mean:.4f}")


def _cmd_adjudicate(args) -> None:
    names, per_annotator = _aligned_label_lists(list(args.input) + [args.silver])
    silver_stream = concatenate_labels(per_annotator[-1])
    annotators = {
        name: concatenate_labels(docs)
        for name, docs in zip(names[:-1], per_annotator[:-1])
    }
    result = adjudicate(annotators, silver_stream, screen_threshold=args.threshold)
    payload = {
        "chosen": result.chosen,
        "flagged": list(result.flagged),
        "threshold": args.threshold,
        "agreements": {
            name: {
                "kappa": agr.kappa,
                "observed_agreement": agr.observed_agreement,
                "expected_agreement": agr.expected_agreement,
                "mode": agr.mode,
            }
            for name, agr in sorted(result.agreements.items())
        },
    }
    _write_json(args.output, payload)
    _write_runconfig(args, [args.output])
    print(f"chosen annotator: {result.chosen} "
          f"(kappa {result.agreements[result.chosen].kappa:.4f})")


def _cmd_inject(args) -> None:
    plan_kwargs = {"seed": args.seed}
    if args.intensities is not None:
        plan_kwargs["intensities"] = args.intensities
    if args.gazetteer:
        plan_kwargs["gazetteer"] = load_gazetteer(args.gazetteer)
    plan = InjectionPlan(**plan_kwargs)
    records = []
    n_spans = 0
    for art in load_jsonl(args.input, ARTICLE):
        doc = inject(art.id, art.text, art.text, plan)
        n_spans += len(doc.spans)
        records.append(AnnotatedRecord(art.id, art.language, doc))
    count = store_jsonl(records, args.output)
    _write_runconfig(args, [args.output])
    print(f"injected {n_spans} spans into {count} articles -> {args.output}")


def _cmd_simulate(args) -> None:
    noise = NoiseSpec(args.fp, args.fn, seed=args.seed)
    records = [
        LabelsRecord(rec.id, simulate_detector(rec.labels, noise, rec.id))
        for rec in load_jsonl(args.input, LABELS)
    ]
    count = store_jsonl(records, args.output)
    _write_runconfig(args, [args.output])
    print(f"simulated detector (fp={args.fp}, fn={args.fn}) on {count} documents")


def _cmd_count(args) -> None:
    labels = [rec.labels for rec in load_jsonl(args.input, LABELS)]
    h_det, n = count_detections(labels)
    run = DetectionRun(
        args.lang, args.model_id, args.seed, args.detector_instance, h_det, n
    )
    store_jsonl([run], args.output)
    _write_runconfig(args, [args.output])
    print(f"{args.lang}/{args.model_id} seed {args.seed}: "
          f"H_det={h_det} of N={n} tokens")


def _cmd_estimate(args) -> None:
    perfs: Dict[str, DetectorPerformance] = {}
    for perf in load_jsonl(args.perf, PERF):
        if perf.language in perfs:
            raise DataError(f"{args.perf}: duplicate perf for {perf.language!r}")
        perfs[perf.language] = perf
    wanted = set(args.seeds)
    runs = list(load_jsonl(args.input, RUN))
    selected = [r for r in runs if r.seed in wanted]
    if not selected:
        raise DataError(f"no runs with seeds {sorted(wanted)} in {args.input}")
    estimates = []
    for run in selected:
        if run.language not in perfs:
            raise DataError(f"no perf record for language {run.language!r}")
        estimates.append(estimate_run(perfs[run.language], run))
    rates = aggregate_runs(estimates)
    write_estimate_csv(args.output, rates)
    outputs = [args.output]
    if args.rates_out:
        store_jsonl(rates, args.rates_out)
        outputs.append(args.rates_out)
    if args.heatmap:
        _plot_heatmap(rates, args.heatmap)
        outputs.append(args.heatmap)
    _write_runconfig(args, outputs)
    skipped = len(runs) - len(selected)
    note = f" ({skipped} runs outside seed set skipped)" if skipped else ""
    print(f"estimated {len(rates)} (language, model) cells "
          f"from {len(selected)} runs{note}")


def _cmd_analyze_corr(args) -> None:
    frame = AnalysisFrame.from_csv(args.input)
    x = frame.numeric(args.x)
    y = frame.numeric(args.y)
    res = pearson(x, y)
    payload = {
        "kind": res.kind, "x": args.x, "y": args.y, "n": len(frame),
        "r": res.statistic, "df": res.df, "p_value": res.p_value,
    }
    outputs = []
    if args.output:
        _write_json(args.output, payload)
        outputs.append(args.output)
    if args.plot:
        _plot_scatter(x, y, args.x, args.y, args.plot)
        outputs.append(args.plot)
    if outputs:
        _write_runconfig(args, outputs)
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _cmd_analyze_ttest(args) -> None:
    frame = AnalysisFrame.from_csv(args.input)
    groups = sorted(set(frame.column(args.by)))
    if len(groups) != 2:
        raise DataError(
            f"column {args.by!r} must have exactly 2 groups, got {groups}"
        )
    values = frame.numeric(args.value)
    keys = frame.column(args.by)
    a = [v for v, k in zip(values, keys) if k == groups[0]]
    b = [v for v, k in zip(values, keys) if k == groups[1]]
    res = ttest_two_sample(a, b, variant=args.variant)
    payload = {
        "kind": res.kind, "variant": args.variant, "value": args.value,
        "group_a": groups[0], "group_b": groups[1],
        "n_a": len(a), "n_b": len(b),
        "statistic": res.statistic, "df": res.df, "p_value": res.p_value,
    }
    outputs = []
    if args.output:
        _write_json(args.output, payload)
        outputs.append(args.output)
    if outputs:
        _write_runconfig(args, outputs)
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _split_terms(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _fit_payload(fit) -> dict:
    return {
        "betas": dict(fit.betas),
        "sigma2": fit.sigma2,
        "sigma_b2": fit.sigma_b2,
        "variance_ratio": fit.variance_ratio,
        "loglik": fit.loglik,
        "n": fit.n,
        "p": fit.p,
        "group_by": fit.group_by,
        "flags": list(fit.flags),
    }


def _cmd_analyze_lmm(args) -> None:
    frame = AnalysisFrame.from_csv(args.input)
    fixed = _split_terms(args.fixed)
    full = fit_lmm(frame, fixed, group_by=args.group_by)
    payload = {"kind": "lmm", "fixed": fixed, "fit": _fit_payload(full)}
    if args.reduced is not None:
        reduced_terms = _split_terms(args.reduced)
        reduced = fit_lmm(frame, reduced_terms, group_by=args.group_by)
        lr = lr_test(full, reduced)
        payload["reduced"] = {"fixed": reduced_terms, "fit": _fit_payload(reduced)}
        payload["lr_test"] = {
            "statistic": lr.statistic, "df": lr.df, "p_value": lr.p_value,
        }
    outputs = []
    if args.output:
        _write_json(args.output, payload)
        outputs.append(args.output)
    if args.plot:
        _plot_interaction(frame, full, args.plot)
        outputs.append(args.plot)
    if outputs:
        _write_runconfig(args, outputs)
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _cmd_filter(args) -> None:
    articles = list(load_jsonl(args.input, ARTICLE))
    kept, report = filter_articles(articles, args.min_len, args.min_depth)
    count = store_jsonl(kept, args.output)
    _write_runconfig(args, [args.output])
    print(
        f"kept {report.kept} of {report.total} articles "
        f"({report.dropped_short} short, {report.dropped_shallow} shallow)"
    )
    if args.queries:
        queries = list(load_jsonl(args.queries, QUERY))
        responses = (
            list(load_jsonl(args.responses, RESPONSE)) if args.responses else []
        )
        ref = verify_references(kept, queries, responses)
        for qid in ref.dangling_queries:
            print(f"dangling query {qid}: article not kept", file=sys.stderr)
        for rid in ref.dangling_responses:
            print(f"dangling response {rid}: query missing", file=sys.stderr)
        for aid in ref.one_query_articles:
            print(f"note: article {aid} has only one query", file=sys.stderr)
        if not ref.ok:
            raise DataError(
                f"{len(ref.dangling_queries)} dangling queries, "
                f"{len(ref.dangling_responses)} dangling responses"
            )
    assert count == report.kept


def _cmd_validate(args) -> None:
    result = recovery_experiment(
        args.q, args.fp, args.fn,
        n_docs=args.docs, tokens_per_doc=args.tokens,
        calib_docs=args.calib, seed=args.seed,
    )
    print(f"target rate      : {result.target:.2f}%")
    print(f"recovered HR_est : {result.hr_est:.2f}%  "
          f"(abs error {result.abs_error:.2f} pp)")
    print(f"naive rate       : {result.naive:.2f}%  "
          f"(abs error {result.naive_error:.2f} pp)")
    print(f"measured P={result.perf.precision:.4f} R={result.perf.recall:.4f} "
          f"on {result.n_calib_docs} calibration docs; "
          f"estimated on {result.n_eval_docs} docs")
    if args.output:
        _write_json(args.output, {
            "target": result.target,
            "true_rate": result.true_rate,
            "hr_est": result.hr_est,
            "naive": result.naive,
            "abs_error": result.abs_error,
            "naive_error": result.naive_error,
            "precision": result.perf.precision,
            "recall": result.perf.recall,
            "n_calib_docs": result.n_calib_docs,
            "n_eval_docs": result.n_eval_docs,
            "flags": list(result.flags),
        })
        _write_runconfig(args, [args.output])


# ---------------------------------------------------------------------------
# Plots (matplotlib loaded only when asked for)
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_heatmap(rates: Sequence[RateEstimate], path) -> None:
    import numpy as np

    plt = _pyplot()
    languages = sorted({r.language for r in rates})
    models = sorted({r.model_id for r in rates})
    grid = np.full((len(languages), len(models)), np.nan)
    cells = {(r.language, r.model_id): r for r in rates}
    for i, lang in enumerate(languages):
        for j, model in enumerate(models):
            est = cells.get((lang, model))
            if est is not None:
                grid[i, j] = est.mean
    fig, ax = plt.subplots(
        figsize=(1.8 + 1.1 * len(models), 1.2 + 0.5 * len(languages))
    )
    im = ax.imshow(grid, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(models)), models, rotation=30, ha="right")
    ax.set_yticks(range(len(languages)), languages)
    for i in range(len(languages)):
        for j in range(len(models)):
            est = cells.get((languages[i], models[j]))
            if est is not None:
                ax.text(j, i, f"{est.mean:.1f}±{est.std:.1f}",
                        ha="center", va="center", fontsize=8, color="white")
    ax.set_title("Estimated hallucination rate (%)")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_scatter(x, y, xlabel: str, ylabel: str, path) -> None:
    import numpy as np

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(x, y, s=25)
    slope, intercept = np.polyfit(x, y, 1)
    xs = np.linspace(min(x), max(x), 50)
    ax.plot(xs, slope * xs + intercept, lw=1, color="tab:red")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_interaction(frame: AnalysisFrame, fit, path) -> None:
    """Observed rates vs. the first continuous predictor, split by size."""
    import numpy as np

    plt = _pyplot()
    continuous = next(
        (name for name in fit.betas
         if name in ("n_supported_langs", "mean_response_len")),
        None,
    )
    xs = (
        frame.numeric(continuous)
        if continuous is not None
        else np.arange(len(frame), dtype=float)
    )
    sizes = frame.column("size_class")
    rates = frame.numeric("rate")
    fig, ax = plt.subplots(figsize=(5, 4))
    for size, color in (("small", "tab:blue"), ("large", "tab:orange")):
        sel = [i for i, s in enumerate(sizes) if s == size]
        if not sel:
            continue
        sx, sy = xs[sel], rates[sel]
        ax.scatter(sx, sy, s=20, color=color, label=size, alpha=0.7)
        if len(sel) >= 2 and len(set(sx.tolist())) >= 2:
            slope, intercept = np.polyfit(sx, sy, 1)
            grid = np.linspace(sx.min(), sx.max(), 50)
            ax.plot(grid, slope * grid + intercept, color=color, lw=1)
    ax.set_xlabel(continuous or "row")
    ax.set_ylabel("rate")
    ax.legend(title="size_class")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


if __name__ == "__main__":
    main()
