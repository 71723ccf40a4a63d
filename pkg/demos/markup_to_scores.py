# From inline markup to token-level detector scores, step by step.

from hallurate.markup import parse_markup, render_markup
from hallurate.labeling import BINARY, CATEGORY, WHITESPACE, project_labels, tokenize
from hallurate.metrics import cohen_kappa, score_tokens, span_stats

raw = ("The <entity>Eiffel Tower</entity> was finished in "
       "<entity>1887</entity> and is <subjective>the most beautiful "
       "structure in Europe</subjective>. It stands on the "
       "<invented>Champ-de-Lune</invented>.")

doc = parse_markup(raw)
print("clean text:")
print(" ", doc.text)
print("spans:")
for span in doc.spans:
    print("  %-4s [%3d, %3d) %r" % (span.htype.name, span.start, span.end,
                                    doc.text[span.start:span.end]))

# render is the exact inverse of parse
assert render_markup(doc) == raw

table = span_stats({"en": [doc]})
print()
print("span counts:", table["en"])

# Project the character spans onto whitespace tokens. Any token that
# overlaps a span by at least one character inherits its type.
tokens = tokenize(doc.text, WHITESPACE)
gold = project_labels(doc, tokens, task=CATEGORY)
print()
print("token labels:")
print(" ", " ".join("%s/%s" % (tok.text, lab)
                    for tok, lab in zip(tokens, gold.labels) if lab != "O"))

# Score a sloppy annotator who missed the date and mislabeled the opinion.
pred_doc = parse_markup(
    "The <entity>Eiffel Tower</entity> was finished in 1887 and is "
    "<contradictory>the most beautiful structure in Europe</contradictory>. "
    "It stands on the <invented>Champ-de-Lune</invented>.")
pred = project_labels(pred_doc, tokens, task=CATEGORY)

for task in (BINARY, CATEGORY):
    report = score_tokens(gold, pred, task=task)
    print()
    print("%s scoring: P=%.3f R=%.3f F1=%.3f (tp=%d fp=%d fn=%d)" %
          (task, report.precision, report.recall, report.f1,
           report.counts.tp, report.counts.fp, report.counts.fn))

agreement = cohen_kappa(gold, pred)
print()
print("kappa between the two annotators: %.3f (observed %.3f, chance %.3f)" %
      (agreement.kappa, agreement.observed_agreement,
       agreement.expected_agreement))
