# Modeling corrected rates across languages and models.
#
# The analysis frame holds one row per (language, model) cell; here we
# fabricate a plausible table, then walk the usual questions: does rate
# correlate with resource level, do small and large models differ, and does
# a random-intercept model with a Size x LanguageSupport interaction beat
# the additive one?

import numpy as np

from hallurate.stats import (AnalysisFrame, WELCH, fit_lmm, lr_test,
                             pearson, ttest_two_sample)

rng = np.random.default_rng(3)

languages = ["ar", "de", "en", "fr", "hi", "ja", "sw", "tr", "yo", "zu"]
supported = {"ar": 24, "de": 30, "en": 38, "fr": 34, "hi": 18,
             "ja": 26, "sw": 8, "tr": 16, "yo": 4, "zu": 5}

rows = []
for lang in languages:
    bump = rng.normal(0, 1.5)      # language-level random intercept
    for m, size in enumerate(["small"] * 3 + ["large"] * 3):
        is_large = size == "large"
        rate = (14.0 - 0.18 * supported[lang] - 2.5 * is_large
                + 0.09 * supported[lang] * is_large
                + bump + rng.normal(0, 1.0))
        rows.append({
            "rate": max(rate, 0.1),
            "size_class": size,
            "n_supported_langs": supported[lang],
            "mean_response_len": float(rng.uniform(250, 650)),
            "language": lang,
            "model_id": "m%d" % m,
        })

frame = AnalysisFrame(tuple(rows))

rates = frame.numeric("rate")
support = frame.numeric("n_supported_langs")
corr = pearson(support, rates)
print("rate vs language support: r=%.3f p=%.4f" % (corr.statistic, corr.p_value))

small = [row["rate"] for row in frame.rows if row["size_class"] == "small"]
large = [row["rate"] for row in frame.rows if row["size_class"] == "large"]
tt = ttest_two_sample(large, small, variant=WELCH)
print("large vs small rates:     t=%.3f df=%.1f p=%.4f" %
      (tt.statistic, tt.df, tt.p_value))

additive = fit_lmm(frame, ["size_class", "n_supported_langs"])
interact = fit_lmm(frame, ["size_class", "n_supported_langs",
                           "size_class:n_supported_langs"])

print()
print("random-intercept fits (grouped by language):")
for label, fit in (("additive", additive), ("interaction", interact)):
    print("  %-11s loglik=%8.3f sigma2=%.3f sigma_b2=%.3f" %
          (label, fit.loglik, fit.sigma2, fit.sigma_b2))
    for name, beta in fit.betas.items():
        print("      %-34s %+8.3f" % (name, beta))

lr = lr_test(interact, additive)
print()
print("LR test for the interaction: LR=%.3f df=%d p=%.2e" %
      (lr.statistic, lr.df, lr.p_value))
if lr.p_value < 0.001:
    print("the interaction survives at the 0.001 level")
