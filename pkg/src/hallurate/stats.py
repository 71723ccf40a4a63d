"""Correlation, t-tests, OLS, random-intercept mixed models, and the
distribution kernels their p-values need.

The mixed model is ``y = X beta + Z b + eps`` with one Gaussian random
intercept per group (``b ~ N(0, sigma_b^2 I)``, ``eps ~ N(0, sigma^2 I)``),
fit by maximum likelihood, not REML: the point of fitting these models here
is likelihood-ratio comparison between fixed-effect structures, and REML
likelihoods are not comparable across different fixed effects. For a given
variance ratio ``lam = sigma_b^2 / sigma^2`` the coefficients and residual
variance have closed-form profiles, so fitting reduces to a 1-D search over
``log10(lam)`` in [-8, 8].

Predictor coding for analysis frames: continuous predictors are z-scored,
the size class is coded 0 (small) / 1 (large), and interactions are products
of the coded columns. Coefficients are therefore on the coded scale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from .errors import DataError

PEARSON = "pearson"
TTEST = "ttest"
LR = "lr"

POOLED = "pooled"
WELCH = "welch"

INTERCEPT = "intercept"


class ConstantVectorError(DataError):
    """Correlation is undefined for a constant vector."""


class LengthMismatchError(DataError):
    pass


class TooFewPointsError(DataError):
    pass


class RankDeficientError(DataError):
    """Design matrix does not have full column rank."""


class DimensionMismatchError(DataError):
    pass


class SingularDesignError(DataError):
    """Mixed-model design is singular (collinear or constant predictors)."""


class NonConvergenceError(DataError):
    """Variance-ratio search failed; message reports the best point found."""


class NotNestedError(DataError):
    pass


class RowMismatchError(DataError):
    pass


class InvalidParamsError(DataError):
    pass


# ---------------------------------------------------------------------------
# Distribution kernels
# ---------------------------------------------------------------------------


def dist_cdf(kind: str, x: float, df: Optional[float] = None,
             mu: float = 0.0, sigma: float = 1.0) -> float:
    """CDF of the normal, Student-t, or chi-square distribution.

    ``normal`` takes ``mu``/``sigma``; ``student_t`` and ``chi_square``
    take ``df >= 1`` (fractional df allowed, as Welch tests produce).
    Built on the regularized incomplete beta/gamma functions.
    """
    if kind == "normal":
        if sigma <= 0:
            raise InvalidParamsError(f"sigma must be positive, got {sigma}")
        return float(special.ndtr((x - mu) / sigma))
    if kind == "student_t":
        _check_df(df)
        return _t_cdf(x, df)
    if kind == "chi_square":
        _check_df(df)
        if x <= 0:
            return 0.0
        return float(special.gammainc(df / 2.0, x / 2.0))
    raise InvalidParamsError(f"unknown distribution kind {kind!r}")


def _check_df(df: Optional[float]) -> None:
    if df is None or not math.isfinite(df) or df < 1:
        raise InvalidParamsError(f"df must be >= 1, got {df}")


def _t_cdf(x: float, df: float) -> float:
    if x == 0.0:
        return 0.5
    tail = 0.5 * float(special.betainc(df / 2.0, 0.5, df / (df + x * x)))
    return 1.0 - tail if x > 0 else tail


def _t_two_sided_p(t: float, df: float) -> float:
    # 2 * upper tail at |t|, computed directly in the beta domain to keep
    # precision for large statistics.
    if t == 0.0:
        return 1.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def _chi2_sf(x: float, df: float) -> float:
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    """A test statistic with its degrees of freedom and two-sided p-value.

    For :func:`pearson`, ``statistic`` is the correlation coefficient r.
    """

    statistic: float
    df: float
    p_value: float
    kind: str


def pearson(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Product-moment correlation with a two-sided Student-t p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError(f"shapes {x.shape} and {y.shape} differ")
    n = len(x)
    if n < 3:
        raise TooFewPointsError(f"need at least 3 points, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantVectorError("correlation undefined for a constant vector")
    prod = sxx * syy
    if prod > 0.0:
        denom = math.sqrt(prod)
    else:
        # the product of two tiny-but-nonzero variances can underflow to 0;
        # square-rooting each factor first stays representable
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = float(dx @ dy) / denom
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if 1.0 - r * r <= 0.0:
        return TestResult(r, df, 0.0, PEARSON)
    t = r * math.sqrt(df / (1.0 - r * r))
    return TestResult(r, df, _t_two_sided_p(t, df), PEARSON)


def ttest_two_sample(a: Sequence[float], b: Sequence[float],
                     variant: str = POOLED) -> TestResult:
    """Two-sample t-test; the statistic's sign follows mean(a) - mean(b).

    ``pooled`` is the classic equal-variance Student test; ``welch`` drops
    that assumption and uses Satterthwaite degrees of freedom. Identical
    samples give t = 0, p = 1 even when both are constant.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewPointsError("each sample needs at least 2 points")
    diff = float(a.mean() - b.mean())
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))

    if variant == POOLED:
        df = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    elif variant == WELCH:
        sea2 = va / na
        seb2 = vb / nb
        se = math.sqrt(sea2 + seb2)
        if se > 0.0:
            df = (sea2 + seb2) ** 2 / (
                sea2 ** 2 / (na - 1) + seb2 ** 2 / (nb - 1)
            )
        else:
            df = na + nb - 2
    else:
        raise InvalidParamsError(f"unknown variant {variant!r}")

    if se == 0.0:
        # Zero spread: identical means agree exactly, different means are
        # infinitely separated.
        if diff == 0.0:
            return TestResult(0.0, df, 1.0, TTEST)
        return TestResult(math.copysign(math.inf, diff), df, 0.0, TTEST)
    t = diff / se
    return TestResult(t, df, _t_two_sided_p(t, df), TTEST)


# ---------------------------------------------------------------------------
# Analysis frame and design coding
# ---------------------------------------------------------------------------

FRAME_COLUMNS = (
    "rate",
    "size_class",
    "n_supported_langs",
    "mean_response_len",
    "language",
    "model_id",
)

SIZE_SMALL = "small"
SIZE_LARGE = "large"
_SIZE_CODE = {SIZE_SMALL: 0.0, SIZE_LARGE: 1.0}

_NUMERIC_COLUMNS = {"rate", "n_supported_langs", "mean_response_len"}


@dataclass(frozen=True)
class AnalysisFrame:
    """Rows of per-(language, model) observations for the analysis stack."""

    rows: Tuple[Mapping[str, object], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(dict(r) for r in self.rows))
        if len(self.rows) < 2:
            raise DataError("analysis frame needs at least 2 rows")
        for i, row in enumerate(self.rows):
            missing = [c for c in FRAME_COLUMNS if c not in row or row[c] is None]
            if missing:
                raise DataError(f"row {i} missing columns {missing}")
            if row["size_class"] not in _SIZE_CODE:
                raise DataError(
                    f"row {i}: size_class must be small or large, "
                    f"got {row['size_class']!r}"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        if name not in FRAME_COLUMNS:
            raise DataError(f"unknown column {name!r}")
        return [row[name] for row in self.rows]

    def numeric(self, name: str) -> np.ndarray:
        return np.asarray(self.column(name), dtype=float)

    @classmethod
    def from_csv(cls, path) -> "AnalysisFrame":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if sorted(header) != sorted(FRAME_COLUMNS):
                raise DataError(
                    f"expected columns {sorted(FRAME_COLUMNS)}, got {sorted(header)}"
                )
            rows = []
            for row in reader:
                rows.append(
                    {
                        "rate": float(row["rate"]),
                        "size_class": row["size_class"],
                        "n_supported_langs": int(row["n_supported_langs"]),
                        "mean_response_len": float(row["mean_response_len"]),
                        "language": row["language"],
                        "model_id": row["model_id"],
                    }
                )
        return cls(tuple(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(FRAME_COLUMNS))
            writer.writeheader()
            for row in self.rows:
                writer.writerow({c: row[c] for c in FRAME_COLUMNS})


def two_way_interactions(terms: Sequence[str]) -> List[str]:
    """Main effects plus every pairwise ``a:b`` interaction, in order."""
    out = list(terms)
    for i, a in enumerate(terms):
        for b in terms[i + 1:]:
            out.append(f"{a}:{b}")
    return out


def _coded_column(frame: AnalysisFrame, name: str) -> np.ndarray:
    if name == "size_class":
        return np.asarray([_SIZE_CODE[v] for v in frame.column(name)], dtype=float)
    if name in _NUMERIC_COLUMNS:
        col = frame.numeric(name)
        sd = col.std()
        if sd == 0.0:
            raise SingularDesignError(f"column {name!r} is constant")
        return (col - col.mean()) / sd
    raise DataError(f"column {name!r} cannot be used as a predictor")


def build_design(frame: AnalysisFrame, terms: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    """Design matrix (with leading intercept) for the given terms.

    A term is a column name or an ``a:b`` product of two coded columns.
    """
    columns = [np.ones(len(frame))]
    names = [INTERCEPT]
    for term in terms:
        if ":" in term:
            left, right = term.split(":", 1)
            columns.append(_coded_column(frame, left) * _coded_column(frame, right))
        else:
            columns.append(_coded_column(frame, term))
        names.append(term)
    return np.column_stack(columns), names


# ---------------------------------------------------------------------------
# Model fitting
# ---------------------------------------------------------------------------

CONVERGES_TO_OLS = "converges-to-ols"

_LOG10_LAM_LO = -8.0
_LOG10_LAM_HI = 8.0
# Relative tolerance 1e-8 on lam translates to ~4.3e-9 absolute on log10(lam).
_LOG10_LAM_XATOL = 1e-8 / math.log(10.0)
_MIN_VARIANCE = 1e-300


@dataclass(frozen=True)
class ModelFit:
    """A fitted linear model, possibly with a random intercept.

    ``sigma2`` is the ML residual variance, ``sigma_b2`` the random-intercept
    variance (0 for plain OLS) and ``variance_ratio`` their quotient
    ``sigma_b2 / sigma2``. ``p`` counts fixed-effect parameters only.
    """

    betas: Mapping[str, float]
    sigma2: float
    sigma_b2: float
    variance_ratio: float
    loglik: float
    n: int
    p: int
    group_by: Optional[str] = None
    flags: Tuple[str, ...] = ()


def fit_ols(X: np.ndarray, y: Sequence[float],
            names: Optional[Sequence[str]] = None) -> ModelFit:
    """Ordinary least squares with ML variance and Gaussian log-likelihood."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(
            f"X is {X.shape}, y is {y.shape}; need matching 2-D/1-D"
        )
    n, p = X.shape
    if n <= p:
        raise RankDeficientError(f"need more rows ({n}) than parameters ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError("design matrix is rank deficient")
    if names is None:
        names = [f"x{i}" for i in range(p)]
    elif len(names) != p:
        raise DimensionMismatchError(f"{len(names)} names for {p} columns")

    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = max(rss / n, _MIN_VARIANCE)
    loglik = -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)
    betas = dict(zip(names, (float(b) for b in beta)))
    return ModelFit(betas, sigma2, 0.0, 0.0, loglik, n, p)


class _ProfiledModel:
    """Per-group sufficient statistics for the random-intercept profile.

    With ``V = I + lam * Z Z^T``, each group block inverts to
    ``I - c * J`` where ``c = lam / (1 + lam * n_g)`` and ``J`` is all-ones,
    so every quantity in the profiled likelihood reduces to group sums.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, group_idx: np.ndarray):
        self.n, self.p = X.shape
        n_groups = int(group_idx.max()) + 1
        self.group_sizes = np.bincount(group_idx, minlength=n_groups).astype(float)
        self.xtx = X.T @ X
        self.xty = X.T @ y
        self.yty = float(y @ y)
        # Per-group column sums of X and sums of y.
        self.sx = np.zeros((n_groups, self.p))
        np.add.at(self.sx, group_idx, X)
        self.sy = np.bincount(group_idx, weights=y, minlength=n_groups)

    def solve(self, lam: float):
        """Return (beta, sigma2, loglik) maximizing the likelihood at lam."""
        c = lam / (1.0 + lam * self.group_sizes)
        m = self.xtx - (self.sx.T * c) @ self.sx
        v = self.xty - self.sx.T @ (c * self.sy)
        q = self.yty - float(c @ (self.sy * self.sy))
        try:
            beta = np.linalg.solve(m, v)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(f"singular design at lam={lam:g}") from exc
        rss = q - 2.0 * float(beta @ v) + float(beta @ m @ beta)
        sigma2 = max(rss / self.n, _MIN_VARIANCE)
        logdet = float(np.log1p(lam * self.group_sizes).sum())
        loglik = (
            -0.5 * self.n * (math.log(2.0 * math.pi * sigma2) + 1.0)
            - 0.5 * logdet
        )
        return beta, sigma2, loglik


def fit_lmm(frame: AnalysisFrame, fixed: Sequence[str],
            group_by: str = "language", response: str = "rate") -> ModelFit:
    """ML fit of a random-intercept model over an analysis frame.

    ``fixed`` lists predictor terms (see :func:`build_design`); the random
    intercept is grouped by ``group_by``. With a single group the variance
    ratio is unidentifiable, so the fit collapses to OLS and carries a
    ``converges-to-ols`` flag.
    """
    X, names = build_design(frame, fixed)
    y = frame.numeric(response)
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need more rows ({n}) than parameters ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("fixed-effect design is rank deficient")

    group_values = frame.column(group_by)
    _, group_idx = np.unique(group_values, return_inverse=True)
    n_groups = int(group_idx.max()) + 1

    ols = fit_ols(X, y, names)
    if n_groups < 2:
        return replace(
            ols, group_by=group_by, flags=(CONVERGES_TO_OLS,)
        )

    model = _ProfiledModel(X, y, group_idx)

    def negative_loglik(log10_lam: float) -> float:
        return -model.solve(10.0 ** log10_lam)[2]

    res = optimize.minimize_scalar(
        negative_loglik,
        bounds=(_LOG10_LAM_LO, _LOG10_LAM_HI),
        method="bounded",
        options={"xatol": _LOG10_LAM_XATOL, "maxiter": 500},
    )
    if not res.success:
        eps = 1e-6
        grad = (negative_loglik(res.x + eps) - negative_loglik(res.x - eps)) / (2 * eps)
        raise NonConvergenceError(
            f"variance-ratio search stalled at log10(lam)={res.x:.6f} "
            f"(loglik={-res.fun:.6f}, |grad|={abs(grad):.3e})"
        )

    lam = 10.0 ** float(res.x)
    beta, sigma2, loglik = model.solve(lam)
    # The search domain excludes lam = 0 itself; take the exact OLS solution
    # when the boundary is at least as good, so a random intercept never
    # fits worse than none.
    if ols.loglik >= loglik:
        return replace(ols, group_by=group_by)
    betas = dict(zip(names, (float(b) for b in beta)))
    return ModelFit(
        betas, sigma2, lam * sigma2, lam, loglik, n, p, group_by=group_by
    )


def lr_test(full: ModelFit, reduced: ModelFit) -> TestResult:
    """Likelihood-ratio test between nested ML fits.

    The statistic is ``2 * (loglik_full - loglik_reduced)``, clamped at 0,
    referred to chi-square with df equal to the difference in fixed-effect
    parameter counts.
    """
    if full.n != reduced.n:
        raise RowMismatchError(
            f"fits cover different row counts: {full.n} vs {reduced.n}"
        )
    if not set(reduced.betas) <= set(full.betas):
        extra = sorted(set(reduced.betas) - set(full.betas))
        raise NotNestedError(f"reduced model has terms {extra} absent from full")
    df = full.p - reduced.p
    if df < 0:
        raise NotNestedError("reduced model has more parameters than full")
    stat = max(0.0, 2.0 * (full.loglik - reduced.loglik))
    p_value = 1.0 if df == 0 else _chi2_sf(stat, df)
    return TestResult(stat, df, p_value, LR)
