"""Imputation-powered inference for M-estimation under blockwise missing data.

The estimator combines the complete-case estimate with pattern-specific
correction terms built from an imputation model: for each missingness
pattern, the mean imputed-data gradient over that pattern's rows enters
with weight lambda_r, debiased by the same imputation applied to masked
complete rows.  With the convention used throughout this package the
population objective is

    L(theta; lambda) = mean over patterns r of
        lambda_r * P_imputed_r[l] + P_complete[l - lambda_r * l_masked_r]

so lambda = 0 recovers the complete-case estimator and the pooled weights
lambda_r = R * n_r / n_total recover single-model imputation averaging.
Estimation is one Newton step from the complete-case solution; the
per-pattern weights can be tuned in closed form to minimize the estimated
asymptotic variance.  Cross-fitted variants (fold-wise imputers, bootstrap
variance) avoid overfitting bias when the imputer is trained in-sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    DataError,
    NumericError,
    RankDeficiencyError,
)
from .imputers import ImputationModel, fit as fit_imputer
from .losses import LossModel, grad_matrix, mean_hessian, solve_complete_case
from .patterns import COMPLETE_PATTERN_ID, PatternedDataset, mask_matrix

COMPLETE_CASE_HESSIAN = "complete_case_hessian"
FULL_IPI_HESSIAN = "full_ipi_hessian"
HESSIAN_MODES = (COMPLETE_CASE_HESSIAN, FULL_IPI_HESSIAN)

TRACE_OBJECTIVE = "trace"

POPULATION = "population"
SUBPOPULATION = "subpopulation"

_TUNING_RIDGE = 1e-8
_CROSS_FIT_ATTEMPTS = 100
_BOOTSTRAP_ATTEMPTS = 100


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class TuningWeights:
    """Per-pattern weights lambda, one per nontrivial pattern."""

    lam: np.ndarray
    mode: str
    fallback: bool = False

    def __post_init__(self) -> None:
        lam = np.asarray(self.lam, dtype=float).reshape(-1).copy()
        lam.flags.writeable = False
        object.__setattr__(self, "lam", lam)

    @property
    def n_patterns(self) -> int:
        return int(self.lam.size)


def zero_weights(n_patterns: int) -> TuningWeights:
    return TuningWeights(np.zeros(n_patterns), "zero")


def pooled_weights(dataset: PatternedDataset) -> TuningWeights:
    """Weights that make the correction a single pooled imputation average.

    lambda_r = R * n_tilde_r / n_tilde_total, so the weighted pattern
    average becomes the frequency-weighted pooled mean.
    """
    counts = dataset.pattern_counts()[1:]
    total = counts.sum()
    if counts.size == 0:
        return TuningWeights(np.zeros(0), "pooled")
    if total == 0:
        raise DataError("pooled weights need at least one incomplete row")
    return TuningWeights(counts.size * counts / total, "pooled")


def _as_weights(lam, n_patterns: int) -> TuningWeights:
    if isinstance(lam, TuningWeights):
        w = lam
    else:
        arr = np.asarray(lam, dtype=float)
        if arr.ndim == 0:
            arr = np.full(n_patterns, float(arr))
        w = TuningWeights(arr, "fixed")
    if w.n_patterns != n_patterns:
        raise ConfigError(
            f"{w.n_patterns} weights given for {n_patterns} patterns"
        )
    if not np.isfinite(w.lam).all():
        raise ConfigError("pattern weights must be finite")
    return w


# ---------------------------------------------------------------------------
# score tables


@dataclass
class ScoreTables:
    """Per-row gradients and mean Hessians at a reference parameter.

    Everything lambda-independent is computed once here; gradients,
    Hessians, variances, tuning, and diagnostics all read from the same
    tables.  g_masked[r] aligns row-for-row with g_complete (complete rows
    masked by pattern r+1 and re-imputed); g_imputed[r] covers pattern
    r+1's own rows.  For cross-fitted tables, fold ids align with the same
    rows and the per-fold mean Hessians are kept alongside the pooled ones.
    """

    loss: LossModel
    theta: np.ndarray
    counts: np.ndarray  # (R,) pattern-group sizes
    g_complete: np.ndarray  # (n, p)
    g_masked: tuple[np.ndarray, ...]  # R x (n, p)
    g_imputed: tuple[np.ndarray, ...]  # R x (counts[r], p)
    h_complete: np.ndarray  # (p, p)
    h_masked: tuple[np.ndarray, ...]
    h_imputed: tuple[np.ndarray, ...]
    k_folds: int = 1
    fold_complete: np.ndarray | None = None
    fold_imputed: tuple[np.ndarray, ...] | None = None
    h_complete_folds: np.ndarray | None = None  # (K, p, p)
    h_masked_folds: tuple[np.ndarray, ...] | None = None
    h_imputed_folds: tuple[np.ndarray, ...] | None = None

    @property
    def n_complete(self) -> int:
        return int(self.g_complete.shape[0])

    @property
    def n_patterns(self) -> int:
        return len(self.g_masked)

    @property
    def param_dim(self) -> int:
        return int(self.g_complete.shape[1])


def score_tables(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    theta,
) -> ScoreTables:
    """Build the shared gradient/Hessian tables at a reference parameter.

    Args:
        dataset: the partitioned data.
        loss: loss acting on the dataset's target dims.
        imputer: a fitted ImputationModel, or a FoldedImputers bundle for
            the cross-fitted variant (each row filled by the model trained
            without its fold).
        theta: reference parameter, usually the complete-case estimate.
    """
    theta = np.asarray(theta, dtype=float)
    tdims = list(dataset.target_dims)
    folded = isinstance(imputer, FoldedImputers)
    if folded and imputer.fold_ids.shape != (dataset.n_rows,):
        raise ConfigError("fold ids do not align with the dataset rows")

    complete_idx = dataset.rows_of(COMPLETE_PATTERN_ID)
    complete_rows = dataset.values[complete_idx]
    x_complete = complete_rows[:, tdims]
    g_complete = grad_matrix(loss, x_complete, theta)
    h_complete = mean_hessian(loss, x_complete, theta)

    fold_complete = imputer.fold_ids[complete_idx] if folded else None

    def _fill(matrix: np.ndarray, folds: np.ndarray | None) -> np.ndarray:
        if not folded:
            return imputer.fill(matrix)
        out = matrix.copy()
        for k in range(imputer.k_folds):
            rows = np.flatnonzero(folds == k)
            if rows.size:
                out[rows] = imputer.models[k].fill(matrix[rows])
        return out

    g_masked, g_imputed, h_masked, h_imputed = [], [], [], []
    fold_imputed = []
    counts = []
    for r in range(1, dataset.n_patterns + 1):
        pattern = dataset.registry[r]
        masked = _fill(mask_matrix(complete_rows, pattern), fold_complete)[:, tdims]
        g_masked.append(grad_matrix(loss, masked, theta))
        h_masked.append(mean_hessian(loss, masked, theta))

        rows_r = dataset.rows_of(r)
        folds_r = imputer.fold_ids[rows_r] if folded else None
        own = _fill(dataset.values[rows_r], folds_r)[:, tdims]
        g_imputed.append(grad_matrix(loss, own, theta))
        h_imputed.append(mean_hessian(loss, own, theta))
        fold_imputed.append(folds_r)
        counts.append(rows_r.size)

    tables = ScoreTables(
        loss=loss,
        theta=theta,
        counts=np.asarray(counts, dtype=int),
        g_complete=g_complete,
        g_masked=tuple(g_masked),
        g_imputed=tuple(g_imputed),
        h_complete=h_complete,
        h_masked=tuple(h_masked),
        h_imputed=tuple(h_imputed),
    )
    if folded:
        tables.k_folds = imputer.k_folds
        tables.fold_complete = fold_complete
        tables.fold_imputed = tuple(fold_imputed)
        tables.h_complete_folds = _fold_hessians(
            loss, x_complete, theta, fold_complete, imputer.k_folds
        )
        tables.h_masked_folds = tuple(
            _fold_hessians_from_grad_rows(
                loss, dataset, r, complete_rows, imputer, theta, tdims,
                fold_complete, masked_side=True,
            )
            for r in range(1, dataset.n_patterns + 1)
        )
        tables.h_imputed_folds = tuple(
            _fold_hessians_from_grad_rows(
                loss, dataset, r, complete_rows, imputer, theta, tdims,
                fold_complete, masked_side=False,
            )
            for r in range(1, dataset.n_patterns + 1)
        )
    return tables


def _fold_hessians(loss, x_rows, theta, folds, k) -> np.ndarray:
    p = loss.param_dim
    out = np.zeros((k, p, p))
    for j in range(k):
        rows = np.flatnonzero(folds == j)
        if rows.size:
            out[j] = mean_hessian(loss, x_rows[rows], theta)
        else:
            out[j] = np.nan
    return out


def _fold_hessians_from_grad_rows(
    loss, dataset, r, complete_rows, folded_imputer, theta, tdims,
    fold_complete, masked_side: bool,
) -> np.ndarray:
    k = folded_imputer.k_folds
    if masked_side:
        base = mask_matrix(complete_rows, dataset.registry[r])
        folds = fold_complete
    else:
        rows_r = dataset.rows_of(r)
        base = dataset.values[rows_r]
        folds = folded_imputer.fold_ids[rows_r]
    p = loss.param_dim
    out = np.full((k, p, p), np.nan)
    for j in range(k):
        rows = np.flatnonzero(folds == j)
        if rows.size:
            filled = folded_imputer.models[j].fill(base[rows])[:, tdims]
            out[j] = mean_hessian(loss, filled, theta)
    return out


# ---------------------------------------------------------------------------
# gradient, Hessians, one-step estimate


def _gradient_from_tables(tables: ScoreTables, weights: TuningWeights) -> np.ndarray:
    lam = weights.lam
    big_r = tables.n_patterns
    if tables.k_folds == 1:
        g = tables.g_complete.mean(axis=0)
        for r in range(big_r):
            diff = tables.g_imputed[r].mean(axis=0) - tables.g_masked[r].mean(axis=0)
            g = g + (lam[r] / big_r) * diff
        return g
    # Cross-fitted: average the K per-fold objectives, each built from its
    # own fold's group means.
    k = tables.k_folds
    g = np.zeros(tables.param_dim)
    for j in range(k):
        c_rows = np.flatnonzero(tables.fold_complete == j)
        if c_rows.size == 0:
            raise DataError(f"fold {j} has no complete rows")
        gj = tables.g_complete[c_rows].mean(axis=0)
        for r in range(big_r):
            i_rows = np.flatnonzero(tables.fold_imputed[r] == j)
            if i_rows.size == 0:
                raise DataError(f"fold {j} has no rows of pattern {r + 1}")
            diff = (
                tables.g_imputed[r][i_rows].mean(axis=0)
                - tables.g_masked[r][c_rows].mean(axis=0)
            )
            gj = gj + (lam[r] / big_r) * diff
        g += gj
    return g / k


def _full_hessian_from_tables(tables: ScoreTables, weights: TuningWeights) -> np.ndarray:
    lam = weights.lam
    big_r = tables.n_patterns
    if tables.k_folds == 1:
        h = tables.h_complete.copy()
        for r in range(big_r):
            h += (lam[r] / big_r) * (tables.h_imputed[r] - tables.h_masked[r])
        return h
    k = tables.k_folds
    h = np.zeros_like(tables.h_complete)
    for j in range(k):
        hj = tables.h_complete_folds[j].copy()
        if np.isnan(hj).any():
            raise DataError(f"fold {j} has no complete rows")
        for r in range(big_r):
            h_imp = tables.h_imputed_folds[r][j]
            h_msk = tables.h_masked_folds[r][j]
            if np.isnan(h_imp).any():
                raise DataError(f"fold {j} has no rows of pattern {r + 1}")
            hj += (lam[r] / big_r) * (h_imp - h_msk)
        h += hj
    return h / k


def ipi_grad(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    theta,
    lam,
    tables: ScoreTables | None = None,
) -> np.ndarray:
    """Gradient of the weighted imputation-powered objective at theta."""
    tables = tables or score_tables(dataset, loss, imputer, theta)
    return _gradient_from_tables(tables, _as_weights(lam, tables.n_patterns))


def complete_case_hessian(dataset: PatternedDataset, loss: LossModel, theta) -> np.ndarray:
    """Mean loss Hessian over the complete rows."""
    x = dataset.complete_values()[:, list(dataset.target_dims)]
    return mean_hessian(loss, x, np.asarray(theta, dtype=float))


def full_ipi_hessian(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    theta,
    lam,
    tables: ScoreTables | None = None,
) -> np.ndarray:
    """Hessian of the weighted objective itself (plug-in form)."""
    tables = tables or score_tables(dataset, loss, imputer, theta)
    return _full_hessian_from_tables(tables, _as_weights(lam, tables.n_patterns))


def _one_step(tables: ScoreTables, weights: TuningWeights, hessian: np.ndarray) -> np.ndarray:
    g = _gradient_from_tables(tables, weights)
    try:
        step = np.linalg.solve(hessian, g)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("singular Hessian in the one-step update") from None
    return tables.theta - step


def ipi_point_estimate(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    lam,
    hessian_mode: str = COMPLETE_CASE_HESSIAN,
    theta_n=None,
    tables: ScoreTables | None = None,
) -> np.ndarray:
    """One Newton step from the complete-case estimate along the weighted objective."""
    if theta_n is None:
        theta_n = solve_complete_case(dataset, loss)
    tables = tables or score_tables(dataset, loss, imputer, theta_n)
    weights = _as_weights(lam, tables.n_patterns)
    hessian = _select_hessian(tables, weights, hessian_mode)
    return _one_step(tables, weights, hessian)


def _select_hessian(tables, weights, hessian_mode: str) -> np.ndarray:
    if hessian_mode == COMPLETE_CASE_HESSIAN:
        return tables.h_complete
    if hessian_mode == FULL_IPI_HESSIAN:
        return _full_hessian_from_tables(tables, weights)
    raise ConfigError(
        f"unknown hessian mode {hessian_mode!r}; expected one of {HESSIAN_MODES}"
    )


# ---------------------------------------------------------------------------
# variance


def _cov(rows: np.ndarray) -> np.ndarray:
    """Sample covariance (ddof=1) of row vectors, always (p, p)."""
    m = rows.shape[0]
    if m < 2:
        raise DataError("covariance needs at least 2 rows")
    centered = rows - rows.mean(axis=0)
    return centered.T @ centered / (m - 1)


def _variance_from_tables(
    tables: ScoreTables, weights: TuningWeights, hessian: np.ndarray
) -> np.ndarray:
    lam = weights.lam
    big_r = tables.n_patterns
    n = tables.n_complete
    resid = tables.g_complete.copy()
    for r in range(big_r):
        resid -= (lam[r] / big_r) * tables.g_masked[r]
    v = _cov(resid)
    for r in range(big_r):
        n_r = int(tables.counts[r])
        if n_r < 2:
            raise DataError(
                f"pattern {r + 1} has {n_r} rows; variance needs at least 2"
            )
        v += (lam[r] / big_r) ** 2 * (n / n_r) * _cov(tables.g_imputed[r])
    hinv = _inverse(hessian)
    return hinv @ v @ hinv


def _inverse(hessian: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(hessian)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("singular Hessian in variance sandwich") from None


def estimate_variance(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    theta,
    lam,
    hessian=None,
    tables: ScoreTables | None = None,
) -> np.ndarray:
    """Plug-in sandwich estimate of the asymptotic covariance of the estimator.

    The middle term combines the covariance of the lambda-corrected
    complete-row scores with the per-pattern imputed-score covariances,
    scaled by (lambda_r / R)^2 * n / n_r.  Divide by the complete-row count
    to get the finite-sample covariance of the estimate.
    """
    tables = tables or score_tables(dataset, loss, imputer, np.asarray(theta, float))
    weights = _as_weights(lam, tables.n_patterns)
    if hessian is None:
        hessian = tables.h_complete
    return _variance_from_tables(tables, weights, np.asarray(hessian, dtype=float))


# ---------------------------------------------------------------------------
# weight tuning


@dataclass(frozen=True)
class TuningComponents:
    """Quadratic pieces of the variance in lambda, summed over the target
    coordinates: variance(lambda) / n = const + lam' (a + c) lam / R^2
    - 2 b' lam / R."""

    a: np.ndarray  # (R, R) diagonal: imputed-score variances / n_r
    c: np.ndarray  # (R, R): masked-score covariances / n
    b: np.ndarray  # (R,): complete/masked cross-covariances / n

    def objective(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        big_r = self.b.size
        quad = lam @ (self.a + self.c) @ lam / big_r**2
        return float(quad - 2.0 * self.b @ lam / big_r)


def tuning_components(
    tables: ScoreTables, hessian, objective=TRACE_OBJECTIVE
) -> TuningComponents:
    """Assemble the per-pattern variance components for weight tuning.

    Args:
        objective: "trace" to sum over all coordinates, or a coordinate
            index to target one parameter.
    """
    coords = _objective_coords(objective, tables.param_dim)
    hinv = _inverse(np.asarray(hessian, dtype=float))
    n = tables.n_complete
    big_r = tables.n_patterns
    t_x = tables.g_complete @ hinv.T
    t_x = t_x - t_x.mean(axis=0)
    a = np.zeros((big_r, big_r))
    b = np.zeros(big_r)
    masked_centered = []
    for r in range(big_r):
        t_imp = tables.g_imputed[r] @ hinv.T
        t_imp = t_imp - t_imp.mean(axis=0)
        n_r = int(tables.counts[r])
        if n_r < 2 or n < 2:
            raise DataError("weight tuning needs at least 2 rows per group")
        a[r, r] = float(
            np.sum(t_imp[:, coords] ** 2) / (n_r - 1) / n_r
        )
        t_msk = tables.g_masked[r] @ hinv.T
        masked_centered.append(t_msk - t_msk.mean(axis=0))
        b[r] = float(
            np.sum(t_x[:, coords] * masked_centered[r][:, coords]) / (n - 1) / n
        )
    c = np.zeros((big_r, big_r))
    for r in range(big_r):
        for s in range(r, big_r):
            c[r, s] = float(
                np.sum(masked_centered[r][:, coords] * masked_centered[s][:, coords])
                / (n - 1)
                / n
            )
            c[s, r] = c[r, s]
    return TuningComponents(a, c, b)


def _objective_coords(objective, p: int) -> np.ndarray:
    if objective == TRACE_OBJECTIVE or objective is None:
        return np.arange(p)
    j = int(objective)
    if not 0 <= j < p:
        raise ConfigError(f"objective coordinate {j} out of range for p={p}")
    return np.array([j])


def _pooled_lam(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return counts
    total = counts.sum()
    if total == 0:
        raise DataError("pooled weights need at least one incomplete row")
    return counts.size * counts / total


def _tune_from_tables(
    tables: ScoreTables, objective, hessian
) -> tuple[TuningWeights, TuningComponents | None]:
    big_r = tables.n_patterns
    if big_r == 0:
        return TuningWeights(np.zeros(0), "tuned"), None
    comp = tuning_components(tables, hessian, objective)
    m = (comp.a + comp.c) / big_r
    eps = _TUNING_RIDGE * float(np.trace(comp.a + comp.c)) / big_r
    m = m + eps * np.eye(big_r)
    try:
        lam = np.linalg.solve(m, comp.b)
    except np.linalg.LinAlgError:
        lam = None
    if lam is None or not np.isfinite(lam).all():
        return TuningWeights(_pooled_lam(tables.counts), "tuned", fallback=True), comp
    return TuningWeights(lam, "tuned"), comp


def tune_lambda(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    theta_n=None,
    objective=TRACE_OBJECTIVE,
    hessian=None,
    tables: ScoreTables | None = None,
) -> tuple[TuningWeights, TuningComponents | None]:
    """Closed-form variance-minimizing pattern weights.

    Solves ((A + C) / R + eps I) lambda = b with a relative ridge
    eps = 1e-8 * trace(A + C) / R.  If the system is singular or produces
    non-finite weights, falls back to pooled weights and flags it.

    Returns:
        (weights, components); components is None when R = 0.
    """
    if tables is None:
        if theta_n is None:
            theta_n = solve_complete_case(dataset, loss)
        tables = score_tables(dataset, loss, imputer, theta_n)
    if hessian is None:
        hessian = tables.h_complete
    return _tune_from_tables(tables, objective, hessian)


# ---------------------------------------------------------------------------
# intervals and fit bundles


def confidence_interval(theta, variance, n: int, alpha: float):
    """Per-coordinate normal intervals and the joint ellipsoid radius.

    Returns:
        (se, ci, chi2_radius): se[j] = sqrt(variance[j, j] / n), ci is
        (p, 2), and {t: (t - theta)' variance^{-1} (t - theta) <=
        chi2_radius} is the joint 1 - alpha confidence ellipsoid.
    """
    theta = np.asarray(theta, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if n < 1:
        raise DataError("interval scaling needs n >= 1")
    diag = np.diag(variance)
    if (diag < -1e-12).any():
        raise NumericError("negative variance estimate")
    se = np.sqrt(np.maximum(diag, 0.0) / n)
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    ci = np.column_stack([theta - z * se, theta + z * se])
    chi2_radius = float(stats.chi2.ppf(1.0 - alpha, df=theta.size) / n)
    return se, ci, chi2_radius


def effective_sample_size(baseline_width, method_width, n: int) -> np.ndarray:
    """Complete rows the baseline would need to match the method's width:
    n * (baseline_width / method_width)^2, elementwise."""
    wb = np.asarray(baseline_width, dtype=float)
    wm = np.asarray(method_width, dtype=float)
    if (wb <= 0).any() or (wm <= 0).any():
        raise ConfigError("interval widths must be positive")
    return n * (wb / wm) ** 2


@dataclass(frozen=True)
class IPIFit:
    """A fitted estimator with its uncertainty summary.

    Attributes:
        theta_hat: point estimate (p,).
        se: per-coordinate standard errors.
        ci: (p, 2) two-sided 1 - alpha intervals.
        variance: asymptotic sandwich covariance; se = sqrt(diag / n_scale).
        n_scale: the count dividing the variance (complete rows for the
            pattern-weighted estimators, all rows for the inverse-probability
            baseline).
        weights: the pattern weights used, if any.
        hessian: the curvature matrix used for the one-step and sandwich.
        n_effective: per-coordinate complete-case-equivalent sample sizes.
        chi2_radius: joint confidence ellipsoid radius for the variance.
        estimand: "population" under the missing-completely-at-random
            first-moment assumption, else "subpopulation" (the complete-row
            stratum's parameter).
    """

    method: str
    estimand: str
    theta_hat: np.ndarray
    se: np.ndarray
    ci: np.ndarray
    alpha: float
    variance: np.ndarray
    n_scale: int
    chi2_radius: float
    weights: TuningWeights | None = None
    hessian: np.ndarray | None = None
    hessian_mode: str | None = None
    n_effective: np.ndarray | None = None
    theta_complete: np.ndarray | None = None
    warnings: tuple[str, ...] = ()

    @property
    def width(self) -> np.ndarray:
        return self.ci[:, 1] - self.ci[:, 0]


def _complete_case_widths(tables: ScoreTables, alpha: float) -> np.ndarray:
    sigma_cc = _variance_from_tables(
        tables, zero_weights(tables.n_patterns), tables.h_complete
    )
    _, ci, _ = confidence_interval(tables.theta, sigma_cc, tables.n_complete, alpha)
    return ci[:, 1] - ci[:, 0]


def _resolve_weights(tables, lambda_mode, fixed_lambda, objective, hessian_for_tuning):
    warnings: list[str] = []
    if lambda_mode == "tuned":
        weights, _ = _tune_from_tables(tables, objective, hessian_for_tuning)
        if weights.fallback:
            warnings.append(
                "weight tuning system was singular; fell back to pooled weights"
            )
    elif lambda_mode == "pooled":
        weights = TuningWeights(_pooled_lam(tables.counts), "pooled")
    elif lambda_mode == "zero":
        weights = zero_weights(tables.n_patterns)
    elif lambda_mode == "fixed":
        if fixed_lambda is None:
            raise ConfigError("lambda_mode='fixed' needs fixed_lambda")
        weights = _as_weights(fixed_lambda, tables.n_patterns)
    else:
        raise ConfigError(
            f"unknown lambda_mode {lambda_mode!r}; "
            "expected tuned, pooled, zero, or fixed"
        )
    return weights, warnings


def _fit_from_tables(
    tables: ScoreTables,
    method: str,
    lambda_mode: str,
    fixed_lambda,
    alpha: float,
    hessian_mode: str,
    objective,
    mcar: bool,
    extra_warnings=(),
) -> IPIFit:
    weights, warnings = _resolve_weights(
        tables, lambda_mode, fixed_lambda, objective, tables.h_complete
    )
    warnings = list(extra_warnings) + warnings
    hessian = _select_hessian(tables, weights, hessian_mode)
    theta = _one_step(tables, weights, hessian)
    sigma = _variance_from_tables(tables, weights, hessian)
    n = tables.n_complete
    se, ci, chi2_radius = confidence_interval(theta, sigma, n, alpha)
    width_cc = _complete_case_widths(tables, alpha)
    n_eff = effective_sample_size(width_cc, ci[:, 1] - ci[:, 0], n)
    return IPIFit(
        method=method,
        estimand=POPULATION if mcar else SUBPOPULATION,
        theta_hat=theta,
        se=se,
        ci=ci,
        alpha=alpha,
        variance=sigma,
        n_scale=n,
        chi2_radius=chi2_radius,
        weights=weights,
        hessian=hessian,
        hessian_mode=hessian_mode,
        n_effective=n_eff,
        theta_complete=tables.theta,
        warnings=tuple(warnings),
    )


def _default_hessian_mode(hessian_mode: str | None, mcar: bool) -> str:
    if hessian_mode is not None:
        return hessian_mode
    return COMPLETE_CASE_HESSIAN if mcar else FULL_IPI_HESSIAN


def ipi_fit(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer: ImputationModel,
    lambda_mode: str = "tuned",
    fixed_lambda=None,
    alpha: float = 0.1,
    hessian_mode: str | None = None,
    objective=TRACE_OBJECTIVE,
    mcar: bool = True,
    theta_n=None,
    tables: ScoreTables | None = None,
) -> IPIFit:
    """Full imputation-powered fit: solve, weight, correct, and summarize.

    Args:
        imputer: a fitted imputation model.  Train it on held-out rows (see
            split_train_inference) when honest tuning matters.
        lambda_mode: "tuned" (closed-form variance minimizer), "pooled",
            "zero" (complete-case), or "fixed" with fixed_lambda.
        hessian_mode: defaults to the complete-case Hessian under mcar=True
            and to the full objective Hessian otherwise.
        objective: "trace" or a coordinate index for tuning.
        mcar: whether the first-moment missing-completely-at-random
            assumption is asserted; controls the estimand label and the
            default Hessian.
    """
    if theta_n is None:
        theta_n = solve_complete_case(dataset, loss)
    if tables is None:
        tables = score_tables(dataset, loss, imputer, theta_n)
    return _fit_from_tables(
        tables,
        method="ipi",
        lambda_mode=lambda_mode,
        fixed_lambda=fixed_lambda,
        alpha=alpha,
        hessian_mode=_default_hessian_mode(hessian_mode, mcar),
        objective=objective,
        mcar=mcar,
    )


def split_train_inference(dataset: PatternedDataset, train_frac: float, seed):
    """Split rows into an imputer-training matrix and an inference dataset.

    floor(train_frac * N) rows, complete and incomplete alike, go to
    training; the rest form the returned inference dataset.

    Returns:
        (train_matrix, inference_dataset).
    """
    if not 0.0 <= train_frac < 1.0:
        raise ConfigError(f"train_frac must be in [0, 1), got {train_frac}")
    n_rows = dataset.n_rows
    n_train = int(np.floor(train_frac * n_rows))
    if n_train == 0:
        return np.empty((0, dataset.d)), dataset
    rng = _as_rng(seed)
    perm = rng.permutation(n_rows)
    train_idx = np.sort(perm[:n_train])
    infer_idx = np.sort(perm[n_train:])
    return dataset.values[train_idx], dataset.subset(infer_idx)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# cross-fitting


@dataclass(frozen=True)
class FoldedImputers:
    """K imputers, each trained on all rows outside its fold."""

    fold_ids: np.ndarray  # (N,) values in 0..K-1
    models: tuple[ImputationModel, ...]

    @property
    def k_folds(self) -> int:
        return len(self.models)


def _imputer_factory(imputer):
    """Normalize an imputer argument: kind string or callable(matrix, dims)."""
    if callable(imputer) and not isinstance(imputer, str):
        return imputer
    if isinstance(imputer, str):
        return lambda matrix, dims: fit_imputer(imputer, matrix, dims)
    raise ConfigError(
        "imputer must be a kind string or a callable factory(matrix, target_dims)"
    )


def cross_fit(
    dataset: PatternedDataset,
    k_folds: int,
    imputer,
    seed,
) -> FoldedImputers:
    """Randomly assign folds and train one imputer per held-out fold.

    Every fold must contain at least one complete row and at least one row
    of every pattern; assignments are redrawn up to 100 times before this
    is reported as a configuration error.

    Args:
        imputer: imputer kind string or factory(matrix, target_dims).
    """
    n_rows = dataset.n_rows
    if not 2 <= k_folds <= n_rows:
        raise ConfigError(f"k_folds must be in [2, {n_rows}], got {k_folds}")
    factory = _imputer_factory(imputer)
    rng = _as_rng(seed)
    ids = None
    for _ in range(_CROSS_FIT_ATTEMPTS):
        perm = rng.permutation(n_rows)
        cand = np.empty(n_rows, dtype=int)
        cand[perm] = np.arange(n_rows) % k_folds
        if _folds_cover_patterns(dataset, cand, k_folds):
            ids = cand
            break
    if ids is None:
        raise ConfigError(
            f"could not find a {k_folds}-fold split covering every pattern "
            f"in {_CROSS_FIT_ATTEMPTS} attempts; reduce k_folds or pool patterns"
        )
    models = []
    for k in range(k_folds):
        train = dataset.values[ids != k]
        models.append(factory(train, dataset.target_dims))
    return FoldedImputers(ids, tuple(models))


def _folds_cover_patterns(dataset, fold_ids, k_folds) -> bool:
    for pid in range(dataset.n_patterns + 1):
        present = np.bincount(fold_ids[dataset.rows_of(pid)], minlength=k_folds)
        if (present == 0).any():
            return False
    return True


def cipi_point_estimate(
    dataset: PatternedDataset,
    loss: LossModel,
    folded: FoldedImputers,
    lam,
    hessian_mode: str = COMPLETE_CASE_HESSIAN,
    theta_n=None,
    tables: ScoreTables | None = None,
) -> np.ndarray:
    """One-step estimate along the cross-fitted objective (fold-wise imputers)."""
    return ipi_point_estimate(
        dataset, loss, folded, lam,
        hessian_mode=hessian_mode, theta_n=theta_n, tables=tables,
    )


# ---------------------------------------------------------------------------
# bootstrap variance for cross-fitted estimates


def bootstrap_variance(
    dataset: PatternedDataset,
    loss: LossModel,
    theta,
    lam,
    k_folds: int,
    n_boot: int,
    imputer,
    seed,
    hessian=None,
) -> np.ndarray:
    """Bootstrap-averaged sandwich variance for the cross-fitted estimator.

    Trains n_boot imputers on bootstrap multisets of size
    floor(N (K-1) / K), averages each row's imputed values over the models
    whose sample missed the row, and evaluates the plug-in variance formula
    on those averaged imputations.  Resamples are redrawn (up to 100
    attempts) until every row is out-of-bag for at least one model.

    Args:
        theta: reference parameter (the complete-case estimate).
        lam: pattern weights used by the estimator.
        imputer: kind string or factory, retrained per resample.
        hessian: sandwich curvature; defaults to the complete-case Hessian.

    Returns:
        (p, p) asymptotic covariance; divide by the complete-row count for
        the finite-sample covariance.
    """
    theta = np.asarray(theta, dtype=float)
    weights = _as_weights(lam, dataset.n_patterns)
    if n_boot < 2:
        raise ConfigError(f"n_boot must be at least 2, got {n_boot}")
    if k_folds < 2:
        raise ConfigError(f"k_folds must be at least 2, got {k_folds}")
    factory = _imputer_factory(imputer)
    rng = _as_rng(seed)
    n_rows = dataset.n_rows
    size = int(np.floor(n_rows * (k_folds - 1) / k_folds))
    if size < 1:
        raise ConfigError("bootstrap resample size is zero")

    draws = [rng.integers(0, n_rows, size) for _ in range(n_boot)]
    in_bag = np.zeros((n_boot, n_rows), dtype=bool)
    for b, idx in enumerate(draws):
        in_bag[b, idx] = True
    for attempt in range(_BOOTSTRAP_ATTEMPTS):
        uncovered = np.flatnonzero(in_bag.all(axis=0))
        if uncovered.size == 0:
            break
        b = attempt % n_boot
        draws[b] = rng.integers(0, n_rows, size)
        in_bag[b] = False
        in_bag[b, draws[b]] = True
    else:
        raise DataError(
            "some rows were in-bag for every bootstrap model; "
            "increase n_boot or k_folds"
        )

    models = [factory(dataset.values[idx], dataset.target_dims) for idx in draws]
    tdims = list(dataset.target_dims)
    p = loss.param_dim
    big_r = dataset.n_patterns
    n = dataset.n_complete
    complete_idx = dataset.rows_of(COMPLETE_PATTERN_ID)
    complete_rows = dataset.values[complete_idx]
    oob = ~in_bag

    def _averaged_fill(base: np.ndarray, row_ids: np.ndarray) -> np.ndarray:
        total = np.zeros((base.shape[0], len(tdims)))
        counts = oob[:, row_ids].sum(axis=0).astype(float)
        for b, model in enumerate(models):
            use = np.flatnonzero(oob[b, row_ids])
            if use.size:
                total[use] += model.fill(base[use])[:, tdims]
        return total / counts[:, None]

    g_complete = grad_matrix(loss, complete_rows[:, tdims], theta)
    resid = g_complete.copy()
    v_imp = np.zeros((p, p))
    for r in range(big_r):
        masked = mask_matrix(complete_rows, dataset.registry[r + 1])
        g_masked = grad_matrix(loss, _averaged_fill(masked, complete_idx), theta)
        resid -= (weights.lam[r] / big_r) * g_masked
        rows_r = dataset.rows_of(r + 1)
        g_imp = grad_matrix(
            loss, _averaged_fill(dataset.values[rows_r], rows_r), theta
        )
        n_r = rows_r.size
        if n_r < 2:
            raise DataError(f"pattern {r + 1} has {n_r} rows; variance needs 2")
        v_imp += (weights.lam[r] / big_r) ** 2 * (n / n_r) * _cov(g_imp)
    v = _cov(resid) + v_imp
    if hessian is None:
        hessian = mean_hessian(loss, complete_rows[:, tdims], theta)
    hinv = _inverse(np.asarray(hessian, dtype=float))
    return hinv @ v @ hinv


def cipi_fit(
    dataset: PatternedDataset,
    loss: LossModel,
    imputer,
    k_folds: int = 10,
    n_boot: int = 50,
    lambda_mode: str = "tuned",
    fixed_lambda=None,
    alpha: float = 0.1,
    hessian_mode: str | None = None,
    objective=TRACE_OBJECTIVE,
    mcar: bool = True,
    seed=0,
) -> IPIFit:
    """Cross-fitted fit with bootstrap-averaged variance.

    The imputer is retrained K times (each fold scored by models that never
    saw it) so no training/inference split is needed, and the variance uses
    bootstrap model averaging to absorb the imputer's sampling noise.

    Args:
        imputer: imputer kind string or factory(matrix, target_dims).
        seed: drives fold assignment and bootstrap resampling.
    """
    ss = np.random.SeedSequence(seed)
    fold_seed, boot_seed = ss.spawn(2)
    theta_n = solve_complete_case(dataset, loss)
    folded = cross_fit(dataset, k_folds, imputer, np.random.default_rng(fold_seed))
    tables = score_tables(dataset, loss, folded, theta_n)
    weights, warnings = _resolve_weights(
        tables, lambda_mode, fixed_lambda, objective, tables.h_complete
    )
    hessian_mode = _default_hessian_mode(hessian_mode, mcar)
    hessian = _select_hessian(tables, weights, hessian_mode)
    theta = _one_step(tables, weights, hessian)
    sigma = bootstrap_variance(
        dataset, loss, theta_n, weights, k_folds, n_boot, imputer,
        np.random.default_rng(boot_seed), hessian=hessian,
    )
    n = tables.n_complete
    se, ci, chi2_radius = confidence_interval(theta, sigma, n, alpha)
    width_cc = _complete_case_widths(tables, alpha)
    return IPIFit(
        method="cipi",
        estimand=POPULATION if mcar else SUBPOPULATION,
        theta_hat=theta,
        se=se,
        ci=ci,
        alpha=alpha,
        variance=sigma,
        n_scale=n,
        chi2_radius=chi2_radius,
        weights=weights,
        hessian=hessian,
        hessian_mode=hessian_mode,
        n_effective=effective_sample_size(width_cc, ci[:, 1] - ci[:, 0], n),
        theta_complete=theta_n,
        warnings=tuple(warnings),
    )
