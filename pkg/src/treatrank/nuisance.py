"""Cross-fitted nuisance estimation on discrete strata.

The estimators need two kinds of conditional expectations: outcome
regressions ``E[Y | X]`` (pooled and per arm) and propensities
``E[W | X]``. Everything is fit fold-wise: a unit's prediction always comes
from models trained on the other folds.

Three learners are available. ``STRATUM_MEAN`` is the saturated
nonparametric estimator (within-cell training means) and is exact for the
discrete designs in this package. ``LINEAR_RIDGE`` and ``LOGISTIC_RIDGE``
fit penalized linear/logistic models on a basis expansion of the stratum
code; both are solved with deterministic dependency-free numerics
(closed-form normal equations, Newton iterations).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np
from numpy.typing import NDArray

from . import rng
from .dgp import AssignmentMode, Dataset, StratifiedDGP

NEWTON_MAX_ITER = 100
NEWTON_GRAD_TOL = 1e-10

DEFAULT_NUM_FOLDS = 5
DEFAULT_CLIP = 0.01


class SingularFitError(RuntimeError):
    """Raised when a logistic fit cannot be pinned down by the data."""


class LearnerKind(str, Enum):
    STRATUM_MEAN = "stratum_mean"
    LINEAR_RIDGE = "linear_ridge"
    LOGISTIC_RIDGE = "logistic_ridge"


class Basis(str, Enum):
    """Covariate expansion for the ridge learners.

    STRATUM_DUMMIES is one indicator column per stratum code (saturated);
    RAW_CODE is an intercept plus the integer code as a single regressor.
    """

    STRATUM_DUMMIES = "stratum_dummies"
    RAW_CODE = "raw_code"


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to use for the nuisance fits.

    LOGISTIC_RIDGE applies to binary (propensity) targets only; outcome
    targets then fall back to LINEAR_RIDGE with the same penalty and basis.
    """

    kind: LearnerKind = LearnerKind.STRATUM_MEAN
    ridge_penalty: float = 0.0
    basis: Basis = Basis.STRATUM_DUMMIES

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        object.__setattr__(self, "basis", Basis(self.basis))
        if not np.isfinite(self.ridge_penalty) or self.ridge_penalty < 0:
            raise ValueError(f"ridge_penalty must be finite and >= 0, got {self.ridge_penalty}")


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of units into folds."""

    num_folds: int
    fold_of: NDArray[np.int64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fold_of", np.asarray(self.fold_of, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.fold_of.shape[0]

    def splits(self) -> Iterable[tuple[NDArray[np.bool_], NDArray[np.bool_]]]:
        """Yield (train_mask, predict_mask) pairs, one per fold."""
        for k in range(self.num_folds):
            test = self.fold_of == k
            yield ~test, test


def assign_folds(n: int, num_folds: int, seed: int) -> FoldAssignment:
    """Randomly partition ``n`` units into folds whose sizes differ by at most one."""
    if num_folds < 2:
        raise ValueError(f"num_folds must be >= 2, got {num_folds}")
    if n < num_folds:
        raise ValueError(f"need at least one unit per fold: n={n} < num_folds={num_folds}")
    order = rng.substream(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % num_folds
    return FoldAssignment(num_folds=num_folds, fold_of=fold_of)


@dataclass
class NuisanceFit:
    """Cross-fitted nuisance predictions for every unit.

    All arrays are aligned with the dataset's unit order. ``restricted_*``
    and ``control_p`` are only populated under MULTINOMIAL assignment, where
    the residual-on-residual regression runs on the {control, j} subsample
    with the conditional propensity ``p_j / (p_j + p_0)``.
    """

    mode: AssignmentMode
    num_treatments: int
    y_hat: NDArray[np.float64]          # (n,) pooled E[Y|X]
    p_hat: NDArray[np.float64]          # (n, K) arm-membership probability
    mu_treated: NDArray[np.float64]     # (n, K) E[Y | arm j, X]
    mu_control: NDArray[np.float64]     # (n, K) E[Y | treatment j's control, X]
    restricted_y: NDArray[np.float64] | None = None  # (n, K) E[Y | X, W in {0, j}]
    restricted_p: NDArray[np.float64] | None = None  # (n, K) P(W=j | X, W in {0, j})
    control_p: NDArray[np.float64] | None = None     # (n,) P(control arm | X)
    clipped_count: int = 0
    fallback_count: int = 0

    @property
    def n(self) -> int:
        return self.y_hat.shape[0]

    def plm_outcome(self, j: int) -> NDArray[np.float64]:
        """Outcome predictions entering treatment ``j``'s residual regression."""
        if self.mode is AssignmentMode.PARALLEL_BINARY:
            return self.y_hat
        assert self.restricted_y is not None
        return self.restricted_y[:, j - 1]

    def plm_propensity(self, j: int) -> NDArray[np.float64]:
        """Propensities entering treatment ``j``'s residual regression."""
        if self.mode is AssignmentMode.PARALLEL_BINARY:
            return self.p_hat[:, j - 1]
        assert self.restricted_p is not None
        return self.restricted_p[:, j - 1]

    def arm_probability(self, j: int) -> NDArray[np.float64]:
        return self.p_hat[:, j - 1]

    def control_probability(self, j: int) -> NDArray[np.float64]:
        """Probability of treatment ``j``'s control condition."""
        if self.mode is AssignmentMode.PARALLEL_BINARY:
            return 1.0 - self.p_hat[:, j - 1]
        assert self.control_p is not None
        return self.control_p

    def treated_outcome(self, j: int) -> NDArray[np.float64]:
        return self.mu_treated[:, j - 1]

    def control_outcome(self, j: int) -> NDArray[np.float64]:
        return self.mu_control[:, j - 1]


# ---------------------------------------------------------------------------
# learners


def _design(codes: NDArray, levels: NDArray, basis: Basis) -> NDArray[np.float64]:
    if basis is Basis.STRATUM_DUMMIES:
        pos = np.searchsorted(levels, codes)
        X = np.zeros((codes.shape[0], levels.shape[0]))
        X[np.arange(codes.shape[0]), pos] = 1.0
        return X
    return np.column_stack([np.ones(codes.shape[0]), codes.astype(np.float64)])


def _linear_ridge_beta(X: NDArray, t: NDArray, penalty: float) -> NDArray[np.float64]:
    if penalty == 0.0:
        beta, *_ = np.linalg.lstsq(X, t, rcond=None)
        return beta
    d = X.shape[1]
    return np.linalg.solve(X.T @ X + penalty * np.eye(d), X.T @ t)


def _logistic_ridge_beta(X: NDArray, t: NDArray, penalty: float) -> NDArray[np.float64]:
    if penalty == 0.0 and (t.min() == t.max()):
        raise SingularFitError(
            "logistic training split contains a single class; "
            "set ridge_penalty > 0 to regularize the fit"
        )
    d = X.shape[1]
    beta = np.zeros(d)
    for _ in range(NEWTON_MAX_ITER):
        eta = np.clip(X @ beta, -30.0, 30.0)
        mu = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (t - mu) - penalty * beta
        if np.max(np.abs(grad)) <= NEWTON_GRAD_TOL:
            break
        H = (X * (mu * (1.0 - mu))[:, None]).T @ X + penalty * np.eye(d)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(
                "singular Hessian in logistic fit; set ridge_penalty > 0"
            ) from exc
        beta = beta + step
    return beta


class _TargetFitter:
    """Fits one nuisance target on a training subset and predicts any units."""

    def __init__(self, spec: LearnerSpec, levels: NDArray, binary: bool):
        self.spec = spec
        self.levels = levels
        self.binary = binary

    def fit_predict(
        self,
        codes_tr: NDArray,
        t_tr: NDArray,
        codes_pred: NDArray,
        pooled_fallback: float,
    ) -> tuple[NDArray[np.float64], int]:
        """Return (predictions for codes_pred, fallback prediction count)."""
        kind = self.spec.kind
        if kind is LearnerKind.LOGISTIC_RIDGE and not self.binary:
            kind = LearnerKind.LINEAR_RIDGE

        if t_tr.shape[0] == 0:
            # no training units for this target at all (e.g. an arm absent
            # from the training folds): predict the pooled training mean
            return np.full(codes_pred.shape[0], pooled_fallback), codes_pred.shape[0]

        if kind is LearnerKind.STRATUM_MEAN:
            L = self.levels.shape[0]
            pos = np.searchsorted(self.levels, codes_tr)
            counts = np.bincount(pos, minlength=L)
            sums = np.bincount(pos, weights=t_tr.astype(np.float64), minlength=L)
            has_cell = counts > 0
            means = np.where(has_cell, sums / np.maximum(counts, 1), float(t_tr.mean()))
            pred_pos = np.searchsorted(self.levels, codes_pred)
            return means[pred_pos], int(np.sum(~has_cell[pred_pos]))

        X_tr = _design(codes_tr, self.levels, self.spec.basis)
        X_pred = _design(codes_pred, self.levels, self.spec.basis)
        if kind is LearnerKind.LOGISTIC_RIDGE:
            beta = _logistic_ridge_beta(X_tr, t_tr.astype(np.float64), self.spec.ridge_penalty)
            eta = np.clip(X_pred @ beta, -30.0, 30.0)
            return 1.0 / (1.0 + np.exp(-eta)), 0
        beta = _linear_ridge_beta(X_tr, t_tr.astype(np.float64), self.spec.ridge_penalty)
        return X_pred @ beta, 0


# ---------------------------------------------------------------------------
# cross-fitting


def fit_crossfit(
    data: Dataset,
    spec: LearnerSpec,
    folds: FoldAssignment,
    clip: float = DEFAULT_CLIP,
) -> NuisanceFit:
    """Cross-fit all nuisance functions the estimators need.

    For each fold, learners trained on the complementary folds predict the
    fold's units, so no unit's prediction depends on its own fold's data.
    Propensity predictions are clipped to ``[clip, 1 - clip]``; empty
    stratum-mean cells fall back to the training-split marginal mean. Both
    events are counted on the returned fit.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    if folds.n != data.n:
        raise ValueError(f"fold assignment covers {folds.n} units, dataset has {data.n}")
    if not 0.0 <= clip < 0.5:
        raise ValueError(f"clip must be in [0, 0.5), got {clip}")
    return _compute_fit(data, spec, clip, list(folds.splits()))


def fit_insample(data: Dataset, spec: LearnerSpec, clip: float = 0.0) -> NuisanceFit:
    """Fit on the full sample and predict in-sample (no cross-fitting).

    Intended for diagnostics and for checking algebraic identities of the
    residual regression, where fold-splitting would break exactness.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    if not 0.0 <= clip < 0.5:
        raise ValueError(f"clip must be in [0, 0.5), got {clip}")
    every = np.ones(data.n, dtype=bool)
    return _compute_fit(data, spec, clip, [(every, every)])


def _compute_fit(
    data: Dataset,
    spec: LearnerSpec,
    clip: float,
    splits: list[tuple[NDArray[np.bool_], NDArray[np.bool_]]],
) -> NuisanceFit:
    n, K = data.n, data.num_treatments
    codes = data.x
    levels = np.unique(codes)
    multinomial = data.assignment_mode is AssignmentMode.MULTINOMIAL

    outcome = _TargetFitter(spec, levels, binary=False)
    propensity = _TargetFitter(spec, levels, binary=True)

    y_hat = np.empty(n)
    p_hat = np.empty((n, K))
    mu_treated = np.empty((n, K))
    mu_control = np.empty((n, K))
    restricted_y = np.empty((n, K)) if multinomial else None
    restricted_p = np.empty((n, K)) if multinomial else None
    control_p = np.empty(n) if multinomial else None

    fallbacks = 0
    for train, pred in splits:
        codes_tr, codes_pred = codes[train], codes[pred]
        y_tr = data.y[train]
        pooled_mean = float(y_tr.mean())

        y_hat[pred], fb = outcome.fit_predict(codes_tr, y_tr, codes_pred, pooled_mean)
        fallbacks += fb

        for j in range(1, K + 1):
            w_tr = data.indicator(j)[train]
            p_hat[pred, j - 1], fb = propensity.fit_predict(
                codes_tr, w_tr, codes_pred, float(w_tr.mean())
            )
            fallbacks += fb

            treated_tr = w_tr == 1
            mu_treated[pred, j - 1], fb = outcome.fit_predict(
                codes_tr[treated_tr], y_tr[treated_tr], codes_pred, pooled_mean
            )
            fallbacks += fb

            ctrl_tr = data.control_indicator(j)[train] == 1
            mu_control[pred, j - 1], fb = outcome.fit_predict(
                codes_tr[ctrl_tr], y_tr[ctrl_tr], codes_pred, pooled_mean
            )
            fallbacks += fb

            if multinomial:
                restrict_tr = data.restriction_mask(j)[train]
                restricted_y[pred, j - 1], fb = outcome.fit_predict(
                    codes_tr[restrict_tr], y_tr[restrict_tr], codes_pred, pooled_mean
                )
                fallbacks += fb
                arm_tr = data.indicator(j)[train][restrict_tr]
                restricted_p[pred, j - 1], fb = propensity.fit_predict(
                    codes_tr[restrict_tr],
                    arm_tr,
                    codes_pred,
                    float(arm_tr.mean()) if arm_tr.size else 0.5,
                )
                fallbacks += fb

        if multinomial:
            c_tr = (data.w[train].sum(axis=1) == 0).astype(np.int8)
            control_p[pred], fb = propensity.fit_predict(
                codes_tr, c_tr, codes_pred, float(c_tr.mean())
            )
            fallbacks += fb

    clipped = 0
    lo, hi = clip, 1.0 - clip
    for arr in (p_hat, restricted_p, control_p):
        if arr is None:
            continue
        clipped += int(np.sum((arr < lo) | (arr > hi)))
        np.clip(arr, lo, hi, out=arr)

    return NuisanceFit(
        mode=data.assignment_mode,
        num_treatments=K,
        y_hat=y_hat,
        p_hat=p_hat,
        mu_treated=mu_treated,
        mu_control=mu_control,
        restricted_y=restricted_y,
        restricted_p=restricted_p,
        control_p=control_p,
        clipped_count=clipped,
        fallback_count=fallbacks,
    )


# ---------------------------------------------------------------------------
# oracle injection and controlled corruption


def oracle_nuisance(data: Dataset, dgp: StratifiedDGP) -> NuisanceFit:
    """Build a fit whose predictions are the DGP's exact conditional means.

    Decouples estimator behaviour from learner error: with this fit, any
    remaining deviation of an estimator from its closed-form target is pure
    sampling noise.
    """
    if data.assignment_mode is not dgp.assignment_mode:
        raise ValueError("dataset and DGP assignment modes differ")
    idx = dgp.stratum_index(data.x)
    K = dgp.num_treatments
    p = dgp.propensity[:, idx].T        # (n, K)
    tau = dgp.effect[:, idx].T          # (n, K)
    mu0 = dgp.baseline[idx]             # (n,)

    # with exclusive arms and with independent parallel indicators alike,
    # E[Y | X] = mu0 + sum_k p_k tau_k
    y_hat = mu0 + (p * tau).sum(axis=1)

    if dgp.assignment_mode is AssignmentMode.PARALLEL_BINARY:
        others = (p * tau).sum(axis=1)[:, None] - p * tau
        mu_treated = mu0[:, None] + tau + others
        mu_control = mu0[:, None] + others
        restricted_y = restricted_p = control_p = None
    else:
        mu_treated = mu0[:, None] + tau
        mu_control = np.repeat(mu0[:, None], K, axis=1)
        control_p = 1.0 - p.sum(axis=1)
        cond = p / (p + control_p[:, None])
        restricted_p = cond
        restricted_y = mu0[:, None] + tau * cond

    return NuisanceFit(
        mode=dgp.assignment_mode,
        num_treatments=K,
        y_hat=y_hat,
        p_hat=p,
        mu_treated=mu_treated,
        mu_control=mu_control,
        restricted_y=restricted_y,
        restricted_p=restricted_p,
        control_p=control_p,
    )


def corrupt_outcome(fit: NuisanceFit, data: Dataset, bias: Mapping[int, float]) -> NuisanceFit:
    """Shift every outcome-model prediction by a fixed per-stratum offset.

    Leaves propensities untouched; the canonical "wrong outcome model, right
    propensity model" configuration for double-robustness checks.
    """
    offset = np.array([float(bias[int(c)]) for c in data.x])
    return replace(
        fit,
        y_hat=fit.y_hat + offset,
        mu_treated=fit.mu_treated + offset[:, None],
        mu_control=fit.mu_control + offset[:, None],
        restricted_y=None if fit.restricted_y is None else fit.restricted_y + offset[:, None],
    )


def corrupt_propensity(fit: NuisanceFit, odds_factor: float) -> NuisanceFit:
    """Multiply the odds of every propensity prediction by a constant.

    ``p -> f p / (1 - p + f p)``. Leaves outcome models untouched; the
    "right outcome model, wrong propensity model" configuration for
    double-robustness checks.
    """
    if odds_factor <= 0:
        raise ValueError(f"odds_factor must be > 0, got {odds_factor}")

    def shift(p: NDArray | None) -> NDArray | None:
        if p is None:
            return None
        return odds_factor * p / (1.0 - p + odds_factor * p)

    return replace(
        fit,
        p_hat=shift(fit.p_hat),
        restricted_p=shift(fit.restricted_p),
        control_p=shift(fit.control_p),
    )
