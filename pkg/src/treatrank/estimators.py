"""Point estimators for treatment effects, built on cross-fitted nuisances.

Three estimators with two distinct targets:

* ``plm_estimate``: the residual-on-residual regression coefficient
  ``sum(w_res * y_res) / sum(w_res**2)``. Under effect heterogeneity its
  probability limit is the variance-weighted WATE, not the ATE.
* ``aipw_estimate``: mean of pseudo-outcome contrasts; doubly robust and
  consistent for the ATE at any level of heterogeneity.
* ``ipw_estimate``: Horvitz-Thompson inverse-propensity contrast, also
  ATE-targeting.

All three are pure functions of (data, fit) and safe to evaluate
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .dgp import Dataset
from .nuisance import NuisanceFit


class NoVariationError(RuntimeError):
    """Raised when the treatment residuals carry no variation to regress on."""


class Method(str, Enum):
    PLM = "plm"
    AIPW = "aipw"
    IPW = "ipw"


class Estimand(str, Enum):
    WATE = "wate"
    ATE = "ate"


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate with its standard error and declared target."""

    treatment: int
    method: Method
    point: float
    std_error: float
    estimand: Estimand
    n_used: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.std_error) or self.std_error < 0:
            raise ValueError(f"std_error must be finite and >= 0, got {self.std_error}")
        if (self.estimand is Estimand.WATE) != (self.method is Method.PLM):
            raise ValueError("WATE is the estimand of PLM and of PLM only")


@dataclass(frozen=True)
class PseudoOutcomes:
    """Per-unit doubly-robust scores.

    ``treated[:, j-1]`` estimates the potential-outcome mean under treatment
    ``j``; ``control[:, j-1]`` the mean under treatment ``j``'s control
    condition. Under MULTINOMIAL assignment all control columns coincide
    (there is a single control arm); under PARALLEL_BINARY each treatment has
    its own complement.
    """

    treated: NDArray[np.float64]
    control: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.treated.shape[0]

    @property
    def num_treatments(self) -> int:
        return self.treated.shape[1]

    def effect_score(self, j: int) -> NDArray[np.float64]:
        """Per-unit score whose mean estimates treatment ``j``'s ATE."""
        return self.treated[:, j - 1] - self.control[:, j - 1]

    def contrast(self, a: int, b: int) -> NDArray[np.float64]:
        """Per-unit score whose mean estimates ``ATE_a - ATE_b`` (index 0 = control)."""
        for arm in (a, b):
            if not 0 <= arm <= self.num_treatments:
                raise ValueError(f"arm index must be in 0..{self.num_treatments}, got {arm}")
        if a == b:
            return np.zeros(self.n)
        if b == 0:
            return self.effect_score(a)
        if a == 0:
            return -self.effect_score(b)
        return self.effect_score(a) - self.effect_score(b)


def pseudo_outcomes(data: Dataset, fit: NuisanceFit) -> PseudoOutcomes:
    """Doubly-robust pseudo-outcomes for every arm.

    For arm membership indicator ``D`` with probability ``q`` and outcome
    model ``m``: ``score = m(X) + D * (Y - m(X)) / q(X)``. Finiteness is
    guaranteed by propensity clipping upstream (see ``fit.clipped_count``).
    """
    K = data.num_treatments
    n = data.n
    treated = np.empty((n, K))
    control = np.empty((n, K))
    for j in range(1, K + 1):
        d = data.indicator(j).astype(np.float64)
        mu1 = fit.treated_outcome(j)
        treated[:, j - 1] = mu1 + d * (data.y - mu1) / fit.arm_probability(j)

        c = data.control_indicator(j).astype(np.float64)
        mu0 = fit.control_outcome(j)
        control[:, j - 1] = mu0 + c * (data.y - mu0) / fit.control_probability(j)
    return PseudoOutcomes(treated=treated, control=control)


def plm_estimate(data: Dataset, fit: NuisanceFit, j: int) -> EffectEstimate:
    """Residual-on-residual regression coefficient for treatment ``j``.

    Regresses ``Y - E_hat[Y|X]`` on ``W_j - p_hat_j(X)`` through the origin;
    the reported standard error is the heteroskedasticity-robust (sandwich)
    slope SE. Under MULTINOMIAL assignment the regression runs on the
    {control, j} subsample with the conditional propensity.
    """
    mask = data.restriction_mask(j)
    w_res = data.indicator(j)[mask].astype(np.float64) - fit.plm_propensity(j)[mask]
    y_res = data.y[mask] - fit.plm_outcome(j)[mask]

    denom = float(w_res @ w_res)
    if denom <= 0.0:
        raise NoVariationError(
            f"treatment {j} residuals have zero variation; cannot run the residual regression"
        )
    point = float(w_res @ y_res) / denom
    resid = y_res - point * w_res
    se = float(np.sqrt((w_res**2) @ (resid**2))) / denom
    return EffectEstimate(
        treatment=j,
        method=Method.PLM,
        point=point,
        std_error=se,
        estimand=Estimand.WATE,
        n_used=int(mask.sum()),
    )


def aipw_estimate(data: Dataset, fit: NuisanceFit, a: int, b: int = 0) -> EffectEstimate:
    """Augmented inverse-propensity estimate of ``ATE_a - ATE_b``.

    With ``b = 0`` this is treatment ``a``'s effect versus control. The point
    is the mean pseudo-outcome contrast and the standard error its sample
    standard deviation over sqrt(n).
    """
    scores = pseudo_outcomes(data, fit).contrast(a, b)
    point = float(scores.mean())
    se = float(scores.std(ddof=1) / np.sqrt(data.n)) if data.n > 1 else 0.0
    if a == b:
        point, se = 0.0, 0.0
    return EffectEstimate(
        treatment=a,
        method=Method.AIPW,
        point=point,
        std_error=se,
        estimand=Estimand.ATE,
        n_used=data.n,
    )


def ipw_estimate(data: Dataset, fit: NuisanceFit, j: int) -> EffectEstimate:
    """Horvitz-Thompson inverse-propensity estimate of treatment ``j``'s ATE.

    ``mean(1{arm j} Y / p_j) - mean(1{control} Y / p_control)`` with the
    control condition as in :meth:`Dataset.control_indicator`.
    """
    d = data.indicator(j).astype(np.float64)
    c = data.control_indicator(j).astype(np.float64)
    scores = d * data.y / fit.arm_probability(j) - c * data.y / fit.control_probability(j)
    point = float(scores.mean())
    se = float(scores.std(ddof=1) / np.sqrt(data.n)) if data.n > 1 else 0.0
    return EffectEstimate(
        treatment=j,
        method=Method.IPW,
        point=point,
        std_error=se,
        estimand=Estimand.ATE,
        n_used=data.n,
    )


def estimate_all(
    data: Dataset, fit: NuisanceFit, methods: tuple[Method, ...] = tuple(Method)
) -> list[EffectEstimate]:
    """Run the requested estimators for every treatment versus control."""
    dispatch = {
        Method.PLM: plm_estimate,
        Method.AIPW: aipw_estimate,
        Method.IPW: ipw_estimate,
    }
    return [
        dispatch[m](data, fit, j)
        for m in methods
        for j in range(1, data.num_treatments + 1)
    ]
