"""Discrete-strata data-generating processes and their closed-form estimands.

A :class:`StratifiedDGP` lives on a finite set of covariate strata and is
fully described by tables: stratum probabilities, per-treatment propensity
scores ``p_j(x)``, per-treatment effects ``tau_j(x)``, and a baseline outcome
mean ``mu0(x)``. Because everything is tabular, the estimands that the
estimators chase are available in closed form:

* ``oracle_ate``: the unweighted mean effect ``E[tau_j(X)]``;
* ``oracle_weights``: the regression weights
  ``gamma_j(x) = p_j(x)(1 - p_j(x)) / E[p_j(X)(1 - p_j(X))]``, normalized to
  mean one, which up-weight strata with propensities near one half;
* ``oracle_wate``: the variance-weighted mean effect
  ``E[gamma_j(X) tau_j(X)]``, the probability limit of the
  residual-on-residual regression coefficient;
* ``oracle_decomposition``: the additive split
  ``WATE = ATE + Cov(tau_j(X), gamma_j(X))``.

Sampling is deterministic given ``(dgp, n, seed)`` and uses separate Philox
substreams for the stratum draw, treatment draw, and outcome noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from . import rng

PROB_TOL = 1e-12


class OverlapError(ValueError):
    """Raised when a propensity table violates strict overlap."""


class AssignmentMode(str, Enum):
    """How treatment indicators are generated.

    PARALLEL_BINARY draws each treatment indicator independently from its own
    marginal propensity; a unit may receive several treatments, and their
    effects enter the outcome additively. MULTINOMIAL draws a single arm per
    unit, with control receiving the leftover probability mass.
    """

    PARALLEL_BINARY = "parallel_binary"
    MULTINOMIAL = "multinomial"


@dataclass(frozen=True, eq=False)
class StratifiedDGP:
    """Data-generating process on discrete covariate strata.

    Parameters
    ----------
    strata : tuple of (int, float)
        ``(stratum_code, probability)`` pairs; probabilities sum to one.
    num_treatments : int
        Number of treatments ``K``; treatment indices run 1..K and 0 denotes
        control.
    propensity : ndarray of shape (K, S)
        ``propensity[j-1, s]`` is ``p_j(x_s)``, strictly inside (0, 1).
    effect : ndarray of shape (K, S)
        ``effect[j-1, s]`` is ``tau_j(x_s)``.
    baseline : ndarray of shape (S,)
        Control-arm outcome mean ``mu0(x_s)``.
    noise_sd : float
        Standard deviation of the additive Gaussian outcome noise.
    assignment_mode : AssignmentMode
        Treatment assignment scheme; under MULTINOMIAL the per-stratum
        propensities must sum to strictly less than one.
    """

    strata: tuple[tuple[int, float], ...]
    num_treatments: int
    propensity: NDArray[np.float64]
    effect: NDArray[np.float64]
    baseline: NDArray[np.float64]
    noise_sd: float = 1.0
    assignment_mode: AssignmentMode = AssignmentMode.PARALLEL_BINARY

    def __post_init__(self) -> None:
        strata = tuple((int(s), float(p)) for s, p in self.strata)
        object.__setattr__(self, "strata", strata)
        for name in ("propensity", "effect", "baseline"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "assignment_mode", AssignmentMode(self.assignment_mode))

        S = len(strata)
        K = self.num_treatments
        if K < 1:
            raise ValueError(f"num_treatments must be >= 1, got {K}")
        if S < 1:
            raise ValueError("at least one stratum is required")
        codes = [s for s, _ in strata]
        if len(set(codes)) != S:
            raise ValueError(f"duplicate stratum codes: {codes}")
        probs = np.array([p for _, p in strata])
        if np.any(probs < 0):
            raise ValueError("stratum probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(
                f"stratum probabilities must sum to 1 within {PROB_TOL}, got {probs.sum()!r}"
            )
        if self.propensity.shape != (K, S):
            raise ValueError(
                f"propensity table must have shape ({K}, {S}), got {self.propensity.shape}"
            )
        if self.effect.shape != (K, S):
            raise ValueError(f"effect table must have shape ({K}, {S}), got {self.effect.shape}")
        if self.baseline.shape != (S,):
            raise ValueError(f"baseline must have shape ({S},), got {self.baseline.shape}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if np.any(self.propensity <= 0.0) or np.any(self.propensity >= 1.0):
            raise OverlapError("all propensities must lie strictly in (0, 1)")
        if self.assignment_mode is AssignmentMode.MULTINOMIAL:
            totals = self.propensity.sum(axis=0)
            if np.any(totals >= 1.0):
                raise OverlapError(
                    "multinomial arm propensities must sum to < 1 in every stratum "
                    f"(control mass is the remainder); got column sums {totals}"
                )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StratifiedDGP):
            return NotImplemented
        return (
            self.strata == other.strata
            and self.num_treatments == other.num_treatments
            and np.array_equal(self.propensity, other.propensity)
            and np.array_equal(self.effect, other.effect)
            and np.array_equal(self.baseline, other.baseline)
            and self.noise_sd == other.noise_sd
            and self.assignment_mode is other.assignment_mode
        )

    @property
    def num_strata(self) -> int:
        return len(self.strata)

    @property
    def stratum_codes(self) -> NDArray[np.int64]:
        return np.array([s for s, _ in self.strata], dtype=np.int64)

    @property
    def stratum_probs(self) -> NDArray[np.float64]:
        return np.array([p for _, p in self.strata], dtype=np.float64)

    def stratum_index(self, codes: NDArray) -> NDArray[np.int64]:
        """Map stratum codes to row positions of the tables."""
        lookup = {s: i for i, (s, _) in enumerate(self.strata)}
        try:
            return np.array([lookup[int(c)] for c in np.asarray(codes).ravel()], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"unknown stratum code {exc.args[0]}") from None

    def _check_treatment(self, j: int) -> int:
        if not 1 <= j <= self.num_treatments:
            raise ValueError(f"treatment index must be in 1..{self.num_treatments}, got {j}")
        return int(j)


@dataclass(frozen=True)
class OracleQuantities:
    """Closed-form estimands of one treatment: ATE, WATE, and their gap."""

    treatment: int
    ate: float
    wate: float
    cov_tau_gamma: float
    gamma: NDArray[np.float64]


@dataclass(eq=False)
class Dataset:
    """Sampled units: outcome, treatment indicator matrix, stratum codes.

    ``w`` has one 0/1 column per treatment. Under MULTINOMIAL assignment the
    rows are one-hot (all-zero rows are control units).
    """

    y: NDArray[np.float64]
    w: NDArray[np.int8]
    x: NDArray[np.int64]
    assignment_mode: AssignmentMode = AssignmentMode.PARALLEL_BINARY

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.int8)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.assignment_mode = AssignmentMode(self.assignment_mode)
        if self.w.ndim != 2 or not (self.y.shape[0] == self.w.shape[0] == self.x.shape[0]):
            raise ValueError("y, w, x must share the unit dimension and w must be 2-D")
        if self.assignment_mode is AssignmentMode.MULTINOMIAL and np.any(self.w.sum(axis=1) > 1):
            raise ValueError("multinomial datasets must have mutually exclusive arms")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.x, other.x)
            and self.assignment_mode is other.assignment_mode
        )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def num_treatments(self) -> int:
        return self.w.shape[1]

    @property
    def arm(self) -> NDArray[np.int64]:
        """Per-unit arm label (0 = control); only meaningful under MULTINOMIAL."""
        if self.assignment_mode is not AssignmentMode.MULTINOMIAL:
            raise ValueError("arm labels are only defined for multinomial datasets")
        return (self.w * np.arange(1, self.num_treatments + 1)).sum(axis=1).astype(np.int64)

    def indicator(self, j: int) -> NDArray[np.int8]:
        """0/1 indicator of receiving treatment ``j``."""
        return self.w[:, j - 1]

    def control_indicator(self, j: int) -> NDArray[np.int8]:
        """0/1 indicator of the control condition facing treatment ``j``.

        PARALLEL_BINARY: not receiving treatment ``j``. MULTINOMIAL: being in
        the control arm.
        """
        if self.assignment_mode is AssignmentMode.PARALLEL_BINARY:
            return (1 - self.w[:, j - 1]).astype(np.int8)
        return (self.w.sum(axis=1) == 0).astype(np.int8)

    def restriction_mask(self, j: int) -> NDArray[np.bool_]:
        """Units entering treatment ``j``'s pairwise comparison.

        All units under PARALLEL_BINARY; units with arm in {0, j} under
        MULTINOMIAL.
        """
        if self.assignment_mode is AssignmentMode.PARALLEL_BINARY:
            return np.ones(self.n, dtype=bool)
        return (self.indicator(j) == 1) | (self.w.sum(axis=1) == 0)


def oracle_weights(dgp: StratifiedDGP, j: int) -> NDArray[np.float64]:
    """Per-stratum regression weights for treatment ``j``.

    ``gamma_j(x) = p_j(x)(1 - p_j(x)) / sum_x Pr(x) p_j(x)(1 - p_j(x))``; the
    probability-weighted mean of the result is one.
    """
    j = dgp._check_treatment(j)
    p = dgp.propensity[j - 1]
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise OverlapError(f"treatment {j} has degenerate propensities: {p}")
    variance = p * (1.0 - p)
    return variance / float(dgp.stratum_probs @ variance)


def oracle_ate(dgp: StratifiedDGP, j: int) -> float:
    """Average treatment effect of ``j``: ``sum_x Pr(x) tau_j(x)``."""
    j = dgp._check_treatment(j)
    return float(dgp.stratum_probs @ dgp.effect[j - 1])


def oracle_wate(dgp: StratifiedDGP, j: int) -> float:
    """Weighted ATE of ``j``: ``sum_x Pr(x) gamma_j(x) tau_j(x)``."""
    j = dgp._check_treatment(j)
    return float(dgp.stratum_probs @ (oracle_weights(dgp, j) * dgp.effect[j - 1]))


def oracle_decomposition(dgp: StratifiedDGP, j: int) -> OracleQuantities:
    """ATE, WATE, and their covariance gap, each computed independently.

    The covariance term is evaluated as ``E[gamma tau] - E[gamma] E[tau]``
    rather than as ``wate - ate``, so the additive identity is a genuine
    cross-check instead of a tautology.
    """
    j = dgp._check_treatment(j)
    probs = dgp.stratum_probs
    tau = dgp.effect[j - 1]
    gamma = oracle_weights(dgp, j)
    ate = float(probs @ tau)
    wate = float(probs @ (gamma * tau))
    cov = float(probs @ (gamma * tau)) - float(probs @ gamma) * ate
    return OracleQuantities(treatment=j, ate=ate, wate=wate, cov_tau_gamma=cov, gamma=gamma)


def sample(dgp: StratifiedDGP, n: int, seed: int) -> Dataset:
    """Draw ``n`` units from the DGP, deterministically in ``(dgp, n, seed)``.

    The stratum draw, treatment draw, and outcome noise each consume their own
    substream, so enlarging one table never perturbs the others' draws.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    K = dgp.num_treatments

    stratum_rng = rng.substream(seed, rng.STRATUM)
    treatment_rng = rng.substream(seed, rng.TREATMENT)
    noise_rng = rng.substream(seed, rng.NOISE)

    cum = np.cumsum(dgp.stratum_probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, stratum_rng.random(n), side="right")
    x = dgp.stratum_codes[idx]

    p = dgp.propensity[:, idx]  # (K, n)
    if dgp.assignment_mode is AssignmentMode.PARALLEL_BINARY:
        w = (treatment_rng.random((K, n)) < p).T.astype(np.int8)
    else:
        u = treatment_rng.random(n)
        arm_cum = np.cumsum(p, axis=0)  # (K, n)
        below = np.sum(u[None, :] >= arm_cum, axis=0)  # draws past all K arms -> control
        arm = np.where(below < K, below + 1, 0)
        w = np.zeros((n, K), dtype=np.int8)
        treated = arm > 0
        w[np.nonzero(treated)[0], arm[treated] - 1] = 1

    y = dgp.baseline[idx] + (dgp.effect[:, idx] * w.T).sum(axis=0)
    if dgp.noise_sd > 0:
        y = y + noise_rng.normal(0.0, dgp.noise_sd, size=n)
    return Dataset(y=y, w=w, x=x, assignment_mode=dgp.assignment_mode)


def random_dgp(
    seed: int | np.random.Generator,
    num_treatments: int = 2,
    min_strata: int = 2,
    max_strata: int = 10,
    propensity_range: tuple[float, float] = (0.01, 0.99),
    effect_range: tuple[float, float] = (-3.0, 3.0),
    noise_sd: float = 1.0,
    assignment_mode: AssignmentMode = AssignmentMode.PARALLEL_BINARY,
) -> StratifiedDGP:
    """Draw a random DGP with uniform tables; useful for property sweeps."""
    gen = seed if isinstance(seed, np.random.Generator) else rng.substream(seed)
    S = int(gen.integers(min_strata, max_strata + 1))
    K = num_treatments
    probs = gen.dirichlet(np.ones(S))
    probs = probs / probs.sum()
    lo, hi = propensity_range
    propensity = gen.uniform(lo, hi, size=(K, S))
    if assignment_mode is AssignmentMode.MULTINOMIAL:
        # scale columns so arm masses leave room for control
        totals = propensity.sum(axis=0)
        scale = np.minimum(1.0, 0.9 / totals)
        propensity = np.maximum(propensity * scale, lo)
    effect = gen.uniform(effect_range[0], effect_range[1], size=(K, S))
    baseline = gen.uniform(-1.0, 1.0, size=S)
    return StratifiedDGP(
        strata=tuple((i, float(p)) for i, p in enumerate(probs)),
        num_treatments=K,
        propensity=propensity,
        effect=effect,
        baseline=baseline,
        noise_sd=noise_sd,
        assignment_mode=assignment_mode,
    )


def extreme_heterogeneity_dgp() -> StratifiedDGP:
    """Two-treatment DGP with a binary stratum, extreme propensities, and
    opposite-sign effect heterogeneity; the canonical rank-reversal example."""
    return StratifiedDGP(
        strata=((0, 0.5), (1, 0.5)),
        num_treatments=2,
        propensity=np.array([[0.01, 0.5], [0.5, 0.01]]),
        effect=np.array([[-3.0, 3.0], [-2.0, 3.0]]),
        baseline=np.array([0.0, 1.0]),
        noise_sd=1.0,
        assignment_mode=AssignmentMode.PARALLEL_BINARY,
    )
