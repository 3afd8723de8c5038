"""Scenario presets and the seeded replication engine.

Five named scenarios span the heterogeneity/propensity patterns that matter
for ranking: extreme heterogeneity with extreme propensities (where the
residual regression's ordering flips), constant effects, effects
uncorrelated with the regression weights, uniform selection on gains, and
balanced assignment. The concrete tables live in YAML files shipped with
the package; ``preset`` loads them and asserts each scenario's defining
property against the closed-form oracle, so the scenario semantics are
checked rather than nominal.

Replicates are independent work items keyed by index: replicate ``r``
derives its sampling and fold seeds as ``child_seed(seed, r, purpose)``,
so results are bit-identical for any worker count.
"""

from __future__ import annotations

import functools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Iterator

import numpy as np
import yaml
from numpy.typing import NDArray

from . import rng
from .configio import ConfigError, dgp_from_dict, dgp_to_dict, learner_from_dict, learner_to_dict
from .dgp import StratifiedDGP, oracle_ate, oracle_decomposition, oracle_wate, sample
from .estimators import aipw_estimate, ipw_estimate, plm_estimate
from .nuisance import DEFAULT_CLIP, DEFAULT_NUM_FOLDS, LearnerSpec, assign_folds, fit_crossfit

METHODS = ("plm", "aipw", "ipw")

_DATA_STREAM = 0
_FOLD_STREAM = 1

_COV_ZERO_TOL = 1e-9


class ScenarioName(str, Enum):
    EXTREME_HETEROGENEITY = "extreme_heterogeneity"
    CONSTANT_EFFECTS = "constant_effects"
    UNCORRELATED = "uncorrelated"
    SELECTION_ON_GAINS = "selection_on_gains"
    BALANCED = "balanced"


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario: a DGP plus replication and fitting settings."""

    name: str
    dgp: StratifiedDGP
    n_per_rep: int
    num_reps: int
    seed: int
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    num_folds: int = DEFAULT_NUM_FOLDS
    clip: float = DEFAULT_CLIP

    def __post_init__(self) -> None:
        if self.n_per_rep < 1:
            raise ValueError(f"n_per_rep must be >= 1, got {self.n_per_rep}")
        if self.num_reps < 1:
            raise ValueError(f"num_reps must be >= 1, got {self.num_reps}")


@dataclass
class MonteCarloResult:
    """Replication study output.

    ``estimates[method]`` is a ``(num_reps, K)`` array of point estimates
    (NaN where a replicate's estimator failed). ``correct_ranking_rate`` is
    the fraction of replicates in which the method's descending ordering of
    point estimates matches the ordering of the oracle ATEs.
    ``runtime_seconds`` and ``workers`` are volatile: they are excluded from
    :meth:`canonical_bytes`, which is the determinism-relevant serialization.
    """

    scenario: str
    n_per_rep: int
    num_reps: int
    seed: int
    num_folds: int
    clip: float
    learner: LearnerSpec
    treatments: tuple[int, ...]
    oracle_ate: tuple[float, ...]
    oracle_wate: tuple[float, ...]
    estimates: dict[str, NDArray[np.float64]]
    correct_ranking_rate: dict[str, float]
    failure_count: int
    runtime_seconds: float
    workers: int

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.estimates)

    def bias(self) -> dict[str, dict[str, list[float | None]]]:
        """Mean estimate minus oracle target, against both targets.

        The residual regression is judged against the weighted target (and,
        for reference, the unweighted one); AIPW and IPW against the ATE.
        None marks a method whose every replicate failed for that treatment.
        """
        out: dict[str, dict[str, list[float | None]]] = {}
        for method, points in self.estimates.items():
            means = []
            for idx in range(points.shape[1]):
                finite = points[:, idx][np.isfinite(points[:, idx])]
                means.append(float(finite.mean()) if finite.size else None)
            out[method] = {
                "vs_ate": [None if m is None else m - t for m, t in zip(means, self.oracle_ate)],
                "vs_wate": [None if m is None else m - t for m, t in zip(means, self.oracle_wate)],
            }
        return out

    def to_dict(self, include_volatile: bool = True) -> dict:
        def listify(arr: NDArray) -> list:
            return [[None if np.isnan(v) else float(v) for v in row] for row in arr]

        out = {
            "scenario": self.scenario,
            "n_per_rep": self.n_per_rep,
            "num_reps": self.num_reps,
            "seed": self.seed,
            "num_folds": self.num_folds,
            "clip": self.clip,
            "learner": learner_to_dict(self.learner),
            "treatments": list(self.treatments),
            "methods": list(self.methods),
            "oracle_ate": list(self.oracle_ate),
            "oracle_wate": list(self.oracle_wate),
            "estimates": {m: listify(a) for m, a in self.estimates.items()},
            "bias": self.bias(),
            "correct_ranking_rate": dict(self.correct_ranking_rate),
            "failure_count": self.failure_count,
        }
        if include_volatile:
            out["runtime_seconds"] = self.runtime_seconds
            out["workers"] = self.workers
        return out

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: whole result minus wall-clock fields."""
        return json.dumps(
            self.to_dict(include_volatile=False), sort_keys=True, separators=(",", ":")
        ).encode()


def _points_ordering(points: NDArray) -> tuple[int, ...]:
    return tuple(sorted(range(1, points.shape[0] + 1), key=lambda j: (-points[j - 1], j)))


def _scenario_from_dict(raw: dict, context: str) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a mapping")
    try:
        return ScenarioConfig(
            name=str(raw.get("name", "custom")),
            dgp=dgp_from_dict(raw["dgp"], context=f"{context}.dgp") if "dgp" in raw else _missing(context),
            n_per_rep=int(raw.get("n_per_rep", 10_000)),
            num_reps=int(raw.get("num_reps", 1_000)),
            seed=int(raw.get("seed", 0)),
            learner=learner_from_dict(raw.get("learner", {}), context=f"{context}.learner"),
            num_folds=int(raw.get("num_folds", DEFAULT_NUM_FOLDS)),
            clip=float(raw.get("clip", DEFAULT_CLIP)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{context}: {exc}") from exc


def _missing(context: str):
    raise ConfigError(f"{context}: missing required field 'dgp'")


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "name": config.name,
        "n_per_rep": config.n_per_rep,
        "num_reps": config.num_reps,
        "seed": config.seed,
        "num_folds": config.num_folds,
        "clip": config.clip,
        "learner": learner_to_dict(config.learner),
        "dgp": dgp_to_dict(config.dgp),
    }


def load_scenario_config(path) -> ScenarioConfig:
    text = open(path).read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return _scenario_from_dict(raw, context=str(path))


def write_scenario_config(config: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(config), fh, sort_keys=False)


def preset(name: str | ScenarioName) -> ScenarioConfig:
    """Load a named scenario from the packaged config files and validate it."""
    try:
        scenario = ScenarioName(name)
    except ValueError:
        valid = ", ".join(s.value for s in ScenarioName)
        raise ValueError(f"unknown preset {name!r}; valid presets: {valid}") from None
    path = resources.files("treatrank").joinpath("configs", f"{scenario.value}.yaml")
    config = _scenario_from_dict(yaml.safe_load(path.read_text()), context=scenario.value)
    validate_scenario(config)
    return config


def validate_scenario(config: ScenarioConfig) -> None:
    """Assert the defining oracle property of a named scenario.

    Unknown names (custom scenarios) only get generic validation, which the
    constructors already performed.
    """
    try:
        scenario = ScenarioName(config.name)
    except ValueError:
        return
    dgp = config.dgp
    K = dgp.num_treatments
    decs = [oracle_decomposition(dgp, j) for j in range(1, K + 1)]
    covs = np.array([d.cov_tau_gamma for d in decs])
    effects_constant = [float(np.ptp(dgp.effect[j - 1])) == 0.0 for j in range(1, K + 1)]
    props_constant = [float(np.ptp(dgp.propensity[j - 1])) == 0.0 for j in range(1, K + 1)]

    def fail(msg: str) -> None:
        raise ValueError(f"scenario '{scenario.value}' violates its defining property: {msg}")

    if scenario is ScenarioName.EXTREME_HETEROGENEITY:
        if float(dgp.propensity.min()) > 0.05:
            fail("expected extreme propensity scores (min <= 0.05)")
        flips = [
            (a.ate - b.ate) * (a.wate - b.wate) < 0
            for i, a in enumerate(decs)
            for b in decs[i + 1 :]
        ]
        if not any(flips):
            fail("expected at least one oracle rank reversal")
    elif scenario is ScenarioName.CONSTANT_EFFECTS:
        if not all(effects_constant):
            fail("expected tau_j(x) constant in x for every treatment")
        if np.max(np.abs(covs)) > 1e-12:
            fail("expected zero effect-weight covariance")
    elif scenario is ScenarioName.UNCORRELATED:
        if np.max(np.abs(covs)) > _COV_ZERO_TOL:
            fail(f"expected zero effect-weight covariance, got {covs}")
        if any(effects_constant):
            fail("expected heterogeneous effects")
        if any(props_constant):
            fail("expected propensities that vary across strata")
    elif scenario is ScenarioName.SELECTION_ON_GAINS:
        if np.min(np.abs(covs)) < 0.01 or len(set(np.sign(covs))) != 1:
            fail(f"expected same-sign, nonzero covariances, got {covs}")
        gaps = [
            (abs(a.ate - b.ate), abs(a.cov_tau_gamma - b.cov_tau_gamma))
            for i, a in enumerate(decs)
            for b in decs[i + 1 :]
        ]
        if any(gap <= spread for gap, spread in gaps):
            fail("expected every ATE gap to exceed the covariance spread")
    elif scenario is ScenarioName.BALANCED:
        if not all(props_constant):
            fail("expected propensities equal across strata")
        if any(effects_constant):
            fail("expected heterogeneous effects")


def _run_replicate(config: ScenarioConfig, r: int) -> tuple[NDArray[np.float64], int]:
    """One replicate: sample, cross-fit, estimate. Returns ((3, K) points, failures)."""
    data_seed = rng.child_seed(config.seed, r, _DATA_STREAM)
    fold_seed = rng.child_seed(config.seed, r, _FOLD_STREAM)
    data = sample(config.dgp, config.n_per_rep, data_seed)
    folds = assign_folds(data.n, config.num_folds, fold_seed)
    fit = fit_crossfit(data, config.learner, folds, config.clip)
    K = data.num_treatments
    points = np.full((len(METHODS), K), np.nan)
    failures = 0
    estimator = {"plm": plm_estimate, "aipw": aipw_estimate, "ipw": ipw_estimate}
    for m, method in enumerate(METHODS):
        for j in range(1, K + 1):
            try:
                points[m, j - 1] = estimator[method](data, fit, j).point
            except Exception:
                failures += 1
    return points, failures


def run_scenario(config: ScenarioConfig, workers: int = 1) -> MonteCarloResult:
    """Run every replicate of a scenario, optionally on a process pool.

    Replicates are aggregated by index, so the result is identical for any
    worker count. Replicate-level estimation failures are recorded as NaN
    and counted, not raised.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    t0 = time.perf_counter()
    job = functools.partial(_run_replicate, config)
    indices = range(config.num_reps)
    if workers == 1:
        outcomes = [job(r) for r in indices]
    else:
        chunk = max(1, config.num_reps // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, indices, chunksize=chunk))

    points = np.stack([p for p, _ in outcomes])  # (reps, methods, K)
    failure_count = int(sum(f for _, f in outcomes))
    K = config.dgp.num_treatments
    treatments = tuple(range(1, K + 1))
    ate = tuple(oracle_ate(config.dgp, j) for j in treatments)
    wate = tuple(oracle_wate(config.dgp, j) for j in treatments)
    oracle_order = _points_ordering(np.array(ate))

    estimates = {m: points[:, i, :] for i, m in enumerate(METHODS)}
    rates = {}
    for m, arr in estimates.items():
        correct = 0
        for row in arr:
            if np.any(np.isnan(row)):
                continue
            if _points_ordering(row) == oracle_order:
                correct += 1
        rates[m] = correct / config.num_reps

    return MonteCarloResult(
        scenario=config.name,
        n_per_rep=config.n_per_rep,
        num_reps=config.num_reps,
        seed=config.seed,
        num_folds=config.num_folds,
        clip=config.clip,
        learner=config.learner,
        treatments=treatments,
        oracle_ate=ate,
        oracle_wate=wate,
        estimates=estimates,
        correct_ranking_rate=rates,
        failure_count=failure_count,
        runtime_seconds=time.perf_counter() - t0,
        workers=workers,
    )


def summarize(result: MonteCarloResult) -> list[dict]:
    """Per-method, per-treatment summary rows: moments, quantiles, bias, rates."""
    if result.num_reps < 1 or not result.estimates:
        raise ValueError("cannot summarize an empty result")
    bias = result.bias()
    rows = []
    for method, arr in result.estimates.items():
        for idx, j in enumerate(result.treatments):
            col = arr[:, idx]
            finite = col[np.isfinite(col)]
            if finite.size == 0:
                raise ValueError(f"no successful replicates for {method}, treatment {j}")
            q025, q500, q975 = np.percentile(finite, [2.5, 50.0, 97.5])
            rows.append(
                {
                    "scenario": result.scenario,
                    "method": method,
                    "treatment": j,
                    "mean": float(finite.mean()),
                    "sd": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
                    "q025": float(q025),
                    "q500": float(q500),
                    "q975": float(q975),
                    "oracle_ate": result.oracle_ate[idx],
                    "oracle_wate": result.oracle_wate[idx],
                    "bias_vs_ate": bias[method]["vs_ate"][idx],
                    "bias_vs_wate": bias[method]["vs_wate"][idx],
                    "correct_ranking_rate": result.correct_ranking_rate[method],
                    "failures": result.failure_count,
                }
            )
    return rows


def replicate_rows(result: MonteCarloResult) -> Iterator[dict]:
    """One row per replicate x method x treatment, for external plotting."""
    for method, arr in result.estimates.items():
        for r in range(result.num_reps):
            for idx, j in enumerate(result.treatments):
                v = arr[r, idx]
                yield {
                    "replicate": r,
                    "method": method,
                    "treatment": j,
                    "estimate": None if np.isnan(v) else float(v),
                }


def histogram_rows(result: MonteCarloResult, bins: int = 40) -> Iterator[dict]:
    """Binned estimate counts per method x treatment (histogram plot data)."""
    for method, arr in result.estimates.items():
        for idx, j in enumerate(result.treatments):
            finite = arr[:, idx][np.isfinite(arr[:, idx])]
            if finite.size == 0:
                continue
            counts, edges = np.histogram(finite, bins=bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                yield {
                    "method": method,
                    "treatment": j,
                    "bin_left": float(lo),
                    "bin_right": float(hi),
                    "count": int(c),
                }


def scaled(config: ScenarioConfig, n_per_rep: int | None = None, num_reps: int | None = None,
           seed: int | None = None, num_folds: int | None = None,
           learner: LearnerSpec | None = None, clip: float | None = None) -> ScenarioConfig:
    """Copy a scenario with some settings overridden (tables untouched)."""
    updates = {
        k: v
        for k, v in {
            "n_per_rep": n_per_rep,
            "num_reps": num_reps,
            "seed": seed,
            "num_folds": num_folds,
            "learner": learner,
            "clip": clip,
        }.items()
        if v is not None
    }
    return replace(config, **updates)
