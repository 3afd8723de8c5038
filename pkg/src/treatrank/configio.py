"""Config-file and dataset-file formats.

DGP and scenario configs are single human-editable YAML documents whose
tables mirror :class:`~treatrank.dgp.StratifiedDGP`. Datasets travel as
minimal CSV: ``y,w,x`` with an arm label per unit (0 = control) for
mutually exclusive treatments, or ``y,w1,...,wK,x`` with one indicator
column per treatment for parallel assignment. Rows with blank fields are
rejected; there is no missing-data handling.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .dgp import AssignmentMode, Dataset, StratifiedDGP
from .nuisance import Basis, LearnerKind, LearnerSpec


class ConfigError(ValueError):
    """Raised for malformed config or dataset files."""


def _require(mapping: dict, key: str, context: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{context}: missing required field '{key}'")
    return mapping[key]


def dgp_to_dict(dgp: StratifiedDGP) -> dict:
    codes = [int(c) for c in dgp.stratum_codes]
    return {
        "strata": [{"id": s, "probability": p} for s, p in dgp.strata],
        "num_treatments": dgp.num_treatments,
        "assignment_mode": dgp.assignment_mode.value,
        "noise_sd": float(dgp.noise_sd),
        "baseline": {c: float(v) for c, v in zip(codes, dgp.baseline)},
        "propensity": {
            j: {c: float(v) for c, v in zip(codes, dgp.propensity[j - 1])}
            for j in range(1, dgp.num_treatments + 1)
        },
        "effect": {
            j: {c: float(v) for c, v in zip(codes, dgp.effect[j - 1])}
            for j in range(1, dgp.num_treatments + 1)
        },
    }


def dgp_from_dict(raw: dict, context: str = "dgp") -> StratifiedDGP:
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(raw).__name__}")
    strata_raw = _require(raw, "strata", context)
    try:
        strata = tuple(
            (int(_require(s, "id", f"{context}.strata")), float(_require(s, "probability", f"{context}.strata")))
            for s in strata_raw
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}.strata: expected a list of {{id, probability}} entries ({exc})")
    codes = [s for s, _ in strata]
    K = int(_require(raw, "num_treatments", context))

    def table(name: str) -> np.ndarray:
        tab = _require(raw, name, context)
        rows = []
        for j in range(1, K + 1):
            if j not in tab:
                raise ConfigError(f"{context}.{name}: missing row for treatment {j}")
            row = tab[j]
            missing = [c for c in codes if c not in row]
            if missing:
                raise ConfigError(f"{context}.{name}[{j}]: missing strata {missing}")
            rows.append([float(row[c]) for c in codes])
        return np.array(rows)

    baseline_raw = _require(raw, "baseline", context)
    missing = [c for c in codes if c not in baseline_raw]
    if missing:
        raise ConfigError(f"{context}.baseline: missing strata {missing}")
    baseline = np.array([float(baseline_raw[c]) for c in codes])

    try:
        return StratifiedDGP(
            strata=strata,
            num_treatments=K,
            propensity=table("propensity"),
            effect=table("effect"),
            baseline=baseline,
            noise_sd=float(raw.get("noise_sd", 1.0)),
            assignment_mode=AssignmentMode(raw.get("assignment_mode", "parallel_binary")),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def learner_from_dict(raw: dict, context: str = "learner") -> LearnerSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a mapping")
    try:
        return LearnerSpec(
            kind=LearnerKind(raw.get("kind", "stratum_mean")),
            ridge_penalty=float(raw.get("ridge_penalty", 0.0)),
            basis=Basis(raw.get("basis", "stratum_dummies")),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def learner_to_dict(spec: LearnerSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "ridge_penalty": float(spec.ridge_penalty),
        "basis": spec.basis.value,
    }


def _load_yaml(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a top-level mapping")
    return raw


def load_dgp_config(path: str | Path) -> StratifiedDGP:
    raw = _load_yaml(path)
    # accept either a bare DGP document or one nested under 'dgp'
    return dgp_from_dict(raw.get("dgp", raw), context=str(path))


def packaged_config_path(name: str) -> Path:
    """Path to a config file shipped inside the package (``configs/``)."""
    path = Path(str(resources.files("treatrank").joinpath("configs", name)))
    if not path.exists():
        raise ConfigError(f"no packaged config named {name!r}")
    return path


def write_dgp_config(dgp: StratifiedDGP, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(dgp_to_dict(dgp), sort_keys=False))


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset CSV in either the arm-label or indicator layout."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header == ["y", "w", "x"]:
            layout = "arm"
        elif (
            len(header) >= 3
            and header[0] == "y"
            and header[-1] == "x"
            and all(h == f"w{i}" for i, h in enumerate(header[1:-1], start=1))
        ):
            layout = "indicator"
        else:
            raise ConfigError(
                f"{path}: unsupported header {header}; expected y,w,x or y,w1,...,wK,x"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header) or any(cell.strip() == "" for cell in row):
                raise ConfigError(f"{path}:{lineno}: blank or missing fields are not allowed")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    arr = np.array(rows)
    y = arr[:, 0]
    x = arr[:, -1]
    if np.any(x != np.round(x)):
        raise ConfigError(f"{path}: stratum codes must be integers")
    if layout == "arm":
        arm = arr[:, 1]
        if np.any(arm != np.round(arm)) or np.any(arm < 0):
            raise ConfigError(f"{path}: arm labels must be non-negative integers")
        arm = arm.astype(np.int64)
        K = int(arm.max())
        if K < 1:
            raise ConfigError(f"{path}: no treated units; cannot infer the number of treatments")
        w = np.zeros((arr.shape[0], K), dtype=np.int8)
        treated = arm > 0
        w[np.nonzero(treated)[0], arm[treated] - 1] = 1
        mode = AssignmentMode.MULTINOMIAL
    else:
        w = arr[:, 1:-1]
        if np.any((w != 0) & (w != 1)):
            raise ConfigError(f"{path}: indicator columns must be 0/1")
        w = w.astype(np.int8)
        mode = AssignmentMode.PARALLEL_BINARY
    return Dataset(y=y, w=w, x=x.astype(np.int64), assignment_mode=mode)


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    """Write the arm-label layout for multinomial data, indicators otherwise."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if data.assignment_mode is AssignmentMode.MULTINOMIAL:
            writer.writerow(["y", "w", "x"])
            for y, a, x in zip(data.y, data.arm, data.x):
                writer.writerow([repr(float(y)), int(a), int(x)])
        else:
            writer.writerow(["y"] + [f"w{j}" for j in range(1, data.num_treatments + 1)] + ["x"])
            for i in range(data.n):
                writer.writerow(
                    [repr(float(data.y[i]))] + [int(v) for v in data.w[i]] + [int(data.x[i])]
                )
