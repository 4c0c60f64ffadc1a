"""File formats: cohort CSV ingestion, run configuration, model persistence.

All on-disk formats are plain text.  Cohort files are long-format CSV
(one row per patient per timestamp, empty fields meaning missing); the
run configuration is JSON mirroring :class:`RunConfig`; models are
versioned JSON whose floats round-trip exactly at double precision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ctmc import GeneratorMatrix
from .emissions import MISSING, BinningScheme, FeatureBinning, EmissionTable, discretize
from .errors import (
    DuplicateTimestamp,
    EmptyCohort,
    InvariantViolation,
    ParseError,
    SubtypingError,
    UnknownColumn,
    VersionMismatch,
)
from .inference import SubtypeModel, Trajectory
from .learning import EmConfig
from .mixture import MixtureModel

MODEL_FORMAT = "cthmm-subtyping-mixture"
MODEL_VERSION = 1

DEFAULT_FEATURES = (
    FeatureBinning(name="heart_rate", lower=40.0, upper=150.0, bins=5),
    FeatureBinning(name="systolic_bp", lower=40.0, upper=200.0, bins=5),
)


@dataclass
class RunConfig:
    """Everything a command-line run needs, loadable from one JSON file."""

    scheme: BinningScheme = field(default_factory=lambda: BinningScheme(DEFAULT_FEATURES))
    eval_features: tuple[str, ...] | None = None
    intervention_feature: str | None = None
    subtypes: list[int] = field(default_factory=lambda: [1])
    states: list[int] = field(default_factory=lambda: [1])
    left_to_right: bool = False
    terminal_intervention: bool = False
    train_fraction: float = 0.8
    prefix_fraction: float = 0.7
    seed: int = 0
    time_unit: str = "hours"
    em: EmConfig = field(default_factory=EmConfig)
    sim_patients: int = 100
    sim_missing_rate: float = 0.2
    sim_mean_gap: float = 1.0
    sim_min_observations: int = 5
    sim_max_observations: int = 40

    def __post_init__(self) -> None:
        if not 0 < self.train_fraction < 1 or not 0 < self.prefix_fraction < 1:
            raise InvariantViolation("split fractions must lie strictly between 0 and 1")
        names = self.scheme.names
        if self.intervention_feature is not None and self.intervention_feature not in names:
            raise InvariantViolation(
                f"intervention feature {self.intervention_feature!r} is not configured"
            )
        if self.eval_features is not None:
            for name in self.eval_features:
                if name not in names:
                    raise InvariantViolation(f"evaluation feature {name!r} is not configured")
        if self.terminal_intervention and self.intervention_feature is None:
            raise InvariantViolation(
                "terminal intervention requires an intervention feature"
            )

    def em_config(self) -> EmConfig:
        """EM settings with the structural flags folded in."""
        updates: dict = {}
        if self.left_to_right:
            updates["structure"] = "left-to-right"
        if self.terminal_intervention:
            updates["terminal_intervention_feature"] = self.scheme.index(
                self.intervention_feature
            )
        if updates:
            return replace(self.em, **updates)
        return self.em


def load_config(path: str | Path) -> RunConfig:
    """Read a JSON run configuration."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from err
    return config_from_dict(payload)


def config_from_dict(payload: dict) -> RunConfig:
    try:
        features = tuple(
            FeatureBinning(
                name=f["name"],
                lower=float(f["lower"]),
                upper=float(f["upper"]),
                bins=int(f.get("bins", 5)),
            )
            for f in payload.get("features", [])
        )
        scheme = BinningScheme(features) if features else BinningScheme(DEFAULT_FEATURES)
        em_payload = dict(payload.get("em", {}))
        if "rate_bounds" in em_payload:
            em_payload["rate_bounds"] = tuple(em_payload["rate_bounds"])
        if "seed" not in em_payload and "seed" in payload:
            em_payload["seed"] = int(payload["seed"])
        em = EmConfig(**em_payload)

        def int_list(value) -> list[int]:
            if isinstance(value, (int, float)):
                return [int(value)]
            return [int(v) for v in value]

        return RunConfig(
            scheme=scheme,
            eval_features=(
                tuple(payload["eval_features"]) if payload.get("eval_features") else None
            ),
            intervention_feature=payload.get("intervention_feature"),
            subtypes=int_list(payload.get("subtypes", 1)),
            states=int_list(payload.get("states", 1)),
            left_to_right=bool(payload.get("left_to_right", False)),
            terminal_intervention=bool(payload.get("terminal_intervention", False)),
            train_fraction=float(payload.get("train_fraction", 0.8)),
            prefix_fraction=float(payload.get("prefix_fraction", 0.7)),
            seed=int(payload.get("seed", 0)),
            time_unit=str(payload.get("time_unit", "hours")),
            em=em,
            sim_patients=int(payload.get("simulate", {}).get("patients", 100)),
            sim_missing_rate=float(payload.get("simulate", {}).get("missing_rate", 0.2)),
            sim_mean_gap=float(payload.get("simulate", {}).get("mean_gap", 1.0)),
            sim_min_observations=int(payload.get("simulate", {}).get("min_observations", 5)),
            sim_max_observations=int(payload.get("simulate", {}).get("max_observations", 40)),
        )
    except SubtypingError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"bad configuration: {err}") from err


def load_cohort(path: str | Path, scheme: BinningScheme) -> list[Trajectory]:
    """Read a long-format cohort CSV and discretize it.

    Required columns: ``patient_id``, ``time``, plus one column per
    configured feature.  Empty feature fields and out-of-range values both
    ingest as missing.  Rows are grouped by patient (order of first
    appearance) and sorted by time; duplicate (patient, time) rows are
    rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise EmptyCohort(f"{path}: no header row")
        for column in ("patient_id", "time", *scheme.names):
            if column not in reader.fieldnames:
                raise UnknownColumn(f"{path}: missing required column {column!r}")

        rows: dict[str, list[tuple[float, list[int]]]] = {}
        for line_no, row in enumerate(reader, start=2):
            pid = (row.get("patient_id") or "").strip()
            if not pid:
                raise ParseError(f"{path}:{line_no}: empty patient_id")
            try:
                t = float(row["time"])
            except (TypeError, ValueError):
                raise ParseError(
                    f"{path}:{line_no}: time {row.get('time')!r} is not a number"
                ) from None
            if math.isnan(t):
                raise ParseError(f"{path}:{line_no}: time is NaN")
            bins = []
            for d, name in enumerate(scheme.names):
                raw = (row.get(name) or "").strip()
                if raw == "":
                    bins.append(MISSING)
                    continue
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(
                        f"{path}:{line_no}: feature {name!r} value {raw!r} is not a number"
                    ) from None
                bins.append(discretize(value, d, scheme))
            rows.setdefault(pid, []).append((t, bins))

    if not rows:
        raise EmptyCohort(f"{path}: no data rows")

    cohort = []
    for pid, records in rows.items():
        records.sort(key=lambda r: r[0])
        times = np.array([t for t, _ in records])
        if np.any(np.diff(times) == 0):
            raise DuplicateTimestamp(f"{path}: duplicate timestamp for patient {pid!r}")
        obs = np.array([b for _, b in records], dtype=int)
        cohort.append(Trajectory(patient_id=pid, times=times, observations=obs))
    return cohort


def save_cohort(cohort: list[Trajectory], path: str | Path, scheme: BinningScheme) -> None:
    """Write a cohort back to CSV, encoding each bin as its center value."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["patient_id", "time", *scheme.names])
        for trajectory in cohort:
            for i, t in enumerate(trajectory.times):
                cells = [trajectory.patient_id, repr(float(t))]
                for d, feature in enumerate(scheme.features):
                    j = trajectory.observations[i, d]
                    cells.append("" if j == MISSING else repr(float(feature.centers[j])))
                writer.writerow(cells)


def restrict_features(
    cohort: list[Trajectory], scheme: BinningScheme, names: tuple[str, ...]
) -> tuple[list[Trajectory], BinningScheme]:
    """Project a cohort and its scheme onto a subset of features."""
    idx = [scheme.index(name) for name in names]
    sub_scheme = BinningScheme(tuple(scheme.features[i] for i in idx))
    projected = [
        Trajectory(
            patient_id=t.patient_id,
            times=t.times,
            observations=t.observations[:, idx],
        )
        for t in cohort
    ]
    return projected, sub_scheme


def _model_payload(mixture: MixtureModel) -> dict:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "prior": mixture.prior.tolist(),
        "assignments": mixture.assignments.tolist(),
        "objective_trace": list(mixture.objective_trace),
        "scheme": None,
        "models": [
            {
                "initial": model.initial.tolist(),
                "rates": model.generator.rates.tolist(),
                "mask": model.generator.mask.tolist(),
                "emissions": [t.tolist() for t in model.emissions.tables],
            }
            for model in mixture.models
        ],
    }
    if mixture.scheme is not None:
        payload["scheme"] = [
            {"name": f.name, "lower": f.lower, "upper": f.upper, "bins": f.bins}
            for f in mixture.scheme.features
        ]
    return payload


def save_model(mixture: MixtureModel, path: str | Path) -> None:
    """Persist a mixture as versioned JSON; floats survive exactly."""
    Path(path).write_text(
        json.dumps(_model_payload(mixture), indent=1) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path) -> MixtureModel:
    """Load a persisted mixture, validating every structural invariant.

    Raises :class:`VersionMismatch` for a foreign version tag and
    :class:`InvariantViolation` for anything else wrong with the file.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise InvariantViolation(f"{path}: not parseable as JSON: {err.msg}") from err
    if not isinstance(payload, dict):
        raise InvariantViolation(f"{path}: expected a JSON object")
    version = payload.get("version")
    if version != MODEL_VERSION:
        raise VersionMismatch(
            f"{path}: file version {version!r}, this build reads version {MODEL_VERSION}"
        )
    try:
        scheme = None
        if payload.get("scheme") is not None:
            scheme = BinningScheme(
                tuple(
                    FeatureBinning(
                        name=f["name"],
                        lower=float(f["lower"]),
                        upper=float(f["upper"]),
                        bins=int(f["bins"]),
                    )
                    for f in payload["scheme"]
                )
            )
        models = []
        for entry in payload["models"]:
            generator = GeneratorMatrix(
                rates=np.array(entry["rates"], dtype=float),
                mask=np.array(entry["mask"], dtype=bool),
            )
            emissions = EmissionTable(
                tables=tuple(np.array(t, dtype=float) for t in entry["emissions"])
            )
            models.append(
                SubtypeModel(
                    initial=np.array(entry["initial"], dtype=float),
                    generator=generator,
                    emissions=emissions,
                )
            )
        mixture = MixtureModel(
            models=tuple(models),
            prior=np.array(payload["prior"], dtype=float),
            assignments=np.array(payload["assignments"], dtype=int),
            objective_trace=[float(v) for v in payload["objective_trace"]],
            scheme=scheme,
        )
    except SubtypingError as err:
        raise InvariantViolation(f"{path}: {err}") from err
    except (KeyError, TypeError, ValueError, IndexError) as err:
        raise InvariantViolation(f"{path}: malformed model file: {err}") from err
    if scheme is not None and scheme.bin_counts != mixture.models[0].emissions.bin_counts:
        raise InvariantViolation(f"{path}: scheme bins disagree with emission tables")
    return mixture
