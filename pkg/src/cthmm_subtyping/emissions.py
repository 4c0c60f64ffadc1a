"""Categorical observation model over equal-width feature bins.

Raw feature values are discretised into per-feature bins; out-of-range
values count as missing, and missing features are marginalised out of the
likelihood (their factor is simply dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvariantViolation, UnknownFeature

#: Bin index marking a missing observation.
MISSING = -1


@dataclass(frozen=True)
class FeatureBinning:
    """Equal-width binning of one feature over [lower, upper]."""

    name: str
    lower: float
    upper: float
    bins: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "bins", int(self.bins))
        if not self.lower < self.upper:
            raise InvariantViolation(f"feature {self.name!r}: lower must be < upper")
        if self.bins < 2:
            raise InvariantViolation(f"feature {self.name!r}: need at least 2 bins")

    @property
    def width(self) -> float:
        return (self.upper - self.lower) / self.bins

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.linspace(self.lower, self.upper, self.bins + 1)
        e.flags.writeable = False
        return e

    @cached_property
    def centers(self) -> np.ndarray:
        c = (self.edges[:-1] + self.edges[1:]) / 2.0
        c.flags.writeable = False
        return c


@dataclass(frozen=True)
class BinningScheme:
    """Per-feature binning configuration for a cohort."""

    features: tuple[FeatureBinning, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise InvariantViolation("duplicate feature names in binning scheme")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def bin_counts(self) -> tuple[int, ...]:
        return tuple(f.bins for f in self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index(self, feature: int | str) -> int:
        if isinstance(feature, str):
            for i, f in enumerate(self.features):
                if f.name == feature:
                    return i
            raise UnknownFeature(f"no feature named {feature!r}")
        if not 0 <= feature < len(self.features):
            raise UnknownFeature(f"feature index {feature} out of range")
        return feature


def discretize(value: float, feature: int | str, scheme: BinningScheme) -> int:
    """Map a raw value to its bin index, or MISSING if outside the range.

    Bins are half-open except the last, so the upper boundary itself lands
    in the final bin.  NaN counts as missing.
    """
    binning = scheme.features[scheme.index(feature)]
    value = float(value)
    if math.isnan(value) or value < binning.lower or value > binning.upper:
        return MISSING
    idx = int((value - binning.lower) / binning.width)
    return min(idx, binning.bins - 1)


@dataclass(frozen=True)
class EmissionTable:
    """Per-state categorical bin distributions, one table per feature.

    ``tables[d]`` has shape (n_states, bins_d); every row is a probability
    vector.  Bin counts may differ across features.
    """

    tables: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.tables:
            raise InvariantViolation("emission table needs at least one feature")
        frozen = []
        n_states = None
        for d, table in enumerate(self.tables):
            table = np.asarray(table, dtype=float)
            if table.ndim != 2:
                raise InvariantViolation(f"feature {d}: emission table must be 2-d")
            if n_states is None:
                n_states = table.shape[0]
            elif table.shape[0] != n_states:
                raise InvariantViolation("emission tables disagree on state count")
            if table.shape[1] < 1:
                raise InvariantViolation(f"feature {d}: no bins")
            if np.any(table < 0):
                raise InvariantViolation(f"feature {d}: negative emission probability")
            if np.abs(table.sum(axis=1) - 1.0).max() > 1e-12:
                raise InvariantViolation(f"feature {d}: emission rows must sum to 1")
            table = np.ascontiguousarray(table)
            table.flags.writeable = False
            frozen.append(table)
        object.__setattr__(self, "tables", tuple(frozen))

    @property
    def n_states(self) -> int:
        return self.tables[0].shape[0]

    @property
    def n_features(self) -> int:
        return len(self.tables)

    @property
    def bin_counts(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.tables)

    @cached_property
    def log_tables(self) -> tuple[np.ndarray, ...]:
        out = []
        with np.errstate(divide="ignore"):
            for t in self.tables:
                lt = np.log(t)
                lt.flags.writeable = False
                out.append(lt)
        return tuple(out)


def emission_log_likelihood(table: EmissionTable, state: int, observation: np.ndarray) -> float:
    """Log-probability of one observation vector given a hidden state.

    Missing features contribute nothing; an all-missing vector scores 0.
    """
    observation = np.asarray(observation)
    total = 0.0
    for d in range(table.n_features):
        j = int(observation[d])
        if j != MISSING:
            total += table.log_tables[d][state, j]
    return total


def log_emission_matrix(table: EmissionTable, observations: np.ndarray) -> np.ndarray:
    """Log emission likelihoods for every (timepoint, state) pair.

    ``observations`` is an (n, D) integer array with MISSING entries;
    returns an (n, K) array of summed per-feature log-probabilities.
    """
    observations = np.asarray(observations)
    n = observations.shape[0]
    out = np.zeros((n, table.n_states))
    for d in range(table.n_features):
        idx = observations[:, d]
        seen = idx != MISSING
        if np.any(seen):
            out[seen, :] += table.log_tables[d][:, idx[seen]].T
    return out


def expected_feature_value(
    table: EmissionTable, state: int, feature: int | str, scheme: BinningScheme
) -> float:
    """Mean of the bin-center distribution for one feature in one state."""
    d = scheme.index(feature)
    return float(table.tables[d][state] @ scheme.features[d].centers)
