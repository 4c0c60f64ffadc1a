"""Hard-EM subtyping: alternate best-subtype assignment with refitting.

Each patient is assigned the subtype maximising the joint score
log prior + trajectory log-likelihood, then each subtype's model is
refit on its assigned patients.  The alternation stops as soon as no
assignment changes, which is an exact fixed point of the procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .emissions import MISSING, BinningScheme
from .errors import DimensionMismatch, InvariantViolation, TooFewPatients
from .inference import SubtypeModel, Trajectory, trajectory_log_likelihood
from .learning import EmConfig, FitDiagnostics, fit_disease_model, quantize_gaps


@dataclass
class MixtureModel:
    """A fitted set of subtype models plus the training bookkeeping."""

    models: tuple[SubtypeModel, ...]
    prior: np.ndarray
    assignments: np.ndarray
    objective_trace: list[float]
    scheme: BinningScheme | None = None

    def __post_init__(self) -> None:
        if not self.models:
            raise InvariantViolation("mixture needs at least one subtype")
        prior = np.asarray(self.prior, dtype=float)
        if prior.shape != (len(self.models),):
            raise InvariantViolation("prior length differs from subtype count")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise InvariantViolation("subtype prior must be a probability vector")
        first = self.models[0]
        for model in self.models[1:]:
            if model.n_states != first.n_states:
                raise InvariantViolation("subtypes disagree on state count")
            if model.emissions.bin_counts != first.emissions.bin_counts:
                raise InvariantViolation("subtypes disagree on feature bins")
        assignments = np.asarray(self.assignments, dtype=int)
        if assignments.size and (
            assignments.min() < 0 or assignments.max() >= len(self.models)
        ):
            raise InvariantViolation("assignment outside subtype range")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "assignments", assignments)

    @property
    def n_subtypes(self) -> int:
        return len(self.models)

    @property
    def n_states(self) -> int:
        return self.models[0].n_states


def _joint_scores(mixture_models, prior, trajectory) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    return np.array(
        [
            lp + trajectory_log_likelihood(model, trajectory)
            for model, lp in zip(mixture_models, log_prior)
        ]
    )


def assign_subtype(mixture: MixtureModel, trajectory: Trajectory) -> tuple[int, np.ndarray]:
    """Best subtype for a trajectory plus all per-subtype joint log scores.

    Ties break toward the lowest subtype index.
    """
    if trajectory.n_features != mixture.models[0].n_features:
        raise DimensionMismatch(
            f"trajectory has {trajectory.n_features} features, "
            f"mixture expects {mixture.models[0].n_features}"
        )
    scores = _joint_scores(mixture.models, mixture.prior, trajectory)
    return int(np.argmax(scores)), scores


def assignment_posteriors(mixture: MixtureModel, trajectory: Trajectory) -> np.ndarray:
    """Posterior over subtypes: softmax of the joint log scores."""
    _, scores = assign_subtype(mixture, trajectory)
    top = scores.max()
    if not math.isfinite(top):
        raise InvariantViolation("all subtype scores are -inf for this trajectory")
    weights = np.exp(scores - top)
    return weights / weights.sum()


def _bin_histograms(trajectories: list[Trajectory]) -> np.ndarray:
    """Per-patient observed-bin frequency vectors, features concatenated."""
    n_features = trajectories[0].n_features
    bin_counts = [
        max(int(max(t.observations[:, d].max() for t in trajectories)) + 1, 1)
        for d in range(n_features)
    ]
    rows = []
    for t in trajectories:
        parts = []
        for d, j in enumerate(bin_counts):
            col = t.observations[:, d]
            seen = col[col != MISSING]
            h = np.bincount(seen, minlength=j).astype(float)
            parts.append(h / max(seen.size, 1))
        rows.append(np.concatenate(parts))
    return np.array(rows)


def _initial_partition(
    trajectories: list[Trajectory], n_subtypes: int, rng: np.random.Generator
) -> np.ndarray:
    """Seed the alternation by clustering per-patient bin histograms.

    A short seeded Lloyd iteration over histogram vectors gives the first
    refit pass label-coherent groups, which keeps the restart search from
    fitting compromise models to mixed data.  Degenerate clusterings fall
    back to a balanced random partition.
    """
    n = len(trajectories)
    if n_subtypes == 1:
        return np.zeros(n, dtype=int)
    points = _bin_histograms(trajectories)
    centroids = points[rng.choice(n, size=n_subtypes, replace=False)]
    assignments = np.zeros(n, dtype=int)
    for _ in range(25):
        distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        updated = distances.argmin(axis=1)
        if np.array_equal(updated, assignments):
            break
        assignments = updated
        for m in range(n_subtypes):
            members = points[assignments == m]
            if members.size:
                centroids[m] = members.mean(axis=0)
    if np.bincount(assignments, minlength=n_subtypes).min() == 0:
        fallback = np.empty(n, dtype=int)
        fallback[rng.permutation(n)] = np.arange(n) % n_subtypes
        return fallback
    return assignments


def _repair_empty_subtypes(
    assignments: np.ndarray, best_scores: np.ndarray, n_subtypes: int
) -> np.ndarray:
    """Re-seed emptied subtypes with the worst-scoring patients.

    Patients are eligible donors only while their current subtype keeps at
    least two members, so the repair cannot cascade into a new empty
    subtype.  Forced moves can lower the objective for one alternation;
    the trace records it when that happens.
    """
    n = assignments.size
    quota = max(1, math.ceil(n / (10 * n_subtypes)))
    assignments = assignments.copy()
    for m in range(n_subtypes):
        if np.any(assignments == m):
            continue
        order = np.argsort(best_scores, kind="stable")
        moved = 0
        for idx in order:
            member_count = np.count_nonzero(assignments == assignments[idx])
            if member_count < 2:
                continue
            assignments[idx] = m
            best_scores[idx] = np.inf  # never steal the same patient twice
            moved += 1
            if moved == quota:
                break
    return assignments


def fit_mixture(
    trajectories: list[Trajectory],
    n_subtypes: int,
    n_states: int,
    config: EmConfig,
    scheme: BinningScheme | None = None,
) -> MixtureModel:
    """Cluster patients into subtypes by alternating assignment and refits.

    The first round fits each subtype from random restarts on a seeded
    histogram-clustered partition; later rounds warm-start from the
    previous parameters so the joint objective cannot decrease.  The
    subtype prior stays uniform unless ``config.reestimate_prior`` is set.

    Returns the fitted :class:`MixtureModel` with training assignments and
    the log-objective trace (one entry after every assignment pass and
    every refit pass).
    """
    n = len(trajectories)
    if n < n_subtypes:
        raise TooFewPatients(f"{n} patients cannot fill {n_subtypes} subtypes")
    if config.delta_quantization is not None:
        trajectories = quantize_gaps(trajectories, config.delta_quantization)
        config = replace(config, delta_quantization=None)
    bin_counts = scheme.bin_counts if scheme is not None else None

    rng = np.random.default_rng(config.seed)
    assignments = _initial_partition(trajectories, n_subtypes, rng)
    prior = np.full(n_subtypes, 1.0 / n_subtypes)

    models: list[SubtypeModel | None] = [None] * n_subtypes
    diagnostics: list[FitDiagnostics | None] = [None] * n_subtypes
    trace: list[float] = []

    for _ in range(config.mixture_iterations):
        # Refit every subtype on its current members.
        for m in range(n_subtypes):
            members = [trajectories[i] for i in np.nonzero(assignments == m)[0]]
            models[m], diagnostics[m] = fit_disease_model(
                members,
                n_states,
                replace(config, seed=config.seed + m),
                initial_model=models[m],
                bin_counts=bin_counts,
            )
        if config.reestimate_prior:
            counts = np.bincount(assignments, minlength=n_subtypes)
            prior = counts / counts.sum()
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior)
        refit_objective = sum(d.log_likelihood for d in diagnostics) + float(
            log_prior[assignments].sum()
        )
        trace.append(refit_objective)

        # Reassign every patient to its best-scoring subtype.
        score_matrix = np.array(
            [_joint_scores(models, prior, traj) for traj in trajectories]
        )
        proposed = score_matrix.argmax(axis=1)
        best_scores = score_matrix.max(axis=1)
        trace.append(float(best_scores.sum()))
        proposed = _repair_empty_subtypes(proposed, best_scores.copy(), n_subtypes)
        if np.array_equal(proposed, assignments):
            break
        assignments = proposed

    return MixtureModel(
        models=tuple(models),
        prior=prior,
        assignments=assignments,
        objective_trace=trace,
        scheme=scheme,
    )
