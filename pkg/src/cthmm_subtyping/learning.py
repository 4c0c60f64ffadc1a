"""EM training of one subtype model over a set of trajectories.

The E-step runs forward-backward per trajectory and accumulates three
sufficient statistics: posterior-weighted emission counts, initial-state
posteriors, and pairwise hidden-state counts keyed by the time gap
between consecutive observations.  The M-step has closed forms for all
three parameter blocks; the generator update divides end-conditioned
expected jump counts by end-conditioned expected sojourn times, both
aggregated over the gap-keyed pair counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ctmc import (
    RATE_MAX,
    RATE_MIN,
    GeneratorMatrix,
    end_conditioned_stats,
    full_mask,
    left_to_right_mask,
    validate_generator,
)
from .emissions import MISSING, EmissionTable
from .errors import DegenerateOccupancy, DimensionMismatch, InvariantViolation, SubtypingError
from .inference import SubtypeModel, Trajectory, forward_backward

_OCCUPANCY_FLOOR = 1e-10


@dataclass
class SufficientStats:
    """Accumulated E-step statistics for one model over a cohort.

    ``pair_counts`` maps each distinct inter-observation gap to a K x K
    matrix of posterior counts of (state before, state after) pairs at
    that gap.  Statistics are additive over disjoint trajectory subsets,
    which is what makes parallel accumulation possible.
    """

    pair_counts: dict[float, np.ndarray]
    gamma_initial: np.ndarray
    emission_counts: tuple[np.ndarray, ...]
    n_trajectories: int = 0
    n_timepoints: int = 0

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        merged = {k: v.copy() for k, v in self.pair_counts.items()}
        for k, v in other.pair_counts.items():
            if k in merged:
                merged[k] = merged[k] + v
            else:
                merged[k] = v.copy()
        return SufficientStats(
            pair_counts=merged,
            gamma_initial=self.gamma_initial + other.gamma_initial,
            emission_counts=tuple(
                a + b for a, b in zip(self.emission_counts, other.emission_counts)
            ),
            n_trajectories=self.n_trajectories + other.n_trajectories,
            n_timepoints=self.n_timepoints + other.n_timepoints,
        )


@dataclass(frozen=True)
class EmConfig:
    """Knobs for EM training and the surrounding subtyping loop."""

    max_iterations: int = 200
    tolerance: float = 1e-6
    smoothing: float = 1e-3
    rate_bounds: tuple[float, float] = (RATE_MIN, RATE_MAX)
    structure: str = "full"
    seed: int = 0
    restarts: int = 5
    delta_quantization: float | None = None
    terminal_intervention_feature: int | None = None
    mixture_iterations: int = 50
    reestimate_prior: bool = False

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise InvariantViolation("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvariantViolation("need at least one EM iteration")
        if self.structure not in ("full", "left-to-right"):
            raise InvariantViolation(f"unknown structure kind {self.structure!r}")
        if self.restarts < 1:
            raise InvariantViolation("need at least one restart")
        if self.delta_quantization is not None and self.delta_quantization <= 0:
            raise InvariantViolation("quantization step must be positive")


@dataclass
class FitDiagnostics:
    """What happened during a fit, for logging and reports."""

    iterations: int = 0
    converged: bool = False
    log_likelihood: float = -np.inf
    trace: list[float] = field(default_factory=list)
    restart_scores: list[float] = field(default_factory=list)
    degenerate_events: int = 0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "log_likelihood": self.log_likelihood,
            "trace": list(self.trace),
            "restart_scores": list(self.restart_scores),
            "degenerate_events": self.degenerate_events,
        }


def structure_mask(kind: str, n_states: int) -> np.ndarray:
    if kind == "left-to-right":
        return left_to_right_mask(n_states)
    return full_mask(n_states)


def quantize_gaps(trajectories: list[Trajectory], step: float) -> list[Trajectory]:
    """Snap inter-observation gaps to a grid, keeping the first timestamp.

    Gaps round to the nearest multiple of ``step`` but never below one
    step, so timestamps stay strictly increasing.  Applying this before
    training bounds the number of distinct gaps (and therefore matrix
    exponentials) without touching the data files themselves.
    """
    out = []
    for traj in trajectories:
        gaps = np.diff(traj.times)
        ticks = np.maximum(np.rint(gaps / step), 1.0)
        times = traj.times[0] + np.concatenate([[0.0], np.cumsum(ticks * step)])
        out.append(
            Trajectory(
                patient_id=traj.patient_id,
                times=times,
                observations=traj.observations,
            )
        )
    return out


def e_step(
    model: SubtypeModel, trajectories: list[Trajectory]
) -> tuple[SufficientStats, float]:
    """Accumulate sufficient statistics and the total log-likelihood."""
    n_states = model.n_states
    bin_counts = model.emissions.bin_counts
    pair_counts: dict[float, np.ndarray] = {}
    gamma_initial = np.zeros(n_states)
    emission_counts = tuple(np.zeros((n_states, j)) for j in bin_counts)
    total = 0.0
    n_timepoints = 0

    for traj in trajectories:
        if traj.n_features != model.n_features:
            raise DimensionMismatch(
                f"patient {traj.patient_id!r} has {traj.n_features} features, "
                f"model expects {model.n_features}"
            )
        summary = forward_backward(model, traj)
        total += summary.log_likelihood
        gamma_initial += summary.gamma[0]
        n_timepoints += traj.length

        obs = traj.observations
        for d in range(model.n_features):
            idx = obs[:, d]
            seen = idx != MISSING
            if np.any(seen):
                np.add.at(emission_counts[d].T, idx[seen], summary.gamma[seen])
        gaps = np.diff(traj.times)
        for i, gap in enumerate(gaps):
            key = float(gap)
            slot = pair_counts.get(key)
            if slot is None:
                pair_counts[key] = summary.xi[i].copy()
            else:
                slot += summary.xi[i]

    stats = SufficientStats(
        pair_counts=pair_counts,
        gamma_initial=gamma_initial,
        emission_counts=emission_counts,
        n_trajectories=len(trajectories),
        n_timepoints=n_timepoints,
    )
    return stats, total


def m_step_emissions(stats: SufficientStats, smoothing: float) -> EmissionTable:
    """Closed-form emission update: smoothed ratio of posterior counts.

    With smoothing zero and an all-zero count row the ratio is undefined;
    that row falls back to uniform so the table stays a valid distribution.
    """
    tables = []
    for counts in stats.emission_counts:
        j = counts.shape[1]
        totals = counts.sum(axis=1, keepdims=True)
        smoothed = counts + smoothing
        denom = totals + j * smoothing
        table = np.where(denom > 0, smoothed / np.where(denom > 0, denom, 1.0), 1.0 / j)
        table = table / table.sum(axis=1, keepdims=True)
        tables.append(table)
    return EmissionTable(tables=tuple(tables))


def m_step_initial(stats: SufficientStats) -> np.ndarray:
    """Closed-form initial-distribution update: normalised first-step posteriors."""
    total = stats.gamma_initial.sum()
    if total <= 0:
        raise InvariantViolation("no initial-state mass accumulated")
    pi = stats.gamma_initial / total
    return pi / pi.sum()


def generator_update_terms(
    stats: SufficientStats, previous: GeneratorMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Numerators and denominators of the closed-form generator update.

    For each allowed transition (a, b) the numerator is the expected
    number of a -> b jumps and the denominator the expected time spent in
    ``a``, both end-conditioned under ``previous`` and aggregated over the
    gap-keyed pair counts.
    """
    n_states = previous.size
    numer = np.zeros((n_states, n_states))
    denom = np.zeros(n_states)
    for gap, counts in stats.pair_counts.items():
        cond = end_conditioned_stats(previous, gap)
        numer += np.einsum("cdab,cd->ab", cond.expected_transitions, counts)
        denom += np.einsum("cda,cd->a", cond.expected_sojourn, counts)
    return numer, denom


def _finish_generator_update(
    numer: np.ndarray,
    denom: np.ndarray,
    previous: GeneratorMatrix,
    rate_bounds: tuple[float, float],
) -> tuple[GeneratorMatrix, tuple[int, ...]]:
    mask = previous.mask
    has_exit = mask.any(axis=1)
    degenerate = tuple(int(a) for a in np.nonzero(has_exit & (denom < _OCCUPANCY_FLOOR))[0])
    lo, hi = rate_bounds
    rates = np.zeros_like(numer)
    for a in range(previous.size):
        if not has_exit[a]:
            continue
        if a in degenerate:
            rates[a] = np.abs(previous.rates[a]) * mask[a]
            continue
        rates[a] = np.clip(numer[a] / denom[a], lo, hi) * mask[a]
    return validate_generator(rates, mask, rate_bounds=rate_bounds), degenerate


def m_step_generator(
    stats: SufficientStats,
    previous: GeneratorMatrix,
    rate_bounds: tuple[float, float] = (RATE_MIN, RATE_MAX),
    on_degenerate: str = "keep",
) -> GeneratorMatrix:
    """Closed-form generator update under the previous iteration's rates.

    Allowed transitions get expected-jumps / expected-sojourn, clamped into
    ``rate_bounds`` (so a transition that was never seen is pinned at the
    lower bound instead of freezing at zero).  A state whose expected
    occupancy is below 1e-10 would divide by nothing; with
    ``on_degenerate="keep"`` its previous row is retained, with
    ``"raise"`` the update aborts with :class:`DegenerateOccupancy`.
    """
    numer, denom = generator_update_terms(stats, previous)
    updated, degenerate = _finish_generator_update(numer, denom, previous, rate_bounds)
    if degenerate and on_degenerate == "raise":
        raise DegenerateOccupancy(
            f"states {list(degenerate)} have near-zero expected occupancy"
        )
    return updated


def _empirical_bin_frequencies(
    trajectories: list[Trajectory], bin_counts: tuple[int, ...], smoothing: float
) -> list[np.ndarray]:
    freqs = []
    for d, j in enumerate(bin_counts):
        counts = np.zeros(j)
        for traj in trajectories:
            idx = traj.observations[:, d]
            seen = idx[idx != MISSING]
            counts += np.bincount(seen, minlength=j)
        smoothed = counts + max(smoothing, 1e-6)
        freqs.append(smoothed / smoothed.sum())
    return freqs


def _apply_terminal_intervention(
    table: EmissionTable, feature: int, epsilon: float
) -> EmissionTable:
    """Pin the intervention indicator: certain in the last state, absent before."""
    if table.tables[feature].shape[1] != 2:
        raise InvariantViolation("terminal intervention feature must be binary")
    pinned = np.tile([1.0 - epsilon, epsilon], (table.n_states, 1))
    pinned[-1] = [epsilon, 1.0 - epsilon]
    tables = list(table.tables)
    tables[feature] = pinned
    return EmissionTable(tables=tuple(tables))


def _initial_model(
    trajectories: list[Trajectory],
    n_states: int,
    bin_counts: tuple[int, ...],
    config: EmConfig,
    rng: np.random.Generator,
    base_freqs: list[np.ndarray],
) -> SubtypeModel:
    pi = rng.dirichlet(np.ones(n_states))
    mask = structure_mask(config.structure, n_states)
    raw = rng.uniform(0.01, 1.0, size=(n_states, n_states)) * mask
    generator = validate_generator(raw, mask, rate_bounds=config.rate_bounds)
    tables = []
    for d, j in enumerate(bin_counts):
        noise = 1.0 + 0.2 * rng.uniform(-1.0, 1.0, size=(n_states, j))
        table = base_freqs[d][None, :] * noise
        tables.append(table / table.sum(axis=1, keepdims=True))
    emissions = EmissionTable(tables=tuple(tables))
    if config.terminal_intervention_feature is not None:
        emissions = _apply_terminal_intervention(
            emissions, config.terminal_intervention_feature, config.smoothing
        )
    return SubtypeModel(initial=pi, generator=generator, emissions=emissions)


def _run_em(
    trajectories: list[Trajectory],
    model: SubtypeModel,
    config: EmConfig,
) -> tuple[SubtypeModel, FitDiagnostics]:
    diag = FitDiagnostics()
    previous_ll = None
    for _ in range(config.max_iterations):
        stats, ll = e_step(model, trajectories)
        diag.trace.append(ll)
        if previous_ll is not None and abs(ll - previous_ll) / (abs(ll) + 1.0) < config.tolerance:
            diag.converged = True
            break
        previous_ll = ll
        diag.iterations += 1

        emissions = m_step_emissions(stats, config.smoothing)
        if config.terminal_intervention_feature is not None:
            emissions = _apply_terminal_intervention(
                emissions, config.terminal_intervention_feature, config.smoothing
            )
        pi = m_step_initial(stats)
        numer, denom = generator_update_terms(stats, model.generator)
        generator, degenerate = _finish_generator_update(
            numer, denom, model.generator, config.rate_bounds
        )
        diag.degenerate_events += len(degenerate)
        model = SubtypeModel(initial=pi, generator=generator, emissions=emissions)
    else:
        # Ran out of iterations: score the final M-step output so the
        # returned model matches the last trace entry.
        _, ll = e_step(model, trajectories)
        diag.trace.append(ll)
    diag.log_likelihood = diag.trace[-1]
    return model, diag


def fit_disease_model(
    trajectories: list[Trajectory],
    n_states: int,
    config: EmConfig,
    initial_model: SubtypeModel | None = None,
    bin_counts: tuple[int, ...] | None = None,
) -> tuple[SubtypeModel, FitDiagnostics]:
    """Fit one subtype model by EM with seeded random restarts.

    Parameters
    ----------
    trajectories
        Cohort to fit; at least one trajectory.
    n_states
        Number of hidden disease states.
    config
        EM settings.  When ``delta_quantization`` is set, inter-observation
        gaps are snapped to that grid before training so both the E- and
        M-step see identical gaps (this preserves exact EM monotonicity on
        the quantized record).
    initial_model
        When given, a single EM run warm-starts from this model and the
        random restarts are skipped.
    bin_counts
        Bins per feature.  Defaults to the largest observed bin index plus
        one, which undercounts when the tail bin of a feature never occurs
        in this cohort; pass the binning-scheme counts when available.

    Returns
    -------
    (model, diagnostics)
        Best model over restarts by final log-likelihood, plus the trace.
    """
    if not trajectories:
        raise InvariantViolation("cannot fit a model with no trajectories")
    if n_states < 1:
        raise InvariantViolation("need at least one state")
    if config.delta_quantization is not None:
        trajectories = quantize_gaps(trajectories, config.delta_quantization)

    if initial_model is not None:
        return _run_em(trajectories, initial_model, config)

    if bin_counts is None:
        observed_max = np.full(trajectories[0].n_features, -1, dtype=int)
        for traj in trajectories:
            observed_max = np.maximum(observed_max, traj.observations.max(axis=0))
        bin_counts = tuple(int(m) + 1 for m in np.maximum(observed_max, 1))

    base_freqs = _empirical_bin_frequencies(trajectories, bin_counts, config.smoothing)
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    best: tuple[SubtypeModel, FitDiagnostics] | None = None
    scores: list[float] = []
    failure: SubtypingError | None = None
    for seq in seeds:
        rng = np.random.default_rng(seq)
        start = _initial_model(trajectories, n_states, bin_counts, config, rng, base_freqs)
        try:
            model, diag = _run_em(trajectories, start, config)
        except SubtypingError as err:
            failure = err
            scores.append(-np.inf)
            continue
        scores.append(diag.log_likelihood)
        if best is None or diag.log_likelihood > best[1].log_likelihood:
            best = (model, diag)
    if best is None:
        raise failure if failure is not None else DegenerateOccupancy("all restarts failed")
    best[1].restart_scores = scores
    return best
