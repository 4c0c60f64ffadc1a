"""Continuous-time Markov chain core.

Generator matrices, interval transition probabilities via the matrix
exponential, and end-conditioned expectations of transition counts and
state sojourn times over an interval.  These are the quantities the EM
learner consumes; everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .errors import (
    ExpmInaccuracy,
    InvariantViolation,
    NegativeOffDiagonal,
    NonPositiveInterval,
    NonSquareInput,
)

# Bounds applied to nonzero off-diagonal rates, per unit time.
RATE_MIN = 1e-6
RATE_MAX = 1e3

# Conditioning probabilities below this floor are treated as unreachable.
P_FLOOR = 1e-12

_ROW_SUM_TOL = 1e-12
_ROW_SUM_MAX = 1e-8


def full_mask(n_states: int) -> np.ndarray:
    """Structure mask allowing every off-diagonal transition."""
    return ~np.eye(n_states, dtype=bool)


def left_to_right_mask(n_states: int) -> np.ndarray:
    """Chain mask: each state may only jump to the next, last is absorbing."""
    mask = np.zeros((n_states, n_states), dtype=bool)
    for k in range(n_states - 1):
        mask[k, k + 1] = True
    return mask


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GeneratorMatrix:
    """Rate matrix of a CTMC together with its structure mask.

    Off-diagonal entries are nonnegative transition rates (events per time
    unit), the diagonal is the negative row sum, masked-off entries are
    exactly zero, and nonzero rates lie within [RATE_MIN, RATE_MAX].
    """

    rates: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise InvariantViolation("generator rates must be square")
        if mask.shape != rates.shape:
            raise InvariantViolation("structure mask shape differs from rates")
        mask = mask & ~np.eye(rates.shape[0], dtype=bool)
        off = rates[~np.eye(rates.shape[0], dtype=bool)]
        if np.any(off < 0):
            raise InvariantViolation("negative off-diagonal rate")
        if np.any(np.diag(rates) > 0):
            raise InvariantViolation("positive diagonal entry")
        if np.abs(rates.sum(axis=1)).max() > _ROW_SUM_TOL:
            raise InvariantViolation("generator rows must sum to zero")
        if np.any(rates[~mask & ~np.eye(rates.shape[0], dtype=bool)] != 0.0):
            raise InvariantViolation("masked-off entry is nonzero")
        nz = rates[mask][rates[mask] > 0]
        if nz.size and (nz.min() < RATE_MIN * (1 - 1e-12) or nz.max() > RATE_MAX * (1 + 1e-12)):
            raise InvariantViolation("off-diagonal rate outside allowed bounds")
        object.__setattr__(self, "rates", _frozen(rates))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @cached_property
    def fingerprint(self) -> bytes:
        """Stable identity for cache keys; distinct values never collide."""
        return self.rates.tobytes() + self.mask.tobytes()


@dataclass(frozen=True)
class TransitionMatrix:
    """Interval transition probabilities P(delta) = expm(delta * Q)."""

    probs: np.ndarray
    interval: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _frozen(np.asarray(self.probs, dtype=float)))

    @property
    def size(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class EndConditionedStats:
    """Expected path statistics over an interval, conditioned on both ends.

    ``expected_transitions[a, b, c, d]`` is the expected number of c -> d
    jumps in (0, delta) given the chain starts in ``a`` and ends in ``b``;
    ``expected_sojourn[a, b, c]`` is the expected time spent in state ``c``
    under the same conditioning.  Entries for endpoint pairs whose
    transition probability falls below ``P_FLOOR`` are zero.
    """

    interval: float
    expected_transitions: np.ndarray
    expected_sojourn: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "expected_transitions", _frozen(self.expected_transitions)
        )
        object.__setattr__(self, "expected_sojourn", _frozen(self.expected_sojourn))


def validate_generator(
    raw: np.ndarray,
    mask: np.ndarray,
    rate_bounds: tuple[float, float] = (RATE_MIN, RATE_MAX),
) -> GeneratorMatrix:
    """Build a valid generator from raw off-diagonal rates.

    The diagonal of ``raw`` is ignored and recomputed as the negative row
    sum.  Masked-off entries are zeroed, and nonzero rates are clamped into
    ``rate_bounds``.  Zero rates on masked-in entries are left at zero (the
    transition simply never fires).

    Raises
    ------
    NonSquareInput
        if ``raw`` is not a square matrix.
    NegativeOffDiagonal
        if any off-diagonal entry is negative; rejected rather than fixed
        so that sign errors in upstream code surface immediately.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise NonSquareInput(f"expected a square matrix, got shape {raw.shape}")
    n = raw.shape[0]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != raw.shape:
        raise NonSquareInput("mask shape differs from rate matrix shape")
    mask = mask & ~np.eye(n, dtype=bool)
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(raw[off_diag] < 0):
        raise NegativeOffDiagonal("off-diagonal rates must be nonnegative")

    lo, hi = rate_bounds
    rates = np.where(mask, raw, 0.0)
    nonzero = mask & (rates > 0)
    rates[nonzero] = np.clip(rates[nonzero], lo, hi)
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return GeneratorMatrix(rates=rates, mask=mask)


# Transition matrices and end-conditioned statistics are memoised per
# (generator, interval) key: an EM sweep asks for the same handful of
# intervals once per trajectory pair.  Fills are pure, so concurrent
# fills of one key under the GIL always store equal values.
_TRANSITION_CACHE: dict[tuple[bytes, float], TransitionMatrix] = {}
_STATS_CACHE: dict[tuple[bytes, float], EndConditionedStats] = {}
_TRANSITION_CACHE_MAX = 200_000
_STATS_CACHE_MAX = 50_000


def clear_caches() -> None:
    _TRANSITION_CACHE.clear()
    _STATS_CACHE.clear()


def _trim(cache: dict, limit: int) -> None:
    while len(cache) > limit:
        cache.pop(next(iter(cache)))


def transition_matrix(generator: GeneratorMatrix, interval: float) -> TransitionMatrix:
    """Interval transition probabilities ``expm(interval * Q)``.

    Rows are renormalised when the row sum drifts from one by more than
    1e-12 but less than 1e-8; larger drift raises :class:`ExpmInaccuracy`
    since it signals an ill-conditioned ``interval * Q`` product.
    """
    interval = float(interval)
    if interval < 0:
        raise NonPositiveInterval(f"interval must be >= 0, got {interval}")
    key = (generator.fingerprint, interval)
    hit = _TRANSITION_CACHE.get(key)
    if hit is not None:
        return hit

    n = generator.size
    if interval == 0.0:
        result = TransitionMatrix(probs=np.eye(n), interval=0.0)
        _TRANSITION_CACHE[key] = result
        return result

    probs = expm(generator.rates * interval)
    drift = np.abs(probs.sum(axis=1) - 1.0).max()
    if drift > _ROW_SUM_MAX or probs.min() < -_ROW_SUM_MAX:
        raise ExpmInaccuracy(
            f"matrix exponential row sums drifted by {drift:.3e} for interval {interval}"
        )
    probs = np.clip(probs, 0.0, 1.0)
    if drift > _ROW_SUM_TOL:
        probs = probs / probs.sum(axis=1, keepdims=True)
    result = TransitionMatrix(probs=probs, interval=interval)
    _TRANSITION_CACHE[key] = result
    _trim(_TRANSITION_CACHE, _TRANSITION_CACHE_MAX)
    return result


def _interval_integral(rates: np.ndarray, block: np.ndarray, interval: float) -> np.ndarray:
    """integral over s in (0, interval) of expm(s Q) B expm((interval - s) Q).

    Computed as the upper-right block of the exponential of the augmented
    matrix [[Q, B], [0, Q]], which avoids any diagonalisability assumption
    on Q.
    """
    n = rates.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = rates
    aug[n:, n:] = rates
    aug[:n, n:] = block
    return expm(aug * interval)[:n, n:]


def end_conditioned_stats(generator: GeneratorMatrix, interval: float) -> EndConditionedStats:
    """Expected jump counts and sojourn times conditioned on both endpoints.

    For every endpoint pair (a, b) with P_ab(interval) >= P_FLOOR this
    divides the joint expectations (one augmented-matrix exponential per
    integrand) by the endpoint probability; pairs below the floor are
    reported as zero rather than dividing by a vanishing number.
    """
    interval = float(interval)
    if interval <= 0:
        raise NonPositiveInterval(f"interval must be > 0, got {interval}")
    key = (generator.fingerprint, interval)
    hit = _STATS_CACHE.get(key)
    if hit is not None:
        return hit

    n = generator.size
    rates = generator.rates
    probs = transition_matrix(generator, interval).probs

    joint_sojourn = np.zeros((n, n, n))
    for c in range(n):
        block = np.zeros((n, n))
        block[c, c] = 1.0
        joint_sojourn[:, :, c] = _interval_integral(rates, block, interval)

    joint_transitions = np.zeros((n, n, n, n))
    for c in range(n):
        for d in range(n):
            if c == d or rates[c, d] == 0.0:
                continue
            block = np.zeros((n, n))
            block[c, d] = rates[c, d]
            joint_transitions[:, :, c, d] = _interval_integral(rates, block, interval)

    reachable = probs >= P_FLOOR
    denom = np.where(reachable, probs, 1.0)
    sojourn = np.where(reachable[:, :, None], joint_sojourn / denom[:, :, None], 0.0)
    transitions = np.where(
        reachable[:, :, None, None],
        joint_transitions / denom[:, :, None, None],
        0.0,
    )
    # The integrands are nonnegative, so clip away sub-epsilon noise.
    result = EndConditionedStats(
        interval=interval,
        expected_transitions=np.clip(transitions, 0.0, None),
        expected_sojourn=np.clip(sojourn, 0.0, None),
    )
    _STATS_CACHE[key] = result
    _trim(_STATS_CACHE, _STATS_CACHE_MAX)
    return result


def sojourn_expectation(generator: GeneratorMatrix) -> np.ndarray:
    """Mean holding time per state: 1/|Q_kk|, infinity for absorbing states."""
    exit_rates = -np.diag(generator.rates)
    out = np.full(generator.size, np.inf)
    leaving = exit_rates > 0
    out[leaving] = 1.0 / exit_rates[leaving]
    return out
