"""
Continuous-time Markov chain basics
===================================

Build a generator matrix, look at interval transition probabilities,
expected holding times, and the end-conditioned path statistics that
drive the EM updates.
"""

import numpy as np

from cthmm_subtyping import (
    end_conditioned_stats,
    full_mask,
    left_to_right_mask,
    sojourn_expectation,
    transition_matrix,
    validate_generator,
)

# A three-state chain: mild -> worse -> critical, with the final state
# absorbing.  Rates are events per hour.
raw = np.zeros((3, 3))
raw[0, 1] = 0.4
raw[1, 2] = 0.8
generator = validate_generator(raw, left_to_right_mask(3))
print("generator (diagonal filled in automatically):")
print(generator.rates)

print("\nexpected holding time per state (hours):")
print(sojourn_expectation(generator))

# Transition probabilities over increasing gaps: the longer we wait, the
# more mass drifts toward the absorbing state.
for gap in (0.5, 2.0, 8.0):
    probs = transition_matrix(generator, gap).probs
    print(f"\nP(delta = {gap} h), row = state now, column = state later:")
    print(np.round(probs, 4))

# End-conditioned expectations answer: given we saw state 0 at the start
# of a 2-hour gap and state 2 at its end, how was the interior spent?
stats = end_conditioned_stats(generator, 2.0)
print("\ngiven state 0 -> state 2 across 2 hours:")
print("  expected time in each state:", np.round(stats.expected_sojourn[0, 2], 4))
print("  expected 0->1 jumps:", round(stats.expected_transitions[0, 2, 0, 1], 4))
print("  expected 1->2 jumps:", round(stats.expected_transitions[0, 2, 1, 2], 4))
print("  (sojourns sum to the 2-hour gap, and each jump happens exactly once)")

# With a full mask the chain can move anywhere; compare the conditioned
# jump counts for a round trip.
busy = validate_generator(np.array([[0.0, 0.9, 0.2], [0.3, 0.0, 0.6], [0.5, 0.4, 0.0]]), full_mask(3))
round_trip = end_conditioned_stats(busy, 1.5)
print("\nbusy 3-state chain, conditioned on returning 0 -> 0 over 1.5 h:")
print("  expected jump counts:")
print(np.round(round_trip.expected_transitions[0, 0], 3))
