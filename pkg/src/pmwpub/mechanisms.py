"""Differentially private primitives: exponential and permute-and-flip
selection, Gaussian measurement with clipping, and Laplace release.

Every mechanism draws from an injected numpy Generator, never global state,
so whole runs replay bit-exactly from a seed. Scores are exponentiated only
after subtracting the max, so selection is invariant to constant shifts and
never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "SelectionScores",
    "exponential_probabilities",
    "exponential_select",
    "permute_and_flip_select",
    "gaussian_measure",
    "gaussian_sigma",
    "laplace_release",
]


@dataclass(frozen=True)
class SelectionScores:
    """Candidate utilities for one private selection.

    `sensitivity` is the score's worst-case change between neighboring
    datasets (1/n for |q(A) - q(D)| scores); `epsilon0` is the per-round
    pure-DP budget the selection is allowed to spend.
    """

    scores: np.ndarray
    sensitivity: float
    epsilon0: float

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise DataError("scores must be a nonempty 1-d vector")
        if not np.all(np.isfinite(self.scores)):
            raise DataError("scores must be finite")
        if not self.sensitivity > 0:
            raise DataError("score sensitivity must be positive")
        if not self.epsilon0 > 0:
            raise DataError("epsilon0 must be positive")


def exponential_probabilities(selection: SelectionScores) -> np.ndarray:
    """Pr[i] proportional to exp(epsilon0 * score_i / (2 * sensitivity))."""
    z = selection.epsilon0 * (selection.scores - selection.scores.max()) / (2.0 * selection.sensitivity)
    w = np.exp(z)
    return w / w.sum()


def exponential_select(selection: SelectionScores, rng: np.random.Generator) -> int:
    """Sample a candidate index with the exponential mechanism (epsilon0-DP)."""
    probs = exponential_probabilities(selection)
    return int(rng.choice(len(probs), p=probs))


def permute_and_flip_select(selection: SelectionScores, rng: np.random.Generator) -> int:
    """Permute-and-flip selection (epsilon0-DP).

    Visits candidates in a uniformly random order and accepts candidate i
    with probability exp(epsilon0 * (score_i - max_score) / (2*sensitivity)).
    A max-score candidate accepts with probability 1, so this terminates.
    Its expected selected score is never below the exponential mechanism's.
    """
    s = selection.scores
    accept = np.exp(selection.epsilon0 * (s - s.max()) / (2.0 * selection.sensitivity))
    for idx in rng.permutation(len(s)):
        if rng.random() < accept[idx]:
            return int(idx)
    raise AssertionError("unreachable: the max-score candidate always accepts")


def gaussian_sigma(n: int, epsilon0: float) -> float:
    """Noise scale for measuring a sensitivity-1/n query at (epsilon0^2/2)-zCDP."""
    return 1.0 / (n * epsilon0)


def gaussian_measure(
    true_value: float, n: int, epsilon0: float, rng: np.random.Generator
) -> float:
    """Gaussian-noised measurement of a [0,1] query answer, clipped to [0,1].

    The clipped value is what gets logged and replayed; adding N(0, 1/(n e0)^2)
    to a sensitivity-1/n value satisfies (epsilon0^2/2)-zCDP, and clipping is
    post-processing.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    if not epsilon0 > 0:
        raise DataError("epsilon0 must be positive")
    noisy = true_value + rng.normal(0.0, gaussian_sigma(n, epsilon0))
    return float(min(max(noisy, 0.0), 1.0))


def laplace_release(
    value: float, sensitivity: float, epsilon: float, rng: np.random.Generator
) -> float:
    """Laplace mechanism: value + Lap(sensitivity / epsilon), epsilon-DP.

    The noise standard deviation is sqrt(2) * sensitivity / epsilon.
    """
    if not sensitivity > 0:
        raise DataError("sensitivity must be positive")
    if not epsilon > 0:
        raise DataError("epsilon must be positive")
    return float(value + rng.laplace(0.0, sensitivity / epsilon))
