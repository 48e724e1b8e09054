"""Online conformal prediction sets over next-symbol distributions.

The quantile level ``gamma`` follows the feedback rule

    gamma_{t+1} = gamma_t - eta_t * (miss_t - alpha),   eta_t = eta1 * t**(-beta)

and is never clamped.  Only the derived level ``1 - gamma`` saturates when
building a set: ``>= 1`` gives the whole alphabet, ``<= 0`` the empty set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sortedcontainers import SortedList

FULL_SET = 0.0
EMPTY_SET = math.inf


@dataclass(frozen=True)
class ConformalConfig:
    alpha: float
    gamma1: float | None = None  # defaults to alpha
    eta1: float = 0.001
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma1 is None:
            object.__setattr__(self, "gamma1", float(self.alpha))
        if not 0.0 <= self.gamma1 <= 1.0:
            raise ValueError(f"gamma1 must lie in [0, 1], got {self.gamma1}")
        if not self.eta1 > 0:
            raise ValueError("eta1 must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")

    def eta(self, t: int) -> float:
        if self.beta == 0.0:
            return self.eta1
        return self.eta1 * t ** (-self.beta)


def coverage_bound(config: ConformalConfig, T: int) -> float:
    """Deterministic bound on |miscoverage rate - alpha| after ``T`` steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return (1.0 + config.eta1) / (config.eta1 * T ** (1.0 - config.beta))


def quantile_rank(n: int, level: float) -> int:
    """Smallest k with ``k / n >= level``, evaluated in floating point.

    Assumes ``0 < level < 1`` and ``n >= 1``.  The ceil estimate is corrected
    in both directions so the result agrees with the literal inequality.
    """
    k = min(max(math.ceil(level * n), 1), n)
    while k > 1 and (k - 1) / n >= level:
        k -= 1
    while k < n and k / n < level:
        k += 1
    return k


def empirical_quantile(scores, level: float) -> float:
    """Largest p such that a ``level`` fraction of ``scores`` is ``>= p``.

    ``scores`` may be any sequence; a ``SortedList`` avoids the sort.
    Returns ``FULL_SET`` for an empty history or ``level >= 1`` and
    ``EMPTY_SET`` for ``level <= 0``.
    """
    n = len(scores)
    if n == 0 or level >= 1.0:
        return FULL_SET
    if level <= 0.0:
        return EMPTY_SET
    if not isinstance(scores, SortedList):
        scores = sorted(scores)
    k = quantile_rank(n, level)
    return float(scores[n - k])


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Members are ``{x : probs[x] >= threshold}``, held as a boolean mask."""

    mask: np.ndarray
    threshold: float

    @classmethod
    def from_threshold(cls, probs: np.ndarray, threshold: float) -> "PredictionSet":
        if threshold == EMPTY_SET:
            mask = np.zeros(len(probs), dtype=bool)
        else:
            mask = probs >= threshold
        return cls(mask, threshold)

    def __contains__(self, sym) -> bool:
        return bool(self.mask[sym])

    def __len__(self) -> int:
        return int(self.mask.sum())

    @property
    def members(self) -> list[int]:
        return np.flatnonzero(self.mask).tolist()

    @property
    def is_full(self) -> bool:
        return bool(self.mask.all())


class ConformalState:
    """Quantile level, full score history and miscoverage ledger of one stream."""

    def __init__(self, config: ConformalConfig):
        self.config = config
        self.gamma = float(config.gamma1)
        self.t = 1
        self.scores = SortedList()
        self.miscoverage_count = 0
        self.last_score: float | None = None

    @property
    def level(self) -> float:
        return 1.0 - self.gamma

    @property
    def eta(self) -> float:
        return self.config.eta(self.t)

    def threshold(self) -> float:
        return empirical_quantile(self.scores, self.level)

    def build_set(self, probs: np.ndarray) -> PredictionSet:
        return PredictionSet.from_threshold(probs, self.threshold())

    def update(self, score: float, covered: bool) -> None:
        """Record this step's score and move gamma by the feedback rule."""
        err = 0.0 if covered else 1.0
        self.gamma = self.gamma - self.eta * (err - self.config.alpha)
        self.scores.add(score)
        self.last_score = score
        if not covered:
            self.miscoverage_count += 1
        self.t += 1

    def snapshot(self) -> tuple:
        """Cheap fingerprint that changes whenever the state does."""
        return (self.t, self.gamma, self.miscoverage_count, len(self.scores), self.last_score)

    def full_state(self) -> tuple:
        return (self.t, self.gamma, self.miscoverage_count, tuple(self.scores))


class FixedLevelState(ConformalState):
    """Conformal state whose quantile level never moves.

    Scores still accumulate, so thresholds follow the empirical quantile of
    the growing history at a constant level.  Used by block (hindsight)
    threshold selection.
    """

    def update(self, score, covered):
        self.scores.add(score)
        self.last_score = score
        if not covered:
            self.miscoverage_count += 1
        self.t += 1


def build_set(probs: np.ndarray, state: ConformalState) -> PredictionSet:
    return state.build_set(probs)
