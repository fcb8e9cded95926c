"""Arm distributions, one-hot importance-weighted loss estimates and EXP3.

The EXP3 here takes a *general* loss estimator: the caller decides which arm
is observed and with what probability, and the update only sees the
resulting one-hot estimate.  Inside the adaptive learner this is all EXP3
does; the standalone :class:`Exp3` play loop exists for running it alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericDomainError

SUM_TOL = 1e-9
# Floor applied after renormalization so long horizons cannot underflow a weight to 0.
WEIGHT_FLOOR = 1e-300


def _as_probs(probs) -> np.ndarray:
    p = np.array(probs, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise InvalidArgumentError("distribution must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidArgumentError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > SUM_TOL:
        raise InvalidArgumentError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True, eq=False)
class ArmDistribution:
    """Probability vector over ``n`` arms."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_probs(self.probs)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, weights) -> ArmDistribution:
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @property
    def n(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.probs.size

    def __getitem__(self, i):
        return self.probs[i]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ArmDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"ArmDistribution({np.array2string(self.probs, precision=4)})"


@dataclass(frozen=True)
class SparseLossEstimate:
    """One-hot loss estimate: ``value`` at ``arm``, zero elsewhere."""

    arm: int
    value: float
    n: int

    def __post_init__(self):
        if not 0 <= self.arm < self.n:
            raise InvalidArgumentError(f"arm {self.arm} outside [0, {self.n})")
        if self.value < 0:
            raise InvalidArgumentError("loss estimate must be non-negative")

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.arm] = self.value
        return out

    def dot(self, probs) -> float:
        return self.value * float(probs[self.arm])


@dataclass(frozen=True)
class Exp3State:
    weights: ArmDistribution
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidArgumentError("learning rate must be positive")

    @property
    def n(self) -> int:
        return self.weights.n


def uniform_distribution(n: int) -> ArmDistribution:
    if n < 1:
        raise InvalidArgumentError("need at least one arm")
    return ArmDistribution(np.full(n, 1.0 / n))


def sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF lookup of the uniform draw ``u`` in [0, 1).

    Boundary ties go to the lower index; zero-probability arms are never
    returned.
    """
    cdf = np.cumsum(probs)
    x = u * cdf[-1]
    if x <= 0.0:
        return int(np.flatnonzero(probs > 0)[0])
    i = int(np.searchsorted(cdf, x, side="left"))
    return min(i, probs.size - 1)


def sample_arm(dist, rng: np.random.Generator) -> int:
    """Draw one arm from ``dist`` using a single uniform from ``rng``."""
    probs = dist.probs if isinstance(dist, ArmDistribution) else _as_probs(dist)
    return sample_index(probs, rng.random())


def sparse_loss_estimate(arm: int, observed_loss: float, prob: float, n: int) -> SparseLossEstimate:
    if not prob > 0:
        raise InvalidArgumentError("observation probability must be positive")
    if prob > 1 + SUM_TOL:
        raise InvalidArgumentError("observation probability exceeds 1")
    if not 0.0 <= observed_loss <= 1.0:
        raise InvalidArgumentError(f"loss {observed_loss!r} outside [0, 1]")
    return SparseLossEstimate(int(arm), observed_loss / prob, int(n))


def exp3_weights_update(weights: np.ndarray, eta, arm: int, value: float) -> np.ndarray:
    """Array form of the EXP3 step, also used row-wise for stacked experts.

    ``weights`` may be ``(n,)`` or ``(B, n)``; ``eta`` is a scalar or a
    length-``B`` vector.  Returns a new array.
    """
    if not math.isfinite(value):
        raise NumericDomainError(f"non-finite loss estimate {value!r}")
    old = np.asarray(weights, dtype=float)
    w = old.copy()
    w[..., arm] *= np.exp(-np.asarray(eta) * value)
    total = w.sum(axis=-1, keepdims=True)
    dead = total <= 0
    if np.any(dead):
        # the whole mass sat on an arm whose factor underflowed: nothing to reweight
        w = np.where(dead, old, w)
        total = np.where(dead, old.sum(axis=-1, keepdims=True), total)
    w /= total
    np.maximum(w, WEIGHT_FLOOR, out=w)
    return w


def exp3_update(state: Exp3State, estimate: SparseLossEstimate) -> Exp3State:
    if estimate.n != state.n:
        raise InvalidArgumentError("estimate and state disagree on arm count")
    w = exp3_weights_update(state.weights.probs, state.eta, estimate.arm, estimate.value)
    # clamping can nudge the sum by ~1e-300 per arm; the renormalize keeps it exact enough
    return Exp3State(ArmDistribution(w / w.sum()), state.eta)


def lemma_rate(n: int, horizon: int, cover: float) -> float:
    """EXP3 rate sqrt(log n / (T n C)) for an observation distribution with cover constant C."""
    if n < 2:
        return 1.0
    return math.sqrt(math.log(n) / (horizon * n * cover))


def lemma_regret_bound(n: int, horizon: int, cover: float) -> float:
    return 2.0 * math.sqrt(cover * n * horizon * math.log(n))


def check_cover(weights, observe_probs, cover: float, tol: float = 1e-12) -> bool:
    """True when ``weights[i] <= cover * observe_probs[i]`` for every arm."""
    w = np.asarray(weights)
    z = np.asarray(observe_probs)
    return bool(np.all(w <= cover * z + tol))


class Exp3:
    """Standalone EXP3 with a caller-chosen observation distribution.

    Each round: :meth:`play` samples from the current weights, the caller
    picks an observation arm from its own distribution ``z`` and passes the
    observed loss to :meth:`observe`.  When ``cover`` is given the condition
    ``w <= cover * z`` is asserted (skipped under ``python -O``).
    """

    def __init__(self, n: int, eta: float, cover: float | None = None):
        self.state = Exp3State(uniform_distribution(n), eta)
        self.cover = cover

    @property
    def weights(self) -> np.ndarray:
        return self.state.weights.probs

    def play(self, rng: np.random.Generator) -> int:
        return sample_arm(self.state.weights, rng)

    def observe(self, arm: int, loss: float, observe_probs) -> None:
        z = np.asarray(observe_probs, dtype=float)
        if self.cover is not None:
            assert check_cover(self.weights, z, self.cover), "observation distribution violates cover"
        est = sparse_loss_estimate(arm, loss, z[arm], self.state.n)
        self.state = exp3_update(self.state, est)


class ClassicExp3:
    """Non-adaptive EXP3 baseline with uniform exploration.

    Plays from ``(1 - gamma) w + gamma / n`` and observes only the played
    arm.  Defaults: ``eta = sqrt(log n / (T n))`` and
    ``gamma = min(1, sqrt(n log n / T))``.
    """

    def __init__(self, n: int, horizon: int, eta: float | None = None, gamma: float | None = None):
        if n < 1:
            raise InvalidArgumentError("need at least one arm")
        log_n = math.log(n) if n > 1 else 0.0
        self.n = n
        self.eta = eta if eta is not None else (math.sqrt(log_n / (horizon * n)) if n > 1 else 1.0)
        self.gamma = gamma if gamma is not None else min(1.0, math.sqrt(n * log_n / horizon))
        self.weights = np.full(n, 1.0 / n)

    def play_distribution(self) -> np.ndarray:
        return (1.0 - self.gamma) * self.weights + self.gamma / self.n

    def play(self, rng: np.random.Generator) -> tuple[int, float]:
        p = self.play_distribution()
        arm = sample_index(p, rng.random())
        return arm, float(p[arm])

    def update(self, arm: int, loss: float, prob: float) -> None:
        est = sparse_loss_estimate(arm, loss, prob, self.n)
        self.weights = exp3_weights_update(self.weights, self.eta, est.arm, est.value)
