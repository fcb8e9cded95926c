"""Strongly adaptive bandit learner with one extra observation query per round.

One EXP3 expert per interval scale, each restarted whenever a new interval
of its scale begins, aggregated by a multiplicative-weights meta learner.
The extra query is drawn from a mixture that keeps every expert's
importance weights bounded, so a single observation updates all experts
and the meta weights at once.  The played arm never influences any update.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .core_online import (
    ArmDistribution,
    Exp3State,
    SparseLossEstimate,
    exp3_weights_update,
    sample_index,
    sparse_loss_estimate,
)
from .errors import InvalidArgumentError, NumericDomainError, ProtocolViolationError

SINGLE_SCALE_DEFAULT = 1024


class Variant(enum.Enum):
    FULL = "full"
    NAIVE_OBSERVATION = "naive_observation"
    SINGLE_SCALE = "single_scale"


@dataclass(frozen=True)
class IntervalSchedule:
    horizon: int
    scales: tuple[int, ...]

    def __post_init__(self):
        if not self.scales:
            raise InvalidArgumentError("schedule needs at least one scale")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise InvalidArgumentError("scales must be strictly increasing")
        if self.scales[0] < 1 or self.scales[-1] > self.horizon:
            raise InvalidArgumentError(f"scales must lie in [1, {self.horizon}]")

    @property
    def B(self) -> int:
        return len(self.scales)

    def restarts_at(self, t_next: int) -> np.ndarray:
        """Boolean mask of scales that start a fresh interval at round ``t_next``."""
        return np.array([t_next % s == 0 for s in self.scales])


def build_schedule(T: int, explicit_scales: Sequence[int] | None = None) -> IntervalSchedule:
    """Scales 2^k for ceil(2 + log2 log2 T) <= k <= floor(log2 T), unless overridden.

    Horizons below 16 leave that range empty; they fall back to the single
    largest power of two not exceeding ``T``.
    """
    if T < 2:
        raise InvalidArgumentError("horizon must be at least 2")
    if explicit_scales is not None:
        scales = tuple(int(s) for s in explicit_scales)
        if not scales:
            raise InvalidArgumentError("explicit scale list is empty")
        return IntervalSchedule(T, scales)
    k_max = int(math.floor(math.log2(T)))
    k_min = math.ceil(2 + math.log2(math.log2(T)))
    if k_min > k_max:
        k_min = k_max
    return IntervalSchedule(T, tuple(2**k for k in range(k_min, k_max + 1)))


def single_scale_schedule(T: int, scale: int | None = None) -> IntervalSchedule:
    if scale is None:
        scale = min(SINGLE_SCALE_DEFAULT, 2 ** int(math.floor(math.log2(T))))
    return build_schedule(T, [scale])


def eta_k(n: int, scale: int, B: int) -> float:
    """Meta rate for one scale, capped at 1/(4B) so meta weights stay positive."""
    return min(1.0 / (2.0 * math.sqrt(n)), 1.0 / math.sqrt(n * scale), 1.0 / (4.0 * B))


def expert_rate(n: int, scale: int, B: int) -> float:
    """EXP3 rate for an expert living ``scale`` rounds under cover constant 2B."""
    if n < 2:
        return 1.0
    return math.sqrt(math.log(n) / (scale * n * 2 * B))


def _stack(expert_dists) -> np.ndarray:
    if isinstance(expert_dists, np.ndarray):
        V = np.atleast_2d(expert_dists)
    else:
        rows = [np.asarray(d, dtype=float) for d in expert_dists]
        if len({r.size for r in rows}) > 1:
            raise InvalidArgumentError("expert distributions disagree on arm count")
        V = np.vstack(rows)
    if V.shape[0] < 1:
        raise InvalidArgumentError("need at least one expert")
    return V


def observation_probs(V: np.ndarray) -> np.ndarray:
    """Array form of :func:`observation_distribution` for a ``(B, n)`` stack."""
    B = V.shape[0]
    peak = V.max(axis=0) ** 2
    return peak / (2.0 * peak.sum()) + V.sum(axis=0) / (2.0 * B)


def observation_distribution(expert_dists, B: int | None = None) -> ArmDistribution:
    """Mixture of the squared-peak distribution and the average expert, half each."""
    V = _stack(expert_dists)
    if B is not None and B != V.shape[0]:
        raise InvalidArgumentError(f"got {V.shape[0]} expert distributions, expected {B}")
    p = observation_probs(V)
    return ArmDistribution(p / p.sum())


def r_tilde(estimate: SparseLossEstimate, play_dist, expert_dist) -> float:
    return estimate.value * (float(play_dist[estimate.arm]) - float(expert_dist[estimate.arm]))


@dataclass(frozen=True, eq=False)
class StablState:
    schedule: IntervalSchedule
    n: int
    t: int
    expert_weights: np.ndarray  # (B, n); row k is v(t, k)
    meta_weights: np.ndarray  # (B,)
    eta_meta: np.ndarray  # (B,)
    expert_eta: np.ndarray  # (B,)
    variant: Variant = Variant.FULL

    @property
    def B(self) -> int:
        return self.schedule.B

    @property
    def experts(self) -> list[Exp3State]:
        return [
            Exp3State(ArmDistribution(row), float(eta))
            for row, eta in zip(self.expert_weights, self.expert_eta)
        ]

    def meta_distribution(self) -> np.ndarray:
        return self.meta_weights / self.meta_weights.sum()

    def pseudo_weight(self) -> float:
        return float(np.sum(self.meta_weights / self.eta_meta))


def init_state(
    n: int,
    schedule: IntervalSchedule,
    variant: Variant = Variant.FULL,
    expert_rate_scale: float = 1.0,
) -> StablState:
    """Fresh learner: uniform experts, meta weights ``w_1(k) = eta_k``.

    ``expert_rate_scale`` multiplies every expert's EXP3 rate; 1.0 keeps the
    theory-derived rate.
    """
    if n < 1:
        raise InvalidArgumentError("need at least one arm")
    B = schedule.B
    eta = np.array([eta_k(n, s, B) for s in schedule.scales])
    rates = expert_rate_scale * np.array([expert_rate(n, s, B) for s in schedule.scales])
    return StablState(
        schedule=schedule,
        n=n,
        t=1,
        expert_weights=np.full((B, n), 1.0 / n),
        meta_weights=eta.copy(),
        eta_meta=eta,
        expert_eta=rates,
        variant=variant,
    )


def meta_play_distribution(state: StablState) -> ArmDistribution:
    p = state.meta_distribution() @ state.expert_weights
    return ArmDistribution(p / p.sum())


def _meta_step(state: StablState, estimate: SparseLossEstimate, play: np.ndarray):
    a = estimate.arm
    r = estimate.value * (play[a] - state.expert_weights[:, a])
    w = state.meta_weights * (1.0 + state.eta_meta * r)
    restart = state.schedule.restarts_at(state.t + 1)
    w[restart] = state.eta_meta[restart]
    if np.any(w <= 0):
        raise NumericDomainError("meta weight became non-positive")
    return w, restart, r


def meta_update(state: StablState, estimate: SparseLossEstimate) -> StablState:
    """Multiplicative meta step plus restarts for scales dividing ``t + 1``.

    Expert EXP3 weights are only touched by the restart (reset to uniform).
    """
    play = state.meta_distribution() @ state.expert_weights
    w, restart, _ = _meta_step(state, estimate, play)
    V = state.expert_weights.copy()
    V[restart] = 1.0 / state.n
    return replace(state, t=state.t + 1, meta_weights=w, expert_weights=V)


@dataclass(frozen=True)
class RoundDecision:
    play_arm: int
    observe_arm: int
    play_dist: ArmDistribution
    observe_dist: ArmDistribution
    estimate: SparseLossEstimate | None = None
    r_tilde: np.ndarray | None = field(default=None, repr=False)
    play_loss: float | None = None


Feedback = Callable[[int, int], Mapping[int, float]]


def _checked_loss(revealed: Mapping[int, float], arm: int) -> float:
    if arm not in revealed:
        raise ProtocolViolationError(f"no loss revealed for announced arm {arm}")
    loss = float(revealed[arm])
    if not math.isfinite(loss):
        raise NumericDomainError(f"non-finite loss {loss!r} for arm {arm}")
    return loss


def stabl_round(
    state: StablState,
    play_rng: np.random.Generator,
    observe_rng: np.random.Generator,
    feedback: Feedback,
) -> tuple[RoundDecision, StablState]:
    """Run one round.

    Both arms are drawn, then ``feedback(play_arm, observe_arm)`` is called
    and must return losses for both.  Only the observed arm's loss drives
    the updates.
    """
    if state.t > state.schedule.horizon:
        raise ProtocolViolationError("learner already ran for its full horizon")
    n = state.n
    V = state.expert_weights
    play = state.meta_distribution() @ V
    play /= play.sum()
    if state.variant is Variant.NAIVE_OBSERVATION:
        observe = np.full(n, 1.0 / n)
    else:
        observe = observation_probs(V)
        observe /= observe.sum()

    x = sample_index(play, play_rng.random())
    x_obs = sample_index(observe, observe_rng.random())
    revealed = feedback(x, x_obs)
    play_loss = _checked_loss(revealed, x)
    obs_loss = _checked_loss(revealed, x_obs)

    est = sparse_loss_estimate(x_obs, obs_loss, observe[x_obs], n)
    w, restart, r = _meta_step(state, est, play)
    V_next = exp3_weights_update(V, state.expert_eta, est.arm, est.value)
    V_next[restart] = 1.0 / n

    decision = RoundDecision(
        play_arm=x,
        observe_arm=x_obs,
        play_dist=ArmDistribution(play),
        observe_dist=ArmDistribution(observe),
        estimate=est,
        r_tilde=r,
        play_loss=play_loss,
    )
    return decision, replace(state, t=state.t + 1, meta_weights=w, expert_weights=V_next)


class StablLearner:
    """Stateful wrapper owning a :class:`StablState` and its two random streams."""

    def __init__(
        self,
        n: int,
        horizon: int,
        play_rng: np.random.Generator,
        observe_rng: np.random.Generator,
        variant: Variant = Variant.FULL,
        scales: Sequence[int] | None = None,
        expert_rate_scale: float = 1.0,
    ):
        if variant is Variant.SINGLE_SCALE:
            if scales is not None and len(scales) != 1:
                raise InvalidArgumentError("single-scale variant takes exactly one scale")
            schedule = single_scale_schedule(horizon, scales[0] if scales else None)
        else:
            schedule = build_schedule(horizon, scales)
        self.state = init_state(n, schedule, variant, expert_rate_scale)
        self.play_rng = play_rng
        self.observe_rng = observe_rng

    def step(self, feedback: Feedback) -> RoundDecision:
        decision, self.state = stabl_round(self.state, self.play_rng, self.observe_rng, feedback)
        return decision
