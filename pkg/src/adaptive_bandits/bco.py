"""Strongly adaptive bandit convex optimization.

Experts are projected online gradient descent instances on a shrunk copy
of the domain, so every perturbed query ``x + delta * u`` stays feasible.
Two modes:

* three queries per round: the played mixture point, plus a two-point
  gradient estimate at one uniformly sampled expert;
* two queries per round: one shared gradient estimate at the played point,
  with linear surrogate losses for every expert and the meta layer.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, NumericDomainError
from .stabl import IntervalSchedule, build_schedule

Projection = Callable[[np.ndarray], np.ndarray]


class Mode(enum.Enum):
    THREE_QUERY = "three_query"
    TWO_QUERY_SURROGATE = "two_query_surrogate"

    @property
    def queries(self) -> int:
        return 3 if self is Mode.THREE_QUERY else 2


@dataclass(frozen=True)
class BallSandwichedDomain:
    """Convex set K with ``r B ⊂ K ⊂ D B``.

    Without ``projection`` K is the Euclidean ball of radius ``outer_radius``.
    A custom projection onto K must be idempotent and non-expansive.
    """

    dim: int
    inner_radius: float
    outer_radius: float
    projection: Projection | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("dimension must be at least 1")
        if not 0 < self.inner_radius <= self.outer_radius:
            raise InvalidArgumentError("need 0 < inner_radius <= outer_radius")

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> BallSandwichedDomain:
        return cls(dim, radius, radius)

    @property
    def kappa(self) -> float:
        return self.outer_radius / self.inner_radius

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.projection is not None:
            return np.asarray(self.projection(x), dtype=float)
        norm = np.linalg.norm(x)
        if norm <= self.outer_radius:
            return x.copy()
        return x * (self.outer_radius / norm)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)


def _shrink_factor(domain: BallSandwichedDomain, delta: float) -> float:
    if not 0 < delta < 1.0 / domain.kappa:
        raise InvalidArgumentError(f"delta must lie in (0, 1/kappa) = (0, {1.0 / domain.kappa})")
    return 1.0 - domain.kappa * delta


def project_shrunk(x, domain: BallSandwichedDomain, delta: float) -> np.ndarray:
    """Project onto ``(1 - kappa delta) K``."""
    s = _shrink_factor(domain, delta)
    x = np.asarray(x, dtype=float)
    if domain.projection is None:
        radius = domain.outer_radius * s
        norm = np.linalg.norm(x)
        return x.copy() if norm <= radius else x * (radius / norm)
    return s * domain.project(x / s)


def in_shrunk(x, domain: BallSandwichedDomain, delta: float, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.linalg.norm(project_shrunk(x, domain, delta) - x) <= tol)


def sample_unit_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    if d < 1:
        raise InvalidArgumentError("dimension must be at least 1")
    while True:
        g = rng.standard_normal(d)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def bco_gradient_estimate(
    loss_at_perturbed: float,
    loss_at_point: float,
    u,
    d: int,
    B: int,
    delta: float,
) -> np.ndarray:
    """Two-point estimate for the sampled expert, importance-weighted by ``B``."""
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive")
    return (d * B / delta) * (loss_at_perturbed - loss_at_point) * np.asarray(u, dtype=float)


def bco_loss_estimates(
    loss_at_point: float, sampled_k: int, B: int, meta_dist
) -> tuple[np.ndarray, float]:
    p = np.asarray(meta_dist, dtype=float)
    if p.size != B or not 0 <= sampled_k < B:
        raise InvalidArgumentError("meta distribution / sampled expert do not match B")
    est = np.zeros(B)
    est[sampled_k] = B * loss_at_point
    return est, float(p @ est)


@dataclass(frozen=True, eq=False)
class BcoExpertState:
    x: np.ndarray
    eta: float
    scale: int


def ogd_eta(domain: BallSandwichedDomain, lipschitz: float, scale: int, T: int) -> float:
    return domain.outer_radius / (domain.dim * lipschitz * math.sqrt(scale) * math.log2(T))


def ogd_step(state: BcoExpertState, grad_estimate, domain: BallSandwichedDomain, delta: float) -> BcoExpertState:
    g = np.asarray(grad_estimate, dtype=float)
    if not np.any(g):
        return state
    x = project_shrunk(state.x - state.eta * g, domain, delta)
    return replace(state, x=x)


def bco_meta_eta(scale: int, T: int, lipschitz: float, diameter: float) -> float:
    return min(0.5, math.sqrt(math.log2(T) / scale)) / (lipschitz * diameter)


@dataclass(frozen=True, eq=False)
class BcoState:
    schedule: IntervalSchedule
    domain: BallSandwichedDomain
    experts: tuple[BcoExpertState, ...]
    meta_weights: np.ndarray
    eta_meta: np.ndarray
    delta: float
    lipschitz: float
    loss_bound: float
    mode: Mode
    t: int = 1

    @property
    def B(self) -> int:
        return self.schedule.B

    @property
    def diameter(self) -> float:
        return self.domain.outer_radius

    def meta_distribution(self) -> np.ndarray:
        return self.meta_weights / self.meta_weights.sum()

    def points(self) -> np.ndarray:
        return np.vstack([e.x for e in self.experts])

    def pseudo_weight(self) -> float:
        return float(np.sum(self.meta_weights / self.eta_meta))


def r_tilde_bound(domain: BallSandwichedDomain, lipschitz: float, loss_bound: float, B: int, mode: Mode) -> float:
    """Upper bound on ``|r_tilde|`` for the given mode."""
    if mode is Mode.THREE_QUERY:
        return B * loss_bound
    # |g| <= d G, |x_t - A_k| <= 2 D
    return 2.0 * domain.dim * lipschitz * domain.outer_radius


def init_bco(
    domain: BallSandwichedDomain,
    T: int,
    lipschitz: float,
    loss_bound: float = 1.0,
    mode: Mode = Mode.THREE_QUERY,
    scales: Sequence[int] | None = None,
) -> BcoState:
    """Fresh learner with every expert at the origin and ``delta = 1/(kappa T)``.

    ``loss_bound`` caps the oracle's values on K; it sets the meta-rate cap
    that keeps every ``1 + eta_k r_tilde`` at least 1/2.
    """
    if lipschitz <= 0 or loss_bound <= 0:
        raise InvalidArgumentError("lipschitz and loss_bound must be positive")
    schedule = build_schedule(T, scales)
    B = schedule.B
    cap = 1.0 / (2.0 * r_tilde_bound(domain, lipschitz, loss_bound, B, mode))
    eta = np.array([min(bco_meta_eta(s, T, lipschitz, domain.outer_radius), cap) for s in schedule.scales])
    experts = tuple(
        BcoExpertState(np.zeros(domain.dim), ogd_eta(domain, lipschitz, s, T), s) for s in schedule.scales
    )
    return BcoState(
        schedule=schedule,
        domain=domain,
        experts=experts,
        meta_weights=eta.copy(),
        eta_meta=eta,
        delta=1.0 / (domain.kappa * T),
        lipschitz=lipschitz,
        loss_bound=loss_bound,
        mode=mode,
    )


@dataclass(frozen=True, eq=False)
class BcoRound:
    played: np.ndarray
    loss: float
    queries: int
    r_tilde: np.ndarray
    sampled_k: int | None = None
    gradient: np.ndarray | None = None


# oracle(points) -> values; points[0] is always the played point
Oracle = Callable[[list[np.ndarray]], Sequence[float]]


def _check_values(values, expected: int, loss_bound: float) -> list[float]:
    vals = [float(v) for v in values]
    if len(vals) != expected:
        raise NumericDomainError(f"oracle returned {len(vals)} values for {expected} points")
    for v in vals:
        if not math.isfinite(v):
            raise NumericDomainError(f"oracle returned non-finite loss {v!r}")
        if v < 0:
            raise NumericDomainError(f"oracle returned negative loss {v!r}")
        if v > loss_bound:
            raise NumericDomainError(f"oracle loss {v!r} exceeds the declared bound {loss_bound!r}")
    return vals


def bco_round(state: BcoState, rng: np.random.Generator, oracle: Oracle) -> tuple[BcoRound, BcoState]:
    if state.t > state.schedule.horizon:
        raise InvalidArgumentError("learner already ran for its full horizon")
    B, d, delta = state.B, state.domain.dim, state.delta
    p = state.meta_distribution()
    A = state.points()
    x = p @ A
    experts = list(state.experts)

    if state.mode is Mode.THREE_QUERY:
        k = int(rng.integers(B))
        u = sample_unit_sphere(d, rng)
        anchor = A[k]
        loss_x, loss_pert, loss_anchor = _check_values(
            oracle([x, anchor + delta * u, anchor]), 3, state.loss_bound
        )
        g = bco_gradient_estimate(loss_pert, loss_anchor, u, d, B, delta)
        experts[k] = ogd_step(experts[k], g, state.domain, delta)
        est, mix = bco_loss_estimates(loss_anchor, k, B, p)
        r = mix - est
        sampled = k
    else:
        u = sample_unit_sphere(d, rng)
        loss_x, loss_pert = _check_values(oracle([x, x + delta * u]), 2, state.loss_bound)
        g = (d / delta) * (loss_pert - loss_x) * u
        experts = [ogd_step(e, g, state.domain, delta) for e in experts]
        r = g @ x - A @ g
        sampled = None

    w = state.meta_weights * (1.0 + state.eta_meta * r)
    restart = state.schedule.restarts_at(state.t + 1)
    w[restart] = state.eta_meta[restart]
    if np.any(w <= 0):
        raise NumericDomainError("meta weight became non-positive; is loss_bound too small?")
    for k in np.flatnonzero(restart):
        experts[k] = replace(experts[k], x=np.zeros(d))

    info = BcoRound(played=x, loss=loss_x, queries=state.mode.queries, r_tilde=r, sampled_k=sampled, gradient=g)
    return info, replace(state, experts=tuple(experts), meta_weights=w, t=state.t + 1)


def run_bco(
    state: BcoState,
    loss_fn: Callable[[int, np.ndarray], float],
    rng: np.random.Generator,
    rounds: int | None = None,
):
    """Drive ``state`` against ``loss_fn(t, x)``; returns the round infos, final state and oracle."""
    from .environments import PointOracle

    oracle = PointOracle(loss_fn, budget=state.mode.queries)
    infos = []
    rounds = state.schedule.horizon - state.t + 1 if rounds is None else rounds
    for _ in range(rounds):
        t = state.t
        info, state = bco_round(state, rng, lambda pts, t=t: oracle.evaluate(t, pts))
        infos.append(info)
    return infos, state, oracle
