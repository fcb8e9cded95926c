"""Oblivious environments behind an announce-then-reveal query protocol.

Loss matrices are fixed before the first round.  Learners talk to a
:class:`QuerySession`, which hands out losses only for arms announced for
the current round and logs every exchange in a transcript.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, NumericDomainError, ProtocolViolationError

MAB_QUERY_BUDGET = 2
BCO_QUERY_BUDGET = 3


@dataclass(frozen=True)
class TranscriptRecord:
    t: int
    announced: tuple  # arms or points, in announcement order; the first is the played one
    revealed: tuple  # (key, value) pairs, one per distinct announced arm/point
    suffered: float


@dataclass
class QueryTranscript:
    records: list[TranscriptRecord] = field(default_factory=list)

    def queries_per_round(self) -> list[int]:
        return [len(r.announced) for r in self.records]

    def __len__(self):
        return len(self.records)


class LossMatrixEnv:
    """Environment backed by a fixed ``(T, n)`` loss matrix with entries in [0, 1]."""

    def __init__(self, losses):
        L = np.array(losses, dtype=float)
        if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 1:
            raise InvalidArgumentError("loss matrix must be a non-empty (T, n) array")
        if not np.all(np.isfinite(L)) or L.min() < 0 or L.max() > 1:
            raise InvalidArgumentError("losses must lie in [0, 1]")
        L.setflags(write=False)
        self._losses = L

    @property
    def losses(self) -> np.ndarray:
        return self._losses

    @property
    def rewards(self) -> np.ndarray:
        return 1.0 - self._losses

    @property
    def T(self) -> int:
        return self._losses.shape[0]

    @property
    def n(self) -> int:
        return self._losses.shape[1]

    def session(self, budget: int = MAB_QUERY_BUDGET) -> QuerySession:
        return QuerySession(self, budget)


class PiecewiseExpertEnv(LossMatrixEnv):
    """Uniform [0, 0.5) base rewards with one arm boosted per segment.

    Segment ``j`` (split at ``change_points``, zero-based row indices) boosts
    arm ``j mod n``.  Learners see losses ``1 - reward``.
    """

    def __init__(self, rewards, change_points: Sequence[int], boost: float):
        self._rewards = np.array(rewards, dtype=float)
        self._rewards.setflags(write=False)
        self.change_points = tuple(change_points)
        self.boost = boost
        super().__init__(1.0 - self._rewards)

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards

    def segments(self) -> list[tuple[int, int]]:
        """Half-open zero-based row ranges of the segments."""
        edges = [0, *self.change_points, self.T]
        return list(zip(edges[:-1], edges[1:]))

    def boosted_arms(self) -> np.ndarray:
        seg = np.searchsorted(np.asarray(self.change_points, dtype=int), np.arange(self.T), side="right")
        return seg % self.n


def validate_change_points(change_points: Sequence[int], T: int) -> list[str]:
    problems = []
    cps = list(change_points)
    for c in cps:
        if not (isinstance(c, (int, np.integer)) and 1 < c < T):
            problems.append(f"change point {c!r} must be an integer strictly between 1 and horizon {T}")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        problems.append("change points must be strictly increasing")
    return problems


def generate_piecewise(
    n: int,
    T: int,
    change_points: Sequence[int],
    boost: float = 0.5,
    seed=0,
) -> PiecewiseExpertEnv:
    """Draw the reward matrix for the shifting-best-arm experiment.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1 or T < 2:
        raise InvalidArgumentError("need n >= 1 and T >= 2")
    problems = validate_change_points(change_points, T)
    if problems:
        raise InvalidArgumentError("; ".join(problems))
    if not 0 <= boost <= 0.5:
        raise InvalidArgumentError("boost must lie in [0, 0.5] to keep rewards in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rewards = rng.uniform(0.0, 0.5, size=(T, n))
    seg = np.searchsorted(np.asarray(change_points, dtype=int), np.arange(T), side="right")
    rewards[np.arange(T), seg % n] += boost
    return PiecewiseExpertEnv(rewards, change_points, boost)


def load_loss_csv(path) -> LossMatrixEnv:
    """Read a ``t,arm_0,...,arm_{n-1}`` loss matrix."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t":
            raise InvalidArgumentError(f"{path}: header must start with 't'")
        arms = [h.strip() for h in header[1:]]
        if not arms or arms != [f"arm_{i}" for i in range(len(arms))]:
            raise InvalidArgumentError(f"{path}: arm columns must be arm_0..arm_{{n-1}}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidArgumentError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}:{lineno}: {exc}") from None
            if any(not (0.0 <= v <= 1.0) for v in vals):
                raise InvalidArgumentError(f"{path}:{lineno}: losses must lie in [0, 1]")
            rows.append(vals)
    return LossMatrixEnv(rows)


def write_loss_csv(path, losses) -> None:
    L = np.asarray(losses, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *(f"arm_{i}" for i in range(L.shape[1]))])
        for t, row in enumerate(L, start=1):
            w.writerow([t, *(repr(float(v)) for v in row)])


class QuerySession:
    """One learner's view of a :class:`LossMatrixEnv`; rounds are 1-based."""

    def __init__(self, env: LossMatrixEnv, budget: int = MAB_QUERY_BUDGET):
        self.env = env
        self.budget = budget
        self.transcript = QueryTranscript()
        self._last_round = 0

    def reveal(self, t: int, announced: Sequence[int]) -> dict[int, float]:
        """Losses at the announced arms for round ``t``.

        ``announced[0]`` is the played arm.  Repeats count against the
        budget but appear once in the result.
        """
        announced = tuple(int(a) for a in announced)
        if not announced:
            raise ProtocolViolationError("empty query")
        if len(announced) > self.budget:
            raise ProtocolViolationError(f"{len(announced)} queries exceed the budget of {self.budget}")
        if t <= self._last_round:
            raise ProtocolViolationError(f"round {t} was already revealed")
        if not 1 <= t <= self.env.T:
            raise ProtocolViolationError(f"round {t} outside [1, {self.env.T}]")
        row = self.env.losses[t - 1]
        out = {}
        for a in announced:
            if not 0 <= a < self.env.n:
                raise ProtocolViolationError(f"arm {a} outside [0, {self.env.n})")
            out[a] = float(row[a])
        self._last_round = t
        self.transcript.records.append(
            TranscriptRecord(t, announced, tuple(out.items()), out[announced[0]])
        )
        return out


class PointOracle:
    """Loss oracle over points in R^d, for the convex-optimization learners.

    ``loss_fn(t, x)`` must be deterministic; optional Gaussian observation
    noise (``noise_std``) is drawn from ``rng``.  Values must be finite and
    non-negative.
    """

    def __init__(
        self,
        loss_fn: Callable[[int, np.ndarray], float],
        budget: int = BCO_QUERY_BUDGET,
        noise_std: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        self.loss_fn = loss_fn
        self.budget = budget
        self.noise_std = noise_std
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.transcript = QueryTranscript()
        self.calls = 0
        self._last_round = 0

    def evaluate(self, t: int, points: Sequence[np.ndarray]) -> list[float]:
        """Evaluate round ``t``'s loss at ``points``; ``points[0]`` is the played point."""
        if not points:
            raise ProtocolViolationError("empty query")
        if len(points) > self.budget:
            raise ProtocolViolationError(f"{len(points)} queries exceed the budget of {self.budget}")
        if t <= self._last_round:
            raise ProtocolViolationError(f"round {t} was already evaluated")
        values = []
        for x in points:
            v = float(self.loss_fn(t, np.asarray(x, dtype=float)))
            if self.noise_std:
                v = max(0.0, v + self.noise_std * float(self.rng.standard_normal()))
            if not math.isfinite(v):
                raise NumericDomainError(f"oracle returned non-finite loss {v!r}")
            if v < 0:
                raise ProtocolViolationError(f"oracle returned negative loss {v!r}")
            values.append(v)
        self.calls += len(points)
        self._last_round = t
        self.transcript.records.append(
            TranscriptRecord(
                t,
                tuple(tuple(np.asarray(p, dtype=float)) for p in points),
                tuple(zip(range(len(values)), values)),
                values[0],
            )
        )
        return values


def quadratic_loss(center) -> Callable[[int, np.ndarray], float]:
    """Time-invariant ``||x - center||^2``."""
    c = np.asarray(center, dtype=float)

    def loss(t, x):
        diff = x - c
        return float(diff @ diff)

    return loss


def piecewise_quadratic_loss(centers, change_points: Sequence[int]) -> Callable[[int, np.ndarray], float]:
    """``||x - c_j||^2`` with the center switching at 1-based rounds ``change_points``."""
    cs = np.asarray(centers, dtype=float)
    cps = np.asarray(change_points, dtype=int)

    def loss(t, x):
        diff = x - cs[int(np.searchsorted(cps, t, side="right")) % len(cs)]
        return float(diff @ diff)

    return loss
