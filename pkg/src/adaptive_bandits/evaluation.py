"""Regret over intervals, computed from realized play.

All interval endpoints are 1-based and inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, InvalidArgumentError
from .stabl import IntervalSchedule

DEFAULT_WORK_BUDGET = 10**10


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Comparator losses ``(T, m)`` plus the loss the player actually suffered each round.

    For bandits the comparators are the arms and ``suffered[t] =
    losses[t, plays[t]]``.  For continuous play the comparators can be any
    grid of fixed points, which makes every regret here a lower bound on the
    regret against the whole domain.
    """

    losses: np.ndarray
    suffered: np.ndarray
    plays: np.ndarray | None = None
    seed: int | None = None
    label: str = ""

    def __post_init__(self):
        L = np.asarray(self.losses, dtype=float)
        s = np.asarray(self.suffered, dtype=float)
        if L.ndim != 2 or s.shape != (L.shape[0],):
            raise InvalidArgumentError("suffered losses must have one entry per round of the loss matrix")
        object.__setattr__(self, "losses", L)
        object.__setattr__(self, "suffered", s)

    @classmethod
    def from_plays(cls, losses, plays, seed=None, label="") -> RunRecord:
        L = np.asarray(losses, dtype=float)
        x = np.asarray(plays, dtype=int)
        if x.shape != (L.shape[0],):
            raise InvalidArgumentError("need exactly one play per round")
        if x.min(initial=0) < 0 or x.max(initial=0) >= L.shape[1]:
            raise InvalidArgumentError("play index outside the arm range")
        return cls(L, L[np.arange(L.shape[0]), x], x, seed, label)

    @property
    def T(self) -> int:
        return self.losses.shape[0]


def _check_interval(record: RunRecord, j: int, s: int):
    if not 1 <= j <= s <= record.T:
        raise InvalidArgumentError(f"interval [{j}, {s}] not within [1, {record.T}]")


def static_regret(record: RunRecord, j: int, s: int) -> float:
    """Player loss on [j, s] minus the best single comparator's loss there."""
    _check_interval(record, j, s)
    player = record.suffered[j - 1 : s].sum()
    best = record.losses[j - 1 : s].sum(axis=0).min()
    return float(player - best)


def sa_regret_exact(record: RunRecord, work_budget: int = DEFAULT_WORK_BUDGET) -> tuple[float, tuple[int, int]]:
    """Maximum static regret over all T(T+1)/2 intervals.

    Ties go to the earliest start, then the shortest interval.
    """
    T, m = record.losses.shape
    work = T * (T + 1) // 2 * m
    if work > work_budget:
        raise BudgetExceededError(
            f"exact scan needs {work:.3g} operations (budget {work_budget:.3g}); "
            "use sa_regret_geometric instead"
        )
    P = np.concatenate([[0.0], np.cumsum(record.suffered)])
    C = np.vstack([np.zeros(m), np.cumsum(record.losses, axis=0)])
    best_val, best_iv = -np.inf, (1, 1)
    for j in range(1, T + 1):
        player = P[j:] - P[j - 1]
        comp = (C[j:] - C[j - 1]).min(axis=1)
        reg = player - comp
        i = int(np.argmax(reg))
        if reg[i] > best_val:
            best_val, best_iv = float(reg[i]), (j, j + i)
    return best_val, best_iv


def sa_regret_geometric(record: RunRecord, schedule: IntervalSchedule) -> dict[int, float]:
    """Per scale ``s``, the largest regret over the aligned blocks ``[(q-1)s+1, qs]``."""
    if schedule.horizon != record.T:
        raise InvalidArgumentError("schedule horizon does not match the record")
    out = {}
    for s in schedule.scales:
        q = record.T // s
        player = record.suffered[: q * s].reshape(q, s).sum(axis=1)
        best = record.losses[: q * s].reshape(q, s, -1).sum(axis=1).min(axis=1)
        out[s] = float((player - best).max())
    return out


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over at most ``window`` points; the first entries average what exists."""
    x = np.asarray(series, dtype=float)
    if not 1 <= window <= max(x.size, 1):
        raise InvalidArgumentError(f"window must lie in [1, {x.size}]")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
