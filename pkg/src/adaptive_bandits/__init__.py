"""Strongly adaptive regret minimization with bandit feedback plus one extra query."""

from .core_online import (
    ArmDistribution,
    ClassicExp3,
    Exp3,
    Exp3State,
    SparseLossEstimate,
    exp3_update,
    sample_arm,
    sparse_loss_estimate,
    uniform_distribution,
)
from .errors import BudgetExceededError, InvalidArgumentError, NumericDomainError, ProtocolViolationError
from .stabl import (
    IntervalSchedule,
    RoundDecision,
    StablLearner,
    StablState,
    Variant,
    build_schedule,
    eta_k,
    meta_play_distribution,
    meta_update,
    observation_distribution,
    r_tilde,
    stabl_round,
)

__version__ = "0.1.0"
