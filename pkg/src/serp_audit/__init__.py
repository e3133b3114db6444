"""Longitudinal auditing of news search results through rank-weighted novelty."""

from .metrics import (
    AgentTermHistory,
    DiscardReason,
    NoveltyResult,
    ResultItem,
    RoundSnapshot,
    Status,
    apply_round,
    detect_new,
    rank_weight,
    rescaled_weight,
    rescaled_weights,
    round_novelty,
)

__version__ = "0.1.0"

__all__ = [
    "AgentTermHistory",
    "DiscardReason",
    "NoveltyResult",
    "ResultItem",
    "RoundSnapshot",
    "Status",
    "apply_round",
    "detect_new",
    "rank_weight",
    "rescaled_weight",
    "rescaled_weights",
    "round_novelty",
]
