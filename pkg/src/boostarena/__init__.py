"""Boosting receivers against committed senders in repeated sender-receiver games."""

__version__ = "0.1.0"

from .stage_game import (  # noqa: E402
    SenderStrategy,
    StageGame,
    canonical_r1,
    make_insurance,
    make_rubinstein,
    make_signaling,
    rational_benchmark,
    rational_label,
    sender_expected_payoff,
)
from .arena import (  # noqa: E402
    ReceiverAlgorithm,
    build_exploit_strategy,
    contrast_table,
    emulation_check,
    run_algorithm_game,
)

__all__ = [
    "SenderStrategy", "StageGame", "canonical_r1", "make_insurance", "make_rubinstein",
    "make_signaling", "rational_benchmark", "rational_label", "sender_expected_payoff",
    "ReceiverAlgorithm", "build_exploit_strategy", "contrast_table", "emulation_check",
    "run_algorithm_game",
]
