"""Dual-encoder record matching for paired tabular microdata."""

from ._dualmatch import (
    DualmatchError,
    Model,
    average_precision,
    bisecting_kmeans,
    encoder_rows_forwarded,
    generate_synthetic,
    ndcg_at_k,
    oracle_y,
    reset_encoder_rows_forwarded,
    run_cli,
)

__all__ = [
    "DualmatchError",
    "Model",
    "average_precision",
    "bisecting_kmeans",
    "encoder_rows_forwarded",
    "generate_synthetic",
    "ndcg_at_k",
    "oracle_y",
    "reset_encoder_rows_forwarded",
    "run_cli",
]
