"""Python access to the qrec core: dwell-based news quality, ranking metrics,
synthetic data and the training pipeline."""

from ._qrec import (
    DEFAULT_DWELL_CAP,
    ConfigError,
    DataError,
    InputError,
    NumericError,
    QrecError,
    StructuralError,
    auc,
    bin_count,
    default_config,
    dwell_distribution,
    evaluate,
    generate_dataset,
    lq_at_k,
    mrr,
    ndcg,
    pearson,
    qs_at_k,
    quality_table,
    quantize_dwell,
    score_news,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
