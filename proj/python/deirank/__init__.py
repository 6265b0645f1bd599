"""Explain-then-score reranking of candidate patches from several agents."""

from deirank._core import (
    ApplyConflictError,
    BudgetError,
    Error,
    MalformedDiffError,
    TransportError,
    ValidationError,
    apply_patch,
    average_at_k,
    build_prompt,
    expected_random_n_at_k,
    intersect_at_k,
    metric_series_csv,
    n_at_k,
    normalize_diff,
    parse_diff,
    parse_score,
    render_before_after,
    report,
    reverse_diff,
    run,
    synthetic_matrix,
    union_at_k,
)

__version__ = "0.1.0"
