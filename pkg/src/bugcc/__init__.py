"""bugcc: a buggy-code-completion benchmark toolkit.

Builds bCC instances from solution corpora (synthetic operator flips and
realistic rejected/accepted submission pairs), samples completions through
pluggable model endpoints, judges them by execution, and reports pass@k with
bug-aware mitigation pipelines.
"""
from .core import (
    BCCInstance,
    CompletionSample,
    DatasetError,
    EvaluationRecord,
    MutationSite,
    PairDiff,
    Problem,
    SamplingConfig,
    TestSuite,
    Verdict,
    read_dataset,
    write_dataset,
)
from .metrics import location_heatmap, macro_average, pass_at_k
from .modelio import EndpointConfig, MockModelClient, TokenScore
from .mutator import build_synthetic, enumerate_flippable_operators
from .pairer import Submission, build_realistic
from .pipelines import (
    build_prompt,
    heuristic_oracle_line,
    localize_line,
    postprocess_completion,
    run_pipeline,
)
from .runner import ExecLimits, InfrastructureError, judge

__version__ = "0.1.0"

__all__ = [
    "BCCInstance",
    "CompletionSample",
    "DatasetError",
    "EndpointConfig",
    "EvaluationRecord",
    "ExecLimits",
    "InfrastructureError",
    "MockModelClient",
    "MutationSite",
    "PairDiff",
    "Problem",
    "SamplingConfig",
    "Submission",
    "TestSuite",
    "TokenScore",
    "Verdict",
    "build_prompt",
    "build_realistic",
    "build_synthetic",
    "enumerate_flippable_operators",
    "heuristic_oracle_line",
    "judge",
    "localize_line",
    "location_heatmap",
    "macro_average",
    "pass_at_k",
    "postprocess_completion",
    "read_dataset",
    "run_pipeline",
    "write_dataset",
]
