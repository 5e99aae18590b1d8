"""Multi-agent generation of middle-school math questions.

Pipeline: a difficulty-tiered problem corpus feeds few-shot examples into
single-shot or multi-agent generation workflows; candidate questions are
curated by cognitive-demand score and judged on five quality rubrics, with
a sweep harness that persists reproducible run records.
"""

from .agents import AgentDecision, DecisionKind, GenerationContext, QAPair
from .backend import (
    AutoMockBackend,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    OpenAICompatBackend,
    RetryPolicy,
    ScriptedBackend,
    draw_decoding_params,
)
from .corpus import (
    Corpus,
    DifficultyLevel,
    ProblemRecord,
    SampledExample,
    SamplingStrategy,
    assign_difficulty,
    load_corpus,
    sample_examples,
)
from .curation import bloom_score, curate_bloom, curate_random, expected_band
from .errors import MathGenError
from .evaluation import EvalScores, METRICS, aggregate, evaluate, judge_metric, score_histogram
from .harness import CurationMode, ExperimentPlan, RunSettings, run_experiment
from .workflows import (
    GenerationOutcome,
    Transcript,
    WorkflowConfig,
    WorkflowKind,
    detect_rule_consensus,
    run_workflow,
)

__version__ = "0.1.0"

__all__ = [
    "AgentDecision",
    "AutoMockBackend",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "Corpus",
    "CurationMode",
    "DecisionKind",
    "DifficultyLevel",
    "EvalScores",
    "ExperimentPlan",
    "GenerationContext",
    "GenerationOutcome",
    "MathGenError",
    "METRICS",
    "OpenAICompatBackend",
    "ProblemRecord",
    "QAPair",
    "RetryPolicy",
    "RunSettings",
    "SampledExample",
    "SamplingStrategy",
    "ScriptedBackend",
    "Transcript",
    "WorkflowConfig",
    "WorkflowKind",
    "aggregate",
    "assign_difficulty",
    "bloom_score",
    "curate_bloom",
    "curate_random",
    "detect_rule_consensus",
    "draw_decoding_params",
    "evaluate",
    "expected_band",
    "judge_metric",
    "load_corpus",
    "run_experiment",
    "run_workflow",
    "sample_examples",
    "score_histogram",
]
