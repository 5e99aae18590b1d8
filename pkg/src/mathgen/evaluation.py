"""Rubric-based judging of generated questions and score aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .agents import GenerationContext, QAPair, parse_score, render_judge_prompt, run_parsed_turn
from .backend import Backend
from .errors import ConfigError

METRICS = (
    "clarity",
    "relevance",
    "importance",
    "difficulty_matching",
    "answerability",
)

RUBRICS = {
    "clarity": (
        "Clarity: whether the wording is coherent and precise enough for a "
        "middle-school student to understand on first reading. "
        "1 = confusing, 5 = exceptionally clear."
    ),
    "relevance": (
        "Relevance: how well the question fits the named skill and the "
        "example questions. 1 = unrelated to the skill, 5 = squarely on it."
    ),
    "importance": (
        "Importance: whether the question exercises central ideas of the "
        "skill rather than peripheral details. 1 = peripheral, 5 = essential."
    ),
    "difficulty_matching": (
        "Difficulty matching: how well the question's cognitive complexity "
        "fits the requested difficulty (easy = basic recall, medium = "
        "moderate conceptual reasoning, hard = advanced analysis). "
        "1 = no alignment, 5 = perfect alignment."
    ),
    "answerability": (
        "Answerability: whether a middle-school student could reasonably "
        "produce an answer from the information given. "
        "1 = unanswerable, 5 = clearly answerable."
    ),
}


@dataclass(frozen=True)
class EvalScores:
    """The five rubric scores. Judges produce integers; aggregated rows may
    carry fractional means, so values are validated as numbers in [1, 5]."""

    clarity: float
    relevance: float
    importance: float
    difficulty_matching: float
    answerability: float

    def __post_init__(self) -> None:
        for metric in METRICS:
            value = getattr(self, metric)
            if not 1 <= value <= 5:
                raise ConfigError(f"{metric} score must be in [1, 5], got {value}")

    @property
    def avg_score(self) -> float:
        return fmean(getattr(self, metric) for metric in METRICS)

    def to_dict(self) -> dict[str, float]:
        out: dict[str, float] = {metric: getattr(self, metric) for metric in METRICS}
        out["avg_score"] = self.avg_score
        return out


def judge_metric(
    pair: QAPair,
    metric: str,
    ctx: GenerationContext,
    backend: Backend,
    model: str,
) -> int:
    """One judge call for one rubric, temperature 0, parsed as 'SCORE: n'."""
    if metric not in RUBRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    score, _, _ = run_parsed_turn(
        backend,
        model,
        render_judge_prompt(pair, RUBRICS[metric], ctx),
        parse_score,
        speaker=f"judge-{metric}",
        temperature=0.0,
    )
    return score


def evaluate(
    pair: QAPair,
    ctx: GenerationContext,
    backend: Backend,
    model: str,
) -> EvalScores:
    """Score the pair on all five rubrics with independent judge calls."""
    return EvalScores(
        **{metric: judge_metric(pair, metric, ctx, backend, model) for metric in METRICS}
    )


def _lookup(record: Mapping, path: str):
    value = record
    for part in path.split("."):
        value = value[part]
    return value


def _sort_key(group_key: tuple) -> tuple:
    return tuple((value is None, str(value)) for value in group_key)


def aggregate(
    records: Iterable[Mapping], group_by: Sequence[str]
) -> list[dict]:
    """Per-group means of the five metrics plus the average score.

    Group fields are dotted paths into the record (e.g. "config.workflow").
    Means are kept at full precision; rendering to 2 decimals happens at
    table-emission time. Rows come back sorted by group key.
    """
    groups: dict[tuple, list[Mapping]] = {}
    for record in records:
        key = tuple(_lookup(record, path) for path in group_by)
        groups.setdefault(key, []).append(record)

    rows = []
    for key in sorted(groups, key=_sort_key):
        members = groups[key]
        row = dict(zip(group_by, key))
        row["n"] = len(members)
        for metric in METRICS:
            row[metric] = fmean(rec["scores"][metric] for rec in members)
        row["avg_score"] = fmean(rec["scores"]["avg_score"] for rec in members)
        rows.append(row)
    return rows


def score_histogram(records: Iterable[Mapping], metric: str) -> dict[int, int]:
    """Counts of a metric's integer scores over the 1..5 bins."""
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    bins = {score: 0 for score in range(1, 6)}
    for record in records:
        value = record["scores"][metric]
        score = int(round(value))
        if not 1 <= score <= 5:
            raise ConfigError(f"{metric} score {value} outside the 1..5 bins")
        bins[score] += 1
    return bins


def render_score(value: float) -> str:
    """Two-decimal rendering used everywhere scores are displayed."""
    return f"{value:.2f}"
