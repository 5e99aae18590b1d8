"""Shared fixtures: tiny corpora, generation contexts, scripted responses."""

from __future__ import annotations

import random

import pytest

from mathgen.agents import GenerationContext
from mathgen.corpus import (
    Corpus,
    DifficultyLevel,
    ProblemRecord,
    assign_difficulty,
)


def make_corpus(n: int = 9, kc: str = "fractions", seed: int = 7) -> Corpus:
    """n records with distinct percent-corrects under one KC, tiers assigned."""
    rng = random.Random(seed)
    values = [round(0.05 + 0.9 * i / max(1, n - 1), 4) for i in range(n)]
    rng.shuffle(values)
    records = [
        ProblemRecord(
            problem_id=f"p{i:03d}",
            kc_name=kc,
            body=f"Compute problem number {i} about {kc}.",
            percent_correct=values[i],
        )
        for i in range(n)
    ]
    return assign_difficulty(Corpus(records))


@pytest.fixture
def corpus() -> Corpus:
    return make_corpus()


@pytest.fixture
def ctx(corpus: Corpus) -> GenerationContext:
    return GenerationContext(
        kc_name="fractions",
        requested_difficulty=DifficultyLevel.MEDIUM,
    )


def qa_text(question: str = "What is 2+3?", answer: str = "5") -> str:
    return f"QUESTION: {question}\nANSWER: {answer}"


def write_corpus_csv(path, rows, header="problem_id,kc_name,body,percent_correct"):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
