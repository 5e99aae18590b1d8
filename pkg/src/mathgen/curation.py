"""Self-curation of candidate questions by cognitive-demand score or at random."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .agents import GenerationContext, QAPair, parse_score, render_bloom_prompt, run_parsed_turn
from .backend import Backend
from .corpus import DifficultyLevel
from .errors import ConfigError

# Expected cognitive-demand band per requested difficulty. The 1-5 score
# reads 1=remember, 2=understand, 3=apply, 4=analyze/evaluate, 5=create;
# hard overlaps 4 because genuinely "create"-level middle-school items
# are rare.
BLOOM_BANDS: dict[DifficultyLevel, frozenset[int]] = {
    DifficultyLevel.EASY: frozenset({1, 2}),
    DifficultyLevel.MEDIUM: frozenset({3, 4}),
    DifficultyLevel.HARD: frozenset({4, 5}),
}

DEFAULT_POOL_SIZE = 3


@dataclass(frozen=True)
class ScoredCandidate:
    pair: QAPair
    score: int

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 5:
            raise ConfigError(f"bloom score must be in [1, 5], got {self.score}")


@dataclass(frozen=True)
class CurationChoice:
    """The selected pool candidate; index is 0-based into the input pool."""

    index: int
    pair: QAPair
    band_miss: bool = False


def expected_band(difficulty: DifficultyLevel) -> frozenset[int]:
    return BLOOM_BANDS[difficulty]


def band_distance(score: int, band: frozenset[int]) -> int:
    return min(abs(score - member) for member in band)


def bloom_score(
    pair: QAPair,
    ctx: GenerationContext,
    backend: Backend,
    model: str,
) -> int:
    """One judge call at temperature 0; replies are parsed as 'SCORE: n'."""
    score, _, _ = run_parsed_turn(
        backend,
        model,
        render_bloom_prompt(pair, ctx),
        parse_score,
        speaker="bloom",
        temperature=0.0,
    )
    return score


def curate_bloom(
    candidates: Sequence[ScoredCandidate], difficulty: DifficultyLevel
) -> CurationChoice:
    """Keep candidates whose score sits in the expected band and pick the
    earliest highest-scoring one; if the whole pool misses the band, pick
    the candidate closest to it (earliest on ties) and flag the miss."""
    if not candidates:
        raise ConfigError("cannot curate an empty candidate list")
    band = expected_band(difficulty)

    best_index: int | None = None
    for i, candidate in enumerate(candidates):
        if candidate.score not in band:
            continue
        if best_index is None or candidate.score > candidates[best_index].score:
            best_index = i
    if best_index is not None:
        return CurationChoice(best_index, candidates[best_index].pair)

    nearest = 0
    nearest_distance = band_distance(candidates[0].score, band)
    for i, candidate in enumerate(candidates[1:], start=1):
        distance = band_distance(candidate.score, band)
        if distance < nearest_distance:
            nearest, nearest_distance = i, distance
    return CurationChoice(nearest, candidates[nearest].pair, band_miss=True)


def curate_random(
    candidates: Sequence[QAPair], rng: random.Random
) -> CurationChoice:
    """Uniform choice over the pool; deterministic for a given rng seed."""
    if not candidates:
        raise ConfigError("cannot curate an empty candidate list")
    index = rng.randrange(len(candidates))
    return CurationChoice(index, candidates[index])
