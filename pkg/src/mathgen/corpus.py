"""Problem corpus: loading, difficulty tiering, and few-shot example sampling."""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .errors import CorpusError, SamplingError

logger = logging.getLogger(__name__)

DEFAULT_FEWSHOT_K = 3


class DifficultyLevel(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @property
    def rank(self) -> int:
        """Position in the cognitive-demand order (easy=0 < medium=1 < hard=2)."""
        return _DIFFICULTY_ORDER.index(self)


_DIFFICULTY_ORDER = [DifficultyLevel.EASY, DifficultyLevel.MEDIUM, DifficultyLevel.HARD]


class SamplingStrategy(str, Enum):
    """How few-shot examples are selected and labeled.

    EMPIRICAL: examples span all tiers, each shown with its tier label.
    PROMPTING_EMPIRICAL: only examples from the requested tier, with label.
    PROMPTING_SIMPLE: random examples from all tiers, shown without labels.
    """

    EMPIRICAL = "empirical"
    PROMPTING_EMPIRICAL = "prompting_empirical"
    PROMPTING_SIMPLE = "prompting_simple"


@dataclass(frozen=True)
class ProblemRecord:
    """One corpus question with its empirical difficulty signal."""

    problem_id: str
    kc_name: str
    body: str
    percent_correct: float
    difficulty: DifficultyLevel | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.percent_correct <= 1.0:
            raise CorpusError(
                f"percent_correct must be in [0, 1], got {self.percent_correct}"
            )


@dataclass(frozen=True)
class SampledExample:
    """A few-shot example plus the difficulty label shown to the model (if any)."""

    record: ProblemRecord
    shown_label: DifficultyLevel | None


@dataclass(frozen=True)
class ColumnMap:
    """Maps required corpus fields to column names in the input file."""

    problem_id: str = "problem_id"
    kc_name: str = "kc_name"
    body: str = "body"
    percent_correct: str = "percent_correct"

    def required(self) -> tuple[str, str, str, str]:
        return (self.problem_id, self.kc_name, self.body, self.percent_correct)


class Corpus:
    """Immutable collection of problem records indexed by KC name."""

    def __init__(self, records: list[ProblemRecord]):
        self._records = tuple(records)
        index: dict[str, list[str]] = {}
        for rec in self._records:
            index.setdefault(rec.kc_name, []).append(rec.problem_id)
        self._kc_index = index
        self._by_id = {rec.problem_id: rec for rec in self._records}

    @property
    def records(self) -> tuple[ProblemRecord, ...]:
        return self._records

    @property
    def kc_index(self) -> dict[str, list[str]]:
        return {kc: list(ids) for kc, ids in self._kc_index.items()}

    def kc_names(self) -> list[str]:
        return sorted(self._kc_index)

    def __len__(self) -> int:
        return len(self._records)

    def get(self, problem_id: str) -> ProblemRecord:
        return self._by_id[problem_id]

    def has_tiers(self) -> bool:
        return all(rec.difficulty is not None for rec in self._records)

    def tier(self, level: DifficultyLevel) -> list[ProblemRecord]:
        return [rec for rec in self._records if rec.difficulty is level]


def normalize_percent(raw: str | float) -> float:
    """Parse a percent-correct value, accepting 0-1 fractions or 0-100 percents."""
    value = float(raw)
    if value > 1.0:
        value = value / 100.0
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"percent correct out of range after normalization: {value}")
    return value


def load_corpus(
    path: str | Path,
    columns: ColumnMap | None = None,
    delimiter: str = ",",
) -> Corpus:
    """Load a delimiter-separated problem file into a Corpus.

    Every row must yield a valid record; otherwise a CorpusError is raised
    carrying a per-row error report (row numbers are 1-based data rows,
    header excluded).
    """
    columns = columns or ColumnMap()
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        missing = [col for col in columns.required() if col not in header]
        if missing:
            raise CorpusError(f"corpus file {path} is missing columns: {missing}")

        records: list[ProblemRecord] = []
        row_errors: list[tuple[int, str]] = []
        seen_ids: set[str] = set()
        for row_num, row in enumerate(reader, start=1):
            problem_id = (row.get(columns.problem_id) or "").strip()
            kc_name = (row.get(columns.kc_name) or "").strip()
            body = (row.get(columns.body) or "").strip()
            raw_pc = (row.get(columns.percent_correct) or "").strip()
            if not problem_id:
                row_errors.append((row_num, "empty problem id"))
                continue
            if problem_id in seen_ids:
                row_errors.append((row_num, f"duplicate problem id {problem_id!r}"))
                continue
            if not body:
                row_errors.append((row_num, "empty question body"))
                continue
            try:
                pc = normalize_percent(raw_pc)
            except ValueError:
                row_errors.append(
                    (row_num, f"unparseable percent correct {raw_pc!r}")
                )
                continue
            seen_ids.add(problem_id)
            records.append(
                ProblemRecord(
                    problem_id=problem_id,
                    kc_name=kc_name,
                    body=body,
                    percent_correct=pc,
                )
            )

    if row_errors:
        detail = "; ".join(f"row {n}: {msg}" for n, msg in row_errors)
        raise CorpusError(
            f"corpus file {path} has {len(row_errors)} bad row(s): {detail}",
            row_errors=row_errors,
        )
    return Corpus(records)


def assign_difficulty(corpus: Corpus) -> Corpus:
    """Partition records into easy/medium/hard terciles by percent correct.

    Higher percent correct means easier. Records are ordered by descending
    percent correct with ties broken by ascending problem id, then split
    into three contiguous tiers whose sizes differ by at most one (earlier
    tiers absorb the remainder).
    """
    n = len(corpus)
    if n < 3:
        raise CorpusError(f"need at least 3 records to form difficulty tiers, got {n}")

    ordered = sorted(
        corpus.records, key=lambda r: (-r.percent_correct, r.problem_id)
    )
    base, rem = divmod(n, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]

    tiered: dict[str, DifficultyLevel] = {}
    cursor = 0
    for level, size in zip(_DIFFICULTY_ORDER, sizes):
        for rec in ordered[cursor : cursor + size]:
            tiered[rec.problem_id] = level
        cursor += size

    return Corpus(
        [replace(rec, difficulty=tiered[rec.problem_id]) for rec in corpus.records]
    )


def _eligible_pool(
    corpus: Corpus,
    kc: str,
    requested: DifficultyLevel,
    strategy: SamplingStrategy,
    k: int,
) -> list[ProblemRecord]:
    """Records a draw may use, honoring same-KC scoping with corpus-wide fallback."""

    def filter_records(records: list[ProblemRecord]) -> list[ProblemRecord]:
        if strategy is SamplingStrategy.PROMPTING_EMPIRICAL:
            return [r for r in records if r.difficulty is requested]
        return list(records)

    same_kc = [corpus.get(pid) for pid in corpus.kc_index[kc]]
    pool = filter_records(same_kc)
    if len(pool) >= k:
        return pool

    fallback = filter_records(list(corpus.records))
    if len(fallback) > len(pool):
        logger.warning(
            "KC %r has only %d eligible example(s) for k=%d; falling back to a corpus-wide draw",
            kc,
            len(pool),
            k,
        )
    return fallback


def sample_examples(
    corpus: Corpus,
    kc: str,
    requested: DifficultyLevel,
    strategy: SamplingStrategy,
    k: int = DEFAULT_FEWSHOT_K,
    rng: random.Random | None = None,
) -> list[SampledExample]:
    """Draw k few-shot examples under the given strategy.

    Deterministic for a given rng seed. Examples come from the same KC when
    enough exist there, otherwise from the whole corpus. Returns fewer than
    k examples only when the eligible pool is smaller than k.
    """
    if rng is None:
        rng = random.Random()
    if k < 1:
        raise SamplingError(f"k must be >= 1, got {k}")
    if kc not in corpus.kc_index:
        raise SamplingError(f"unknown KC {kc!r}")
    if strategy in (SamplingStrategy.EMPIRICAL, SamplingStrategy.PROMPTING_EMPIRICAL):
        if not corpus.has_tiers():
            raise SamplingError(
                f"strategy {strategy.value} requires difficulty tiers; "
                "call assign_difficulty first"
            )

    pool = _eligible_pool(corpus, kc, requested, strategy, k)

    if strategy is SamplingStrategy.PROMPTING_EMPIRICAL:
        if not pool:
            raise SamplingError(
                f"no examples available in requested tier {requested.value!r} "
                f"for KC {kc!r}"
            )
        picks = rng.sample(pool, min(k, len(pool)))
        return [SampledExample(rec, rec.difficulty) for rec in picks]

    if strategy is SamplingStrategy.PROMPTING_SIMPLE:
        if not pool:
            raise SamplingError(f"no examples available for KC {kc!r}")
        picks = rng.sample(pool, min(k, len(pool)))
        return [SampledExample(rec, None) for rec in picks]

    # EMPIRICAL: spread the draw across tiers, cycling easy -> medium -> hard.
    queues = []
    for level in _DIFFICULTY_ORDER:
        tier_recs = [r for r in pool if r.difficulty is level]
        rng.shuffle(tier_recs)
        queues.append(tier_recs)
    if not any(queues):
        raise SamplingError(f"no examples available for KC {kc!r}")

    picks = []
    while len(picks) < k and any(queues):
        for queue in queues:
            if queue and len(picks) < k:
                picks.append(queue.pop(0))
    return [SampledExample(rec, rec.difficulty) for rec in picks]
