"""Experiment harness: plan expansion, cell execution, and run records.

Records are appended to a JSONL file in plan order, one object per line,
so sweeps are resumable and two runs of the same plan with the same seed
produce identical files apart from wall-clock timing fields.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from .agents import GenerationContext
from .backend import Backend, RecordingBackend
from .corpus import Corpus, DifficultyLevel, SamplingStrategy, sample_examples
from .curation import (
    CurationChoice,
    ScoredCandidate,
    bloom_score,
    curate_bloom,
    curate_random,
)
from .errors import ConfigError, MathGenError
from .evaluation import evaluate
from .workflows import (
    AGENTIC_KINDS,
    AGENTS_RANGE,
    ROUNDS_RANGE,
    WorkflowConfig,
    WorkflowKind,
    run_workflow,
)

logger = logging.getLogger(__name__)

TIMING_FIELD = "timing"


class CurationMode(str, Enum):
    BLOOM = "bloom"
    RANDOM = "random"
    NONE = "none"


@dataclass(frozen=True)
class PlanCell:
    """One unit of work: a fully resolved coordinate in the sweep."""

    kc_name: str
    difficulty: DifficultyLevel
    method: WorkflowKind
    strategy: SamplingStrategy
    rounds: int | None
    n_agents: int | None
    curation: CurationMode
    repetition: int


@dataclass(frozen=True)
class ExperimentPlan:
    methods: tuple[WorkflowKind, ...]
    difficulties: tuple[DifficultyLevel, ...] = tuple(DifficultyLevel)
    strategies: tuple[SamplingStrategy, ...] = (SamplingStrategy.EMPIRICAL,)
    rounds: tuple[int, ...] = (2,)
    n_agents: tuple[int, ...] = (2,)
    curation_modes: tuple[CurationMode, ...] = (CurationMode.BLOOM,)
    repetitions: int = 5
    kcs: tuple[str, ...] | None = None  # None: every KC in the corpus
    k: int = 3
    pool_size: int = 3
    autocot: bool = False
    solution_generation: bool = False
    allow_extended_ranges: bool = False

    def __post_init__(self) -> None:
        if not self.methods:
            raise ConfigError("plan needs at least one method")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if self.autocot and self.solution_generation:
            raise ConfigError("autocot and solution_generation are mutually exclusive")
        if not self.allow_extended_ranges:
            bad_rounds = [r for r in self.rounds if not ROUNDS_RANGE[0] <= r <= ROUNDS_RANGE[1]]
            bad_agents = [a for a in self.n_agents if not AGENTS_RANGE[0] <= a <= AGENTS_RANGE[1]]
            if bad_rounds:
                raise ConfigError(
                    f"rounds {bad_rounds} outside [{ROUNDS_RANGE[0]}, {ROUNDS_RANGE[1]}] "
                    "(set allow_extended_ranges to override)"
                )
            if bad_agents:
                raise ConfigError(
                    f"n_agents {bad_agents} outside [{AGENTS_RANGE[0]}, {AGENTS_RANGE[1]}] "
                    "(set allow_extended_ranges to override)"
                )

    def cells(self, corpus: Corpus) -> list[PlanCell]:
        """Expand the cross-product, collapsing axes a method does not use:
        baselines take no rounds/agents and are never curated; only the
        collective-consensus workflow uses the agent axis."""
        kcs = self.kcs if self.kcs is not None else tuple(corpus.kc_names())
        if not kcs:
            raise ConfigError("no KCs to generate for")
        for kc in kcs:
            if kc not in corpus.kc_index:
                raise ConfigError(f"plan references unknown KC {kc!r}")

        cells: list[PlanCell] = []
        for kc in kcs:
            for difficulty in self.difficulties:
                for method in self.methods:
                    rounds_axis = self.rounds if method in AGENTIC_KINDS else (None,)
                    agents_axis = (
                        self.n_agents if method is WorkflowKind.CC else (None,)
                    )
                    curation_axis = (
                        self.curation_modes
                        if method in AGENTIC_KINDS
                        else (CurationMode.NONE,)
                    )
                    for strategy in self.strategies:
                        for rounds in rounds_axis:
                            for n_agents in agents_axis:
                                for curation in curation_axis:
                                    for rep in range(self.repetitions):
                                        cells.append(
                                            PlanCell(
                                                kc_name=kc,
                                                difficulty=difficulty,
                                                method=method,
                                                strategy=strategy,
                                                rounds=rounds,
                                                n_agents=n_agents,
                                                curation=curation,
                                                repetition=rep,
                                            )
                                        )
        return cells


@dataclass(frozen=True)
class RunSettings:
    """Everything a cell needs besides its coordinates."""

    run_seed: int = 0
    generator_model: str = "generator"
    judge_model: str = "judge"


def cell_fingerprint(cell: PlanCell, plan: ExperimentPlan, settings: RunSettings) -> dict:
    agent_rounds = (
        cell.n_agents * cell.rounds
        if cell.method is WorkflowKind.CC and cell.n_agents and cell.rounds
        else None
    )
    pool_size = 1 if cell.curation is CurationMode.NONE else plan.pool_size
    return {
        "workflow": cell.method.value,
        "rounds": cell.rounds,
        "n_agents": cell.n_agents,
        "agent_rounds": agent_rounds,
        "strategy": cell.strategy.value,
        "autocot": plan.autocot,
        "solution_generation": plan.solution_generation,
        "curation": cell.curation.value,
        "k": plan.k,
        "pool_size": pool_size,
        "run_seed": settings.run_seed,
        "generator_model": settings.generator_model,
        "judge_model": settings.judge_model,
    }


def run_id_for(cell: PlanCell, plan: ExperimentPlan, settings: RunSettings) -> str:
    payload = {
        "fingerprint": cell_fingerprint(cell, plan, settings),
        "kc_name": cell.kc_name,
        "difficulty": cell.difficulty.value,
        "repetition": cell.repetition,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(run_seed: int, *parts: str) -> int:
    """Stable per-purpose seed so parallel cells never share rng streams."""
    blob = f"{run_seed}|" + "|".join(parts)
    return int.from_bytes(hashlib.sha256(blob.encode("utf-8")).digest()[:8], "big")


def _execute_cell(
    cell: PlanCell,
    plan: ExperimentPlan,
    corpus: Corpus,
    backend: Backend,
    settings: RunSettings,
) -> dict:
    run_id = run_id_for(cell, plan, settings)
    fingerprint = cell_fingerprint(cell, plan, settings)
    started_at = time.time()
    clock = time.perf_counter()

    base = {
        "run_id": run_id,
        "status": "ok",
        "kc_name": cell.kc_name,
        "difficulty": cell.difficulty.value,
        "repetition": cell.repetition,
        "config": fingerprint,
    }
    try:
        record = _generate_and_score(cell, plan, corpus, backend, settings, run_id)
        record = {**base, **record}
    except MathGenError as exc:
        logger.error("cell %s failed: %s", run_id, exc)
        record = {**base, "status": "error", "error": str(exc)}
    except Exception as exc:  # cell isolation: a bad cell must not kill the sweep
        logger.exception("cell %s crashed", run_id)
        record = {**base, "status": "error", "error": f"unexpected: {exc}"}

    record[TIMING_FIELD] = {
        "started_at_unix": started_at,
        "wall_seconds": time.perf_counter() - clock,
    }
    return record


def _generate_and_score(
    cell: PlanCell,
    plan: ExperimentPlan,
    corpus: Corpus,
    backend: Backend,
    settings: RunSettings,
    run_id: str,
) -> dict:
    recorder = RecordingBackend(backend)
    sampling_rng = random.Random(derive_seed(settings.run_seed, run_id, "sampling"))
    decoding_rng = random.Random(derive_seed(settings.run_seed, run_id, "decoding"))
    curation_rng = random.Random(derive_seed(settings.run_seed, run_id, "curation"))

    if cell.method is WorkflowKind.BASELINE_ZS:
        examples = ()
    else:
        examples = tuple(
            sample_examples(
                corpus,
                cell.kc_name,
                cell.difficulty,
                cell.strategy,
                k=plan.k,
                rng=sampling_rng,
            )
        )
    ctx = GenerationContext(
        kc_name=cell.kc_name,
        requested_difficulty=cell.difficulty,
        examples=examples,
        autocot=plan.autocot,
        solution_generation=plan.solution_generation,
    )
    wf_config = WorkflowConfig(
        kind=cell.method,
        rounds=cell.rounds,
        n_agents=cell.n_agents,
        autocot=plan.autocot,
        solution_generation=plan.solution_generation,
        strategy=cell.strategy,
        k=plan.k,
        run_seed=settings.run_seed,
    )

    pool_size = 1 if cell.curation is CurationMode.NONE else plan.pool_size
    outcomes = [
        run_workflow(ctx, wf_config, recorder, decoding_rng, settings.generator_model)
        for _ in range(pool_size)
    ]
    pool_pairs = [outcome.final_pair for outcome in outcomes]

    bloom_scores: list[int | None] = [None] * pool_size
    band_miss = None
    if cell.curation is CurationMode.BLOOM:
        bloom_scores = [
            bloom_score(pair, ctx, recorder, settings.judge_model)
            for pair in pool_pairs
        ]
        choice = curate_bloom(
            [ScoredCandidate(pair, score) for pair, score in zip(pool_pairs, bloom_scores)],
            cell.difficulty,
        )
        band_miss = choice.band_miss
    elif cell.curation is CurationMode.RANDOM:
        choice = curate_random(pool_pairs, curation_rng)
    else:
        choice = CurationChoice(0, pool_pairs[0])

    chosen_outcome = outcomes[choice.index]
    scores = evaluate(choice.pair, ctx, recorder, settings.judge_model)

    candidates = [
        {
            "question": pair.question,
            "answer": pair.answer,
            "reasoning": pair.reasoning,
            "bloom_score": bloom_scores[i],
            "consensus_reported": outcomes[i].consensus_reported,
            "rule_consensus": outcomes[i].rule_consensus,
        }
        for i, pair in enumerate(pool_pairs)
    ]
    return {
        "candidates": candidates,
        "chosen_index": choice.index,
        "band_miss": band_miss,
        "chosen": choice.pair.to_dict(),
        "scores": scores.to_dict(),
        "consensus_reported": chosen_outcome.consensus_reported,
        "rule_consensus": chosen_outcome.rule_consensus,
        "usage": recorder.usage_summary(),
    }


def append_record(path: Path, record: dict) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        fh.flush()


def load_records(path: Path, ok_only: bool = True) -> list[dict]:
    """Read a run log with last-write-wins per run_id (retried cells append
    a fresh line rather than rewriting history)."""
    if not path.exists():
        return []
    latest: dict[str, dict] = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            latest[record["run_id"]] = record
    records = list(latest.values())
    if ok_only:
        records = [rec for rec in records if rec.get("status") == "ok"]
    return records


def run_experiment(
    plan: ExperimentPlan,
    corpus: Corpus,
    backend: Backend | Callable[[], Backend],
    settings: RunSettings | None = None,
    out_path: Path | str = "runs.jsonl",
    concurrency: int = 1,
    on_record: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Execute every plan cell not already completed and append its record.

    `backend` may be a shared instance (the live client) or a zero-argument
    factory producing a fresh backend per cell (mock sweeps stay
    deterministic under any concurrency because each cell owns its script
    cursor). Records are written in plan order regardless of completion
    order; cells whose run_id already has an ok record are skipped.
    """
    settings = settings or RunSettings()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    done = {
        rec["run_id"]
        for rec in load_records(out_path, ok_only=True)
    }
    cells = plan.cells(corpus)
    todo = [
        cell for cell in cells if run_id_for(cell, plan, settings) not in done
    ]
    skipped = len(cells) - len(todo)
    if skipped:
        logger.info("resume: skipping %d already-completed cell(s)", skipped)

    def make_backend() -> Backend:
        return backend() if callable(backend) else backend

    written: list[dict] = []
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        futures = [
            pool.submit(_execute_cell, cell, plan, corpus, make_backend(), settings)
            for cell in todo
        ]
        for future in futures:
            record = future.result()
            append_record(out_path, record)
            written.append(record)
            if on_record is not None:
                on_record(record)
    return written


def strip_timing(record: dict) -> dict:
    """Copy of a record without its wall-clock fields, for determinism checks."""
    return {key: value for key, value in record.items() if key != TIMING_FIELD}


def normalized_lines(path: Path) -> list[str]:
    """Canonical timing-free serialization of each record line."""
    lines = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = strip_timing(json.loads(line))
            lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    return lines
