"""Command-line entry point: run sweeps, emit reports, validate corpora."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .backend import (
    DEFAULT_API_KEY_ENV,
    OpenAICompatBackend,
    RetryPolicy,
    load_mock_script,
    make_mock_backend,
)
from .corpus import (
    ColumnMap,
    DifficultyLevel,
    SamplingStrategy,
    assign_difficulty,
    load_corpus,
)
from .errors import ConfigError, CorpusError, MathGenError
from .harness import (
    CurationMode,
    ExperimentPlan,
    RunSettings,
    load_records,
    run_experiment,
)
from .reporting import report_plots, report_tables
from .workflows import WorkflowKind

logger = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "seed",
    "kcs",
    "methods",
    "difficulties",
    "strategies",
    "rounds",
    "n_agents",
    "curation_modes",
    "repetitions",
    "k",
    "pool_size",
    "autocot",
    "solution_generation",
    "allow_extended_ranges",
    "generator_model",
    "judge_model",
    "base_url",
    "api_key_env",
    "timeout",
    "max_concurrency",
    "retry",
    "corpus_columns",
    "corpus_delimiter",
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration file (plan axes plus backend settings)."""

    plan: ExperimentPlan
    seed: int = 0
    generator_model: str = "gpt-4o-mini"
    judge_model: str = "gpt-4"
    base_url: str = "https://api.openai.com"
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 120.0
    max_concurrency: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    corpus_columns: ColumnMap = field(default_factory=ColumnMap)
    corpus_delimiter: str = ","


def _enum_list(values, enum_cls, key):
    try:
        return tuple(enum_cls(v) for v in values)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def parse_run_config(data: dict) -> RunConfig:
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if "methods" not in data:
        raise ConfigError("config must list 'methods'")

    plan = ExperimentPlan(
        methods=_enum_list(data["methods"], WorkflowKind, "methods"),
        difficulties=_enum_list(
            data.get("difficulties", [d.value for d in DifficultyLevel]),
            DifficultyLevel,
            "difficulties",
        ),
        strategies=_enum_list(
            data.get("strategies", ["empirical"]), SamplingStrategy, "strategies"
        ),
        rounds=tuple(data.get("rounds", [2])),
        n_agents=tuple(data.get("n_agents", [2])),
        curation_modes=_enum_list(
            data.get("curation_modes", ["bloom"]), CurationMode, "curation_modes"
        ),
        repetitions=data.get("repetitions", 5),
        kcs=tuple(data["kcs"]) if data.get("kcs") else None,
        k=data.get("k", 3),
        pool_size=data.get("pool_size", 3),
        autocot=data.get("autocot", False),
        solution_generation=data.get("solution_generation", False),
        allow_extended_ranges=data.get("allow_extended_ranges", False),
    )
    retry_data = data.get("retry", {})
    retry = RetryPolicy(
        max_retries=retry_data.get("max_retries", 3),
        base_delay=retry_data.get("base_delay", 1.0),
        factor=retry_data.get("factor", 2.0),
    )
    columns = ColumnMap(**data.get("corpus_columns", {}))
    return RunConfig(
        plan=plan,
        seed=data.get("seed", 0),
        generator_model=data.get("generator_model", "gpt-4o-mini"),
        judge_model=data.get("judge_model", "gpt-4"),
        base_url=data.get("base_url", "https://api.openai.com"),
        api_key_env=data.get("api_key_env", DEFAULT_API_KEY_ENV),
        timeout=data.get("timeout", 120.0),
        max_concurrency=data.get("max_concurrency", 4),
        retry=retry,
        corpus_columns=columns,
        corpus_delimiter=data.get("corpus_delimiter", ","),
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return parse_run_config(data)


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    seed = args.seed if args.seed is not None else config.seed

    corpus = load_corpus(
        args.corpus, columns=config.corpus_columns, delimiter=config.corpus_delimiter
    )
    corpus = assign_difficulty(corpus)

    if args.backend == "live":
        backend = OpenAICompatBackend(
            base_url=config.base_url,
            api_key_env=config.api_key_env,
            timeout=config.timeout,
            retry=config.retry,
            max_concurrency=config.max_concurrency,
        )
    else:
        script = load_mock_script(args.script) if args.script else None
        def backend():  # fresh mock per cell keeps sweeps order-independent
            return make_mock_backend(script)

    settings = RunSettings(
        run_seed=seed,
        generator_model=config.generator_model,
        judge_model=config.judge_model,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "runs.jsonl"

    def progress(record: dict) -> None:
        print(
            f"[{record['status']}] {record['run_id']} "
            f"{record['config']['workflow']} {record['difficulty']} "
            f"rep={record['repetition']}"
        )

    written = run_experiment(
        config.plan,
        corpus,
        backend,
        settings=settings,
        out_path=records_path,
        concurrency=args.concurrency,
        on_record=progress,
    )
    errors = [rec for rec in written if rec["status"] != "ok"]
    print(
        f"wrote {len(written)} record(s) to {records_path} "
        f"({len(errors)} error(s))"
    )
    return 1 if errors else 0


def _cmd_report(args: argparse.Namespace) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        print(f"records file not found: {records_path}", file=sys.stderr)
        return 2
    records = load_records(records_path)
    out_dir = Path(args.out)
    tables = report_tables(records, out_dir)
    plots = report_plots(records, out_dir)
    for group in (tables, plots):
        for name, paths in group.items():
            listed = ", ".join(str(p) for p in paths.values())
            print(f"{name}: {listed}")
    print(f"report built from {len(records)} record(s)")
    return 0


def _cmd_validate_corpus(args: argparse.Namespace) -> int:
    try:
        corpus = load_corpus(args.corpus)
    except CorpusError as exc:
        if exc.row_errors:
            print(f"corpus has {len(exc.row_errors)} bad row(s):", file=sys.stderr)
            for row_num, message in exc.row_errors:
                print(f"  row {row_num}: {message}", file=sys.stderr)
        else:
            print(str(exc), file=sys.stderr)
        return 1
    print(f"records: {len(corpus)}")
    print(f"knowledge components: {len(corpus.kc_names())}")
    if len(corpus) >= 3:
        tiered = assign_difficulty(corpus)
        sizes = {
            level.value: len(tiered.tier(level)) for level in DifficultyLevel
        }
        print(f"difficulty tiers: {sizes}")
    print("corpus is valid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mathgen",
        description=(
            "Multi-agent generation of middle-school math questions with "
            "difficulty control, cognitive-demand curation, and rubric scoring."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment plan")
    run_p.add_argument("--config", required=True, help="JSON run configuration")
    run_p.add_argument("--corpus", required=True, help="problem corpus CSV")
    run_p.add_argument(
        "--backend", choices=["live", "mock"], default="mock", help="chat backend"
    )
    run_p.add_argument(
        "--script", default=None, help="mock script JSON (omit for the auto mock)"
    )
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument(
        "--concurrency", type=int, default=1, help="cells executed in parallel"
    )
    run_p.set_defaults(func=_cmd_run)

    report_p = sub.add_parser("report", help="emit tables and figures from records")
    report_p.add_argument("--records", required=True, help="runs.jsonl path")
    report_p.add_argument("--out", default="report", help="output directory")
    report_p.set_defaults(func=_cmd_report)

    validate_p = sub.add_parser("validate-corpus", help="check a corpus file")
    validate_p.add_argument("--corpus", required=True, help="problem corpus CSV")
    validate_p.set_defaults(func=_cmd_validate_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MathGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
