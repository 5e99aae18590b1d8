from __future__ import annotations

import csv


from mathgen.evaluation import METRICS, aggregate
from mathgen.reporting import (
    method_label,
    report_plots,
    report_tables,
)

METHOD_CONFIGS = [
    ("baseline_zs", "none"),
    ("baseline_fs", "none"),
    ("tcc", "bloom"),
    ("tcc", "random"),
    ("cc", "bloom"),
    ("cc", "random"),
]

DIFFICULTIES = ["easy", "medium", "hard"]
STRATEGIES = ["empirical", "prompting_empirical", "prompting_simple"]


def fixture_records() -> list[dict]:
    """Deterministic synthetic records covering all six method labels."""
    records = []
    counter = 0
    for workflow, curation in METHOD_CONFIGS:
        agentic = workflow in ("tcc", "cc")
        for difficulty in DIFFICULTIES:
            for strategy in STRATEGIES:
                counter += 1
                scores = {
                    metric: 1 + (counter + mi) % 5 for mi, metric in enumerate(METRICS)
                }
                scores["avg_score"] = sum(scores.values()) / 5
                rounds = 2 + counter % 4 if agentic else None
                n_agents = 2 + counter % 3 if workflow == "cc" else None
                records.append(
                    {
                        "run_id": f"fx{counter:04d}",
                        "status": "ok",
                        "kc_name": "fractions",
                        "difficulty": difficulty,
                        "repetition": 0,
                        "config": {
                            "workflow": workflow,
                            "rounds": rounds,
                            "n_agents": n_agents,
                            "agent_rounds": (
                                rounds * n_agents if n_agents is not None else None
                            ),
                            "strategy": strategy,
                            "curation": curation,
                        },
                        "scores": scores,
                    }
                )
    return records


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_method_label_mapping():
    assert method_label("baseline_zs", "none") == "Baseline_ZS"
    assert method_label("tcc", "bloom") == "TCC"
    assert method_label("tcc", "random") == "TCC_RC"
    assert method_label("cc", "random") == "CC_RC"


def test_method_table_six_rows(tmp_path):
    paths = report_tables(fixture_records(), tmp_path)["methods"]
    header, rows = read_csv(paths["csv"])
    assert header[0] == "method"
    assert len(rows) == 6
    assert [row[0] for row in rows] == [
        "Baseline_ZS",
        "Baseline_FS",
        "CC_RC",
        "TCC_RC",
        "CC",
        "TCC",
    ]
    text = paths["txt"].read_text()
    assert "Avg. Score" in text
    assert "*" in text  # best-per-column marking


def test_method_table_values_match_aggregate(tmp_path):
    records = fixture_records()
    paths = report_tables(records, tmp_path)["methods"]
    _, rows = read_csv(paths["csv"])
    enriched = [
        {**rec, "method": method_label(rec["config"]["workflow"], rec["config"]["curation"])}
        for rec in records
    ]
    expected = {row["method"]: row for row in aggregate(enriched, group_by=["method"])}
    for row in rows:
        method, *values = row
        for metric, value in zip(METRICS, values):
            assert float(value) == expected[method][metric]
        assert float(values[len(METRICS)]) == expected[method]["avg_score"]
        assert int(values[-1]) == expected[method]["n"]


def test_strategy_table_six_rows(tmp_path):
    paths = report_tables(fixture_records(), tmp_path)["strategies"]
    header, rows = read_csv(paths["csv"])
    assert header[:2] == ["method", "strategy"]
    assert len(rows) == 6
    assert {row[0] for row in rows} == {"CC", "TCC"}
    assert {row[1] for row in rows} == set(STRATEGIES)


def test_empty_records_emit_header_only_tables(tmp_path):
    paths = report_tables([], tmp_path)
    for table in paths.values():
        header, rows = read_csv(table["csv"])
        assert header
        assert rows == []


def test_plots_emit_figures_with_sidecars(tmp_path):
    outputs = report_plots(fixture_records(), tmp_path)
    assert len(outputs) == 5
    for paths in outputs.values():
        assert paths["svg"].exists()
        assert paths["svg"].stat().st_size > 0
        assert paths["csv"].exists()


def test_by_difficulty_sidecar_matches_aggregate(tmp_path):
    records = fixture_records()
    outputs = report_plots(records, tmp_path)
    _, rows = read_csv(outputs["by_difficulty"]["csv"])
    enriched = [
        {**rec, "method": method_label(rec["config"]["workflow"], rec["config"]["curation"])}
        for rec in records
    ]
    expected = {
        (row["difficulty"], row["method"]): row
        for row in aggregate(enriched, group_by=["difficulty", "method"])
    }
    assert len(rows) == len(expected) == 18
    for difficulty, method, avg_score, difficulty_matching, n in rows:
        row = expected[(difficulty, method)]
        assert float(avg_score) == row["avg_score"]
        assert float(difficulty_matching) == row["difficulty_matching"]
        assert int(n) == row["n"]


def test_rounds_sidecar_covers_rounds_present(tmp_path):
    records = fixture_records()
    outputs = report_plots(records, tmp_path)
    _, rows = read_csv(outputs["by_rounds"]["csv"])
    rounds_present = {
        rec["config"]["rounds"] for rec in records if rec["config"]["rounds"]
    }
    assert {int(row[1]) for row in rows} == rounds_present


def test_histogram_sidecar_conserves_counts(tmp_path):
    records = fixture_records()
    outputs = report_plots(records, tmp_path)
    _, rows = read_csv(outputs["histograms"]["csv"])
    assert len(rows) == 5 * len(METRICS)
    for metric in METRICS:
        total = sum(int(row[2]) for row in rows if row[0] == metric)
        assert total == len(records)


def test_plots_tolerate_missing_groups(tmp_path):
    # records without any collective-consensus runs still produce all figures
    records = [
        rec for rec in fixture_records() if rec["config"]["workflow"] != "cc"
    ]
    outputs = report_plots(records, tmp_path)
    assert outputs["by_agents"]["svg"].exists()
    _, rows = read_csv(outputs["by_agents"]["csv"])
    assert rows == []
