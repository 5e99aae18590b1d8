"""Report emission: score tables and figures with exact-value data sidecars.

Every figure is written as an SVG plus a CSV carrying the exact numbers
that were plotted, so reported values are auditable without re-running.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import METRICS, aggregate, render_score, score_histogram

# Row order mirrors the shape of the headline results table; unknown labels
# sort after these, alphabetically.
METHOD_ORDER = ["Baseline_ZS", "Baseline_FS", "CC_RC", "TCC_RC", "CC", "TCC"]

DIFFICULTY_ORDER = ["easy", "medium", "hard"]


def method_label(workflow: str, curation: str) -> str:
    base = {
        "baseline_zs": "Baseline_ZS",
        "baseline_fs": "Baseline_FS",
        "tcc": "TCC",
        "cc": "CC",
    }[workflow]
    if curation == "random":
        return f"{base}_RC"
    return base


def _with_labels(records: Iterable[Mapping]) -> list[dict]:
    enriched = []
    for record in records:
        copy = dict(record)
        copy["method"] = method_label(
            record["config"]["workflow"], record["config"]["curation"]
        )
        enriched.append(copy)
    return enriched


def _method_sort_key(label: str) -> tuple:
    if label in METHOD_ORDER:
        return (0, METHOD_ORDER.index(label))
    return (1, label)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _render_text_table(
    header: Sequence[str], rows: list[list[str]], best_marks: set[tuple[int, int]]
) -> str:
    """Fixed-width table; the best value per numeric column is starred."""
    marked = [
        [
            f"*{cell}*" if (i, j) in best_marks else cell
            for j, cell in enumerate(row)
        ]
        for i, row in enumerate(rows)
    ]
    widths = [
        max(len(header[j]), *(len(row[j]) for row in marked)) if marked else len(header[j])
        for j in range(len(header))
    ]
    lines = [
        "  ".join(header[j].ljust(widths[j]) for j in range(len(header))),
        "  ".join("-" * widths[j] for j in range(len(header))),
    ]
    for row in marked:
        lines.append("  ".join(row[j].ljust(widths[j]) for j in range(len(header))))
    return "\n".join(lines) + "\n"


def _best_marks(
    numeric_rows: list[list[float]], first_numeric_col: int
) -> set[tuple[int, int]]:
    marks: set[tuple[int, int]] = set()
    if not numeric_rows:
        return marks
    n_cols = len(numeric_rows[0])
    for j in range(n_cols):
        best = max(row[j] for row in numeric_rows)
        for i, row in enumerate(numeric_rows):
            if row[j] == best:
                marks.add((i, j + first_numeric_col))
    return marks


def write_method_table(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Per-method table: the five metric means plus the average score."""
    enriched = _with_labels(records)
    rows = aggregate(enriched, group_by=["method"])
    rows.sort(key=lambda row: _method_sort_key(row["method"]))

    header = ["Method", *[m.replace("_", " ").title() for m in METRICS], "Avg. Score"]
    csv_path = out_dir / "table_methods.csv"
    _write_csv(
        csv_path,
        ["method", *METRICS, "avg_score", "n"],
        [
            [row["method"], *[repr(row[m]) for m in METRICS], repr(row["avg_score"]), row["n"]]
            for row in rows
        ],
    )

    display = [
        [row["method"], *[render_score(row[m]) for m in METRICS], render_score(row["avg_score"])]
        for row in rows
    ]
    numeric = [[row[m] for m in METRICS] + [row["avg_score"]] for row in rows]
    txt_path = out_dir / "table_methods.txt"
    txt_path.write_text(
        _render_text_table(header, display, _best_marks(numeric, 1)), encoding="utf-8"
    )
    return {"csv": csv_path, "txt": txt_path}


def write_strategy_table(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Per-(method, strategy) table over the curated agentic workflows:
    difficulty matching and average score."""
    enriched = [
        rec
        for rec in _with_labels(records)
        if rec["config"]["workflow"] in ("tcc", "cc")
        and rec["config"]["curation"] == "bloom"
    ]
    for rec in enriched:
        rec["strategy"] = rec["config"]["strategy"]
    rows = aggregate(enriched, group_by=["method", "strategy"])
    rows.sort(key=lambda row: (_method_sort_key(row["method"]), row["strategy"]))

    header = ["Method", "Strategy", "Difficulty Matching", "Avg. Score"]
    csv_path = out_dir / "table_strategies.csv"
    _write_csv(
        csv_path,
        ["method", "strategy", "difficulty_matching", "avg_score", "n"],
        [
            [
                row["method"],
                row["strategy"],
                repr(row["difficulty_matching"]),
                repr(row["avg_score"]),
                row["n"],
            ]
            for row in rows
        ],
    )
    display = [
        [
            row["method"],
            row["strategy"],
            render_score(row["difficulty_matching"]),
            render_score(row["avg_score"]),
        ]
        for row in rows
    ]
    numeric = [[row["difficulty_matching"], row["avg_score"]] for row in rows]
    txt_path = out_dir / "table_strategies.txt"
    txt_path.write_text(
        _render_text_table(header, display, _best_marks(numeric, 2)), encoding="utf-8"
    )
    return {"csv": csv_path, "txt": txt_path}


def _difficulty_sort_key(value: str) -> tuple:
    if value in DIFFICULTY_ORDER:
        return (0, DIFFICULTY_ORDER.index(value))
    return (1, value)


def plot_by_difficulty(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Grouped bars of average score and difficulty matching by
    difficulty x method."""
    rows = aggregate(_with_labels(records), group_by=["difficulty", "method"])
    rows.sort(
        key=lambda r: (_difficulty_sort_key(r["difficulty"]), _method_sort_key(r["method"]))
    )
    csv_path = out_dir / "fig_by_difficulty.csv"
    _write_csv(
        csv_path,
        ["difficulty", "method", "avg_score", "difficulty_matching", "n"],
        [
            [r["difficulty"], r["method"], repr(r["avg_score"]), repr(r["difficulty_matching"]), r["n"]]
            for r in rows
        ],
    )

    difficulties = sorted({r["difficulty"] for r in rows}, key=_difficulty_sort_key)
    methods = sorted({r["method"] for r in rows}, key=_method_sort_key)
    lookup = {(r["difficulty"], r["method"]): r for r in rows}

    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, measure, title in (
        (axes[0], "avg_score", "Average score"),
        (axes[1], "difficulty_matching", "Difficulty matching"),
    ):
        width = 0.8 / max(1, len(methods))
        for mi, method in enumerate(methods):
            xs = [
                di + mi * width
                for di, d in enumerate(difficulties)
                if (d, method) in lookup
            ]
            ys = [
                lookup[(d, method)][measure]
                for d in difficulties
                if (d, method) in lookup
            ]
            ax.bar(xs, ys, width=width, label=method)
        ax.set_xticks(
            [di + 0.4 - width / 2 for di in range(len(difficulties))], difficulties
        )
        ax.set_title(title)
        ax.set_ylim(0, 5.2)
    if methods:
        axes[0].legend(fontsize=8)
    fig.tight_layout()
    svg_path = out_dir / "fig_by_difficulty.svg"
    fig.savefig(svg_path)
    plt.close(fig)
    return {"svg": svg_path, "csv": csv_path}


def _line_plot(
    rows: list[dict],
    x_field: str,
    series_field: str | None,
    out_dir: Path,
    stem: str,
    title: str,
) -> dict[str, Path]:
    csv_path = out_dir / f"{stem}.csv"
    header = ([series_field] if series_field else []) + [x_field, "avg_score", "n"]
    _write_csv(
        csv_path,
        header,
        [
            ([r[series_field]] if series_field else [])
            + [r[x_field], repr(r["avg_score"]), r["n"]]
            for r in rows
        ],
    )
    fig, ax = plt.subplots(figsize=(5, 4))
    if series_field:
        series_values = sorted({r[series_field] for r in rows}, key=_method_sort_key)
        for series in series_values:
            pts = [r for r in rows if r[series_field] == series]
            pts.sort(key=lambda r: r[x_field])
            ax.plot([r[x_field] for r in pts], [r["avg_score"] for r in pts], marker="o", label=series)
        if series_values:
            ax.legend(fontsize=8)
    else:
        pts = sorted(rows, key=lambda r: r[x_field])
        ax.plot([r[x_field] for r in pts], [r["avg_score"] for r in pts], marker="o")
    ax.set_xlabel(x_field.replace("_", " "))
    ax.set_ylabel("avg score")
    ax.set_title(title)
    fig.tight_layout()
    svg_path = out_dir / f"{stem}.svg"
    fig.savefig(svg_path)
    plt.close(fig)
    return {"svg": svg_path, "csv": csv_path}


def plot_by_rounds(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Average score against discussion rounds for the agentic methods."""
    enriched = [
        rec for rec in _with_labels(records) if rec["config"]["rounds"] is not None
    ]
    for rec in enriched:
        rec["rounds"] = rec["config"]["rounds"]
    rows = aggregate(enriched, group_by=["method", "rounds"])
    return _line_plot(rows, "rounds", "method", out_dir, "fig_by_rounds", "Score by rounds")


def plot_by_agents(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Average score against the number of collaborating agents."""
    enriched = [
        rec for rec in _with_labels(records) if rec["config"]["n_agents"] is not None
    ]
    for rec in enriched:
        rec["n_agents"] = rec["config"]["n_agents"]
    rows = aggregate(enriched, group_by=["n_agents"])
    return _line_plot(rows, "n_agents", None, out_dir, "fig_by_agents", "Score by agents")


def plot_by_agent_rounds(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Average score against agents x rounds (total agentic turns)."""
    enriched = [
        rec
        for rec in _with_labels(records)
        if rec["config"]["agent_rounds"] is not None
    ]
    for rec in enriched:
        rec["agent_rounds"] = rec["config"]["agent_rounds"]
    rows = aggregate(enriched, group_by=["agent_rounds"])
    return _line_plot(
        rows, "agent_rounds", None, out_dir, "fig_by_agent_rounds", "Score by agent rounds"
    )


def plot_histograms(records: Iterable[Mapping], out_dir: Path) -> dict[str, Path]:
    """Per-metric histograms of the 1-5 scores (ceiling-effect check)."""
    records = list(records)
    csv_rows = []
    histograms = {}
    for metric in METRICS:
        bins = score_histogram(records, metric)
        histograms[metric] = bins
        for score in range(1, 6):
            csv_rows.append([metric, score, bins[score]])
    csv_path = out_dir / "fig_histograms.csv"
    _write_csv(csv_path, ["metric", "score", "count"], csv_rows)

    fig, axes = plt.subplots(1, len(METRICS), figsize=(3 * len(METRICS), 3), sharey=True)
    for ax, metric in zip(axes, METRICS):
        bins = histograms[metric]
        ax.bar(list(bins.keys()), list(bins.values()))
        ax.set_title(metric.replace("_", " "), fontsize=9)
        ax.set_xticks(range(1, 6))
    fig.tight_layout()
    svg_path = out_dir / "fig_histograms.svg"
    fig.savefig(svg_path)
    plt.close(fig)
    return {"svg": svg_path, "csv": csv_path}


def report_tables(records: Iterable[Mapping], out_dir: Path | str) -> dict[str, dict[str, Path]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(records)
    return {
        "methods": write_method_table(records, out_dir),
        "strategies": write_strategy_table(records, out_dir),
    }


def report_plots(records: Iterable[Mapping], out_dir: Path | str) -> dict[str, dict[str, Path]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(records)
    return {
        "by_difficulty": plot_by_difficulty(records, out_dir),
        "by_rounds": plot_by_rounds(records, out_dir),
        "by_agents": plot_by_agents(records, out_dir),
        "by_agent_rounds": plot_by_agent_rounds(records, out_dir),
        "histograms": plot_histograms(records, out_dir),
    }
