"""Human-facing views of run results: aligned text, CSV, and chart figures.

Everything in here is a pure rendering of artifacts the pipeline already
persisted; nothing writes back into a run directory.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import (
    CATEGORY_ORDER,
    Category,
    CategoryStats,
    ComparisonRow,
    ComparisonTable,
)
from .pipeline import load_categories, run_dir

#: Fill colors for the four category bars, in CATEGORY_ORDER.
_BAR_COLORS = ("#d9822b", "#c23b3b", "#3b8c4f", "#7a5fb5")


def count_vacuous_correct(categories: dict) -> int:
    """Images marked CorrectLocalization with no boxes on either side.

    These are vacuously correct — the model found nothing and there was
    nothing to find — and are surfaced separately so a reviewer does not
    mistake them for genuine localization wins.
    """
    n = 0
    for entry in categories["images"]:
        if entry["category"] != Category.CORRECT_LOCALIZATION.value:
            continue
        matching = entry["matching"]
        if not matching["pairs"] and not matching["unmatched_gts"]:
            n += 1
    return n


def format_stats_text(stats: CategoryStats, vacuous_correct: int | None = None) -> str:
    """Aligned category/count/percentage table."""
    name_width = max(len(c.display_name) for c in CATEGORY_ORDER)
    lines = [f"{'Category':<{name_width}}  {'Count':>7}  {'Share':>7}"]
    for category in CATEGORY_ORDER:
        lines.append(
            f"{category.display_name:<{name_width}}"
            f"  {stats.counts[category]:>7d}"
            f"  {stats.percentages[category]:>6.1f}%"
        )
    lines.append(f"{'Total':<{name_width}}  {stats.total:>7d}  {100.0:>6.1f}%")
    if vacuous_correct:
        lines.append(
            f"Note: {vacuous_correct} of the correct images carried no boxes at all"
            " (vacuously correct)."
        )
    return "\n".join(lines)


def format_comparison_text(table: ComparisonTable) -> str:
    """Aligned base-vs-target table.

    Each row carries the improvement direction for that category (↓ for the
    failure modes, ↑ for correct localization) and names the side that wins.
    """
    name_width = max(len(c.display_name) for c in CATEGORY_ORDER)
    header = (
        f"{'Category':<{name_width}}   "
        f"{'Base':>7}  {'Target':>7}  {'Delta':>7}  Better"
    )
    lines = [header, "-" * len(header)]
    for row in table.rows:
        arrow = "↑" if row.higher_is_better else "↓"
        delta = f"{row.delta:+d}" if row.delta else "0"
        lines.append(
            f"{row.category.display_name:<{name_width}} {arrow} "
            f"{row.base:>7d}  {row.target:>7d}  {delta:>7}  {row.better}"
        )
    lines.append(f"{'Total images':<{name_width}}   {table.total:>7d}  {table.total:>7d}")
    return "\n".join(lines)


def write_stats_csv(stats: CategoryStats, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "count", "percentage"])
        for category in CATEGORY_ORDER:
            writer.writerow(
                [
                    category.value,
                    stats.counts[category],
                    f"{stats.percentages[category]:.4f}",
                ]
            )


def write_comparison_csv(table: ComparisonTable, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "base", "target", "delta", "direction", "better"])
        for row in table.rows:
            writer.writerow(
                [
                    row.category.value,
                    row.base,
                    row.target,
                    row.delta,
                    "higher_is_better" if row.higher_is_better else "lower_is_better",
                    row.better,
                ]
            )


def render_category_chart(stats: CategoryStats, path: str | Path, title: str = "") -> None:
    """Bar chart of the four-category breakdown, written as a PNG."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    try:
        labels = [c.display_name for c in CATEGORY_ORDER]
        counts = [stats.counts[c] for c in CATEGORY_ORDER]
        bars = ax.bar(labels, counts, color=_BAR_COLORS)
        for bar, category in zip(bars, CATEGORY_ORDER):
            ax.annotate(
                f"{stats.percentages[category]:.1f}%",
                xy=(bar.get_x() + bar.get_width() / 2, bar.get_height()),
                xytext=(0, 3),
                textcoords="offset points",
                ha="center",
                fontsize=9,
            )
        ax.set_ylabel("Images")
        ax.set_title(title or f"Category breakdown ({stats.total} images)")
        ax.tick_params(axis="x", labelrotation=12)
        fig.tight_layout()
        fig.savefig(path, dpi=110)
    finally:
        plt.close(fig)


def render_comparison_chart(table: ComparisonTable, path: str | Path, title: str = "") -> None:
    """Grouped base/target bars per category, written as a PNG."""
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    try:
        positions = range(len(table.rows))
        width = 0.38
        ax.bar(
            [p - width / 2 for p in positions],
            [r.base for r in table.rows],
            width,
            label="base",
            color="#8d99ae",
        )
        ax.bar(
            [p + width / 2 for p in positions],
            [r.target for r in table.rows],
            width,
            label="target",
            color="#2b6cb0",
        )
        ax.set_xticks(list(positions))
        ax.set_xticklabels(
            [
                f"{r.category.display_name} {'↑' if r.higher_is_better else '↓'}"
                for r in table.rows
            ],
            rotation=12,
        )
        ax.set_ylabel("Images")
        ax.set_title(title or f"Run comparison ({table.total} images)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=110)
    finally:
        plt.close(fig)


def report_run(runs_root: str | Path, run_id: str, out_dir: str | Path) -> list[Path]:
    """Render a completed run's statistics into ``out_dir``.

    Writes stats.csv, stats.txt, and categories.png, and returns the paths
    in that order.
    """
    categories = load_categories(run_dir(runs_root, run_id) / "categories.json")
    stats = CategoryStats.from_json_dict(categories["stats"])
    vacuous = count_vacuous_correct(categories)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "stats.csv"
    text_path = out_dir / "stats.txt"
    chart_path = out_dir / "categories.png"

    write_stats_csv(stats, csv_path)
    text_path.write_text(format_stats_text(stats, vacuous) + "\n")
    render_category_chart(stats, chart_path, title=f"Run {run_id}")
    return [csv_path, text_path, chart_path]


def report_comparison(
    comparison_json: dict, out_dir: str | Path, label: str = ""
) -> list[Path]:
    """Render a run comparison (as produced by compare_runs) into ``out_dir``."""
    table = _table_from_json(comparison_json["table"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "comparison.csv"
    text_path = out_dir / "comparison.txt"
    chart_path = out_dir / "comparison.png"

    write_comparison_csv(table, csv_path)
    body = format_comparison_text(table)
    transitions = comparison_json.get("transitions", [])
    if transitions:
        moved = ", ".join(
            f"{t['id']} ({t['base_category']} -> {t['target_category']})"
            for t in transitions
        )
        body += f"\n\n{len(transitions)} image(s) changed category: {moved}"
    else:
        body += "\n\nNo image changed category."
    text_path.write_text(body + "\n")
    render_comparison_chart(table, chart_path, title=label or "Run comparison")
    return [csv_path, text_path, chart_path]


def _table_from_json(payload: dict) -> ComparisonTable:
    rows = tuple(
        ComparisonRow(
            category=Category(r["category"]),
            base=r["base"],
            target=r["target"],
            higher_is_better=r["higher_is_better"],
        )
        for r in payload["rows"]
    )
    return ComparisonTable(rows=rows, total=payload["total"])
