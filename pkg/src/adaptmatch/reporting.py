"""Post-run reporting: trajectory exports and experiment tables.

Everything here is a pure function of finished run artifacts (metrics CSV,
summary JSON), so re-running a report on the same run directory yields
byte-identical output.
"""

from __future__ import annotations

import os

import numpy as np

from .metrics import read_metrics, read_summary

TRAJECTORY_COLUMNS = ("iteration", "tau", "sigma_mean", "mask_ratio")


def trajectory_rows(run_dir: str) -> list[dict]:
    """Threshold trajectory of a run: global threshold, mean per-class
    threshold, and mask ratio per iteration."""
    rows = read_metrics(os.path.join(run_dir, "metrics.csv"))
    sigma_cols = sorted(
        (c for c in rows[0] if c.startswith("sigma_")), key=lambda c: int(c.split("_")[1])
    ) if rows else []
    out = []
    for row in rows:
        out.append(
            {
                "iteration": row["iteration"],
                "tau": row["tau"],
                "sigma_mean": float(np.mean([row[c] for c in sigma_cols])),
                "mask_ratio": row["mask_ratio"],
            }
        )
    return out


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv_table(path, rows: list[dict], columns: tuple[str, ...]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(c)) for c in columns) + "\n")


def export_trajectory(run_dir: str, out_path: str) -> list[dict]:
    rows = trajectory_rows(run_dir)
    write_csv_table(out_path, rows, TRAJECTORY_COLUMNS)
    return rows


def format_table(rows: list[dict], columns: tuple[str, ...], floatfmt: str = "{:.2f}") -> str:
    """Fixed-width text table; floats rendered with floatfmt."""
    rendered = []
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c)
            if isinstance(v, float):
                cells.append(floatfmt.format(v))
            elif v is None:
                cells.append("")
            else:
                cells.append(str(v))
        rendered.append(cells)
    widths = [
        max(len(columns[i]), *(len(r[i]) for r in rendered)) if rendered else len(columns[i])
        for i in range(len(columns))
    ]
    lines = [
        "  ".join(columns[i].ljust(widths[i]) for i in range(len(columns))),
        "  ".join("-" * widths[i] for i in range(len(columns))),
    ]
    for cells in rendered:
        lines.append("  ".join(cells[i].ljust(widths[i]) for i in range(len(columns))))
    return "\n".join(lines)


ABLATION_COLUMNS = (
    "mode",
    "runs",
    "accuracy_pct",
    "accuracy_min_pct",
    "accuracy_max_pct",
    "quantity_pct",
    "quality_pct",
)

_MODE_ORDER = ("fixed", "uscl", "satpl", "full")


def ablation_table(summaries: list[dict]) -> list[dict]:
    """Aggregate per-mode means over seeds from run summaries.

    Rows follow the fixed mode order (threshold-only / contrast-only /
    both), skipping modes with no runs.  Needs at least two distinct modes
    (a one-mode table is not an ablation) and complete summaries.
    """
    modes_present = {s.get("mode") for s in summaries}
    if len(modes_present) < 2:
        raise ValueError(f"ablation table needs >= 2 distinct modes, got {sorted(map(str, modes_present))}")
    required = ("final_accuracy", "mean_quantity_last_tenth", "mean_quality_last_tenth")
    for s in summaries:
        missing = [k for k in required if s.get(k) is None]
        if missing:
            raise ValueError(f"run summary (mode={s.get('mode')!r}) lacks metrics: {missing}")
    rows = []
    for mode in _MODE_ORDER:
        picked = [s for s in summaries if s["mode"] == mode]
        if not picked:
            continue
        acc = np.asarray([s["final_accuracy"] for s in picked], dtype=np.float64)
        qty = np.asarray([s["mean_quantity_last_tenth"] for s in picked], dtype=np.float64)
        qlt = np.asarray([s["mean_quality_last_tenth"] for s in picked], dtype=np.float64)
        rows.append(
            {
                "mode": mode,
                "runs": len(picked),
                "accuracy_pct": float(acc.mean() * 100.0),
                "accuracy_min_pct": float(acc.min() * 100.0),
                "accuracy_max_pct": float(acc.max() * 100.0),
                "quantity_pct": float(qty.mean() * 100.0),
                "quality_pct": float(qlt.mean() * 100.0),
            }
        )
    return rows


def collect_summaries(run_dirs: list[str]) -> list[dict]:
    return [read_summary(os.path.join(d, "summary.json")) for d in run_dirs]
