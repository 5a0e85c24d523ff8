"""Per-iteration metrics: CSV schema, writer/reader, invariant validator.

One row per training iteration.  Floats are written with repr (shortest
round-trip form), so identical runs produce byte-identical files and the
reader recovers exact values.  The validator re-checks the bookkeeping
invariants of a finished run from its artifacts alone; it is the thing to
run when a result looks too good.
"""

from __future__ import annotations

import csv
import json

import numpy as np

_FIXED_PREFIX = (
    "iteration",
    "loss_sup",
    "loss_unsup",
    "loss_contrast",
    "loss_total",
    "lambda_contrast",
    "tau",
)
_FIXED_SUFFIX = (
    "accepted",
    "anchors",
    "anchors_skipped",
    "mean_positive_size",
    "quantity",
    "quality",
    "quality_degenerate",
    "mask_ratio",
    "eval_accuracy",
)
INT_COLUMNS = {"iteration", "accepted", "anchors", "anchors_skipped", "quality_degenerate"}


def metric_columns(num_classes: int) -> list[str]:
    """Column order; per-class acceptance thresholds sit between the global
    threshold and the decision counters."""
    sigmas = [f"sigma_{c}" for c in range(num_classes)]
    return list(_FIXED_PREFIX) + sigmas + list(_FIXED_SUFFIX)


def _format_value(column: str, value) -> str:
    if value is None:
        return ""
    if column in INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    """Strict CSV writer: every append must cover exactly the schema."""

    def __init__(self, path, num_classes: int):
        self.columns = metric_columns(num_classes)
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._fh.write(",".join(self.columns) + "\n")

    def append(self, values: dict) -> None:
        extra = sorted(set(values) - set(self.columns))
        missing = sorted(set(self.columns) - set(values))
        if extra or missing:
            raise ValueError(f"metrics row mismatch: extra={extra} missing={missing}")
        self._fh.write(",".join(_format_value(c, values[c]) for c in self.columns) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV back into typed rows ('' -> None)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, text in raw.items():
                if text == "" or text is None:
                    row[key] = None
                elif key in INT_COLUMNS:
                    row[key] = int(text)
                else:
                    row[key] = float(text)
            rows.append(row)
    return rows


def validate_rows(rows: list[dict], unlabeled_batch: int, contrast_active: bool) -> list[str]:
    """Re-check the per-row bookkeeping of a finished run.

    * every unlabeled sample is accounted for exactly once:
      accepted + anchors + anchors_skipped == mu * B
    * the contrastive weight decays strictly after the first iteration
      (identically zero when the term is disabled)
    * mask_ratio is exactly 1 - quantity
    * iterations are contiguous
    """
    errors = []
    if not rows:
        return ["no metric rows"]
    start = rows[0]["iteration"]
    prev_lambda = None
    for pos, row in enumerate(rows):
        it = row["iteration"]
        if it != start + pos:
            errors.append(f"row {pos}: iteration {it}, expected {start + pos}")
        total = row["accepted"] + row["anchors"] + row["anchors_skipped"]
        if total != unlabeled_batch:
            errors.append(
                f"iteration {it}: accepted+anchors+skipped = {total}, expected {unlabeled_batch}"
            )
        lam = row["lambda_contrast"]
        if contrast_active:
            if prev_lambda is not None and it >= 1 and not lam < prev_lambda:
                errors.append(
                    f"iteration {it}: contrastive weight {lam!r} not strictly below {prev_lambda!r}"
                )
        elif lam != 0.0:
            errors.append(f"iteration {it}: contrastive weight {lam!r} with the term disabled")
        prev_lambda = lam
        if row["mask_ratio"] != 1.0 - row["quantity"]:
            errors.append(
                f"iteration {it}: mask_ratio {row['mask_ratio']!r} != 1 - quantity "
                f"{1.0 - row['quantity']!r}"
            )
    return errors


def validate_run_dir(run_dir) -> list[str]:
    """Validate a run directory (config.json + metrics.csv) after the fact."""
    from .config import load_config

    try:
        cfg = load_config(f"{run_dir}/config.json")
    except OSError as exc:
        return [f"cannot read config snapshot: {exc}"]
    try:
        rows = read_metrics(f"{run_dir}/metrics.csv")
    except OSError as exc:
        return [f"cannot read metrics: {exc}"]
    contrast_active = cfg.use_contrastive and cfg.weights.contrast_init > 0.0
    return validate_rows(rows, cfg.batch.labeled * cfg.batch.mu, contrast_active)


# -- small JSON / CSV artifacts ----------------------------------------------


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_confusion(path, confusion: np.ndarray) -> None:
    """True classes on rows, predicted on columns, plain integer CSV."""
    mat = np.asarray(confusion, dtype=np.int64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in mat:
            writer.writerow([int(v) for v in row])


def read_confusion(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return np.asarray([[int(v) for v in row] for row in csv.reader(fh)], dtype=np.int64)
