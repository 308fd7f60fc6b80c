"""
Report files for SAMO.

Writers (and the score-file reader) for every CSV the tool emits:
score files, training history, metrics, ablation rows, seed summaries and
2-D embedding projections. Floats use 17 significant digits so reruns are
byte-identical and values survive a read back.
"""

import csv

from dataset import ParseError
from type_defs import AblationRow, EpochRecord, MetricsRow, ScoreRow, SeedsSummary

SCORE_COLUMNS = ["utt_id", "speaker", "label", "attack_tag", "mode", "score"]
HISTORY_COLUMNS = [
    "epoch",
    "train_loss",
    "lr",
    "attractor_updated",
    "dev_eer_enroll",
    "dev_eer_noenroll",
    "dev_min_tdcf_enroll",
    "dev_min_tdcf_noenroll",
]
METRICS_COLUMNS = ["mode", "eer", "eer_threshold", "min_tdcf"]
ABLATION_COLUMNS = [
    "setup",
    "configuration",
    "best_epoch",
    "eer_noenroll",
    "min_tdcf_noenroll",
    "eer_enroll",
    "min_tdcf_enroll",
]
PROJECTION_COLUMNS = ["utt_id", "speaker", "label", "px", "py"]


def _cell(value) -> str:
    """Render a value for CSV output."""

    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_rows(path: str, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in columns])


def write_score_file(path: str, rows: list[ScoreRow]) -> None:
    """Write `utt_id,speaker,label,attack_tag,mode,score`."""

    _write_rows(path, SCORE_COLUMNS, rows)


def read_score_file(path: str) -> list[ScoreRow]:
    """
    Read a score file written by write_score_file.

    Args:
        path: Score file.

    Returns:
        Rows in file order.

    Raises:
        ParseError: On a wrong header or malformed row.
    """

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SCORE_COLUMNS:
            raise ParseError("score file header must be " + ",".join(SCORE_COLUMNS), 1)

        for line_number, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(SCORE_COLUMNS):
                raise ParseError(f"expected {len(SCORE_COLUMNS)} fields", line_number)
            try:
                rows.append(
                    {
                        "utt_id": fields[0],
                        "speaker": fields[1],
                        "label": int(fields[2]),
                        "attack_tag": fields[3],
                        "mode": fields[4],
                        "score": float(fields[5]),
                    }
                )
            except ValueError as e:
                raise ParseError(str(e), line_number)

    return rows


def write_history(path: str, history: list[EpochRecord]) -> None:
    """One row per epoch."""

    _write_rows(path, HISTORY_COLUMNS, history)


def write_metrics(path: str, rows: list[MetricsRow]) -> None:
    """Write `mode,eer,eer_threshold,min_tdcf`."""

    _write_rows(path, METRICS_COLUMNS, rows)


def write_ablation_report(path: str, rows: list[AblationRow]) -> None:
    """One row per ablation setup."""

    _write_rows(path, ABLATION_COLUMNS, rows)


def write_projection(path: str, rows: list[dict]) -> None:
    """Write `utt_id,speaker,label,px,py`."""

    _write_rows(path, PROJECTION_COLUMNS, rows)


def write_seeds_summary(path: str, summary: SeedsSummary) -> None:
    """
    Per-seed rows followed by the mean and best rows.

    Args:
        path: Destination file.
        summary: Output of trainer.run_seeds.
    """

    metric_keys = ["eer_noenroll", "min_tdcf_noenroll", "eer_enroll", "min_tdcf_enroll"]
    columns = ["seed"] + metric_keys
    rows = [dict(row) for row in summary["per_seed"]]
    rows.append({"seed": "mean", **summary["mean"]})
    rows.append({"seed": "best", **summary["best"]})
    _write_rows(path, columns, rows)
