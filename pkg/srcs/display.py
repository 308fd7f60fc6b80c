"""
Display module for SAMO.

Terminal output: progress spinners, the corpus summary table, one line per
training epoch, metrics and ablation tables, and error messages.
"""

import math
import sys
import threading
import time

from colors import RESET, GREEN, DARK_GREEN, LIGHT_YELLOW, DARK_YELLOW, LIGHT_PINK, GRAY, RED
from type_defs import AblationRow, EpochRecord, MetricsRow, PartitionSummary, SeedsSummary

# Global flag for spinner control
_spinner_active = False


def print_error(message: str) -> None:
    """
    Display a formatted error message.

    Args:
        message: Error message to display.
    """

    print(f"\n{RED}Error : {message}{RESET}\n", file=sys.stderr)


# =============================================================================
# SPINNER
# =============================================================================


def _spinner_animation(message: str) -> None:
    """Thread function that displays the animated spinner."""

    spinner = ["◐", "◓", "◑", "◒"]
    colors = [LIGHT_PINK, DARK_GREEN]
    i = 0
    while _spinner_active:
        color = colors[i % len(colors)]
        symbol = spinner[i % len(spinner)]
        sys.stdout.write(f"\r{color}{symbol}{RESET} {message}")
        sys.stdout.flush()
        time.sleep(0.1)
        i += 1


def start_spinner(message: str) -> threading.Thread:
    """
    Start an animated spinner with a message.

    The animation only runs when stdout is a terminal.

    Args:
        message: The message to display next to the spinner.

    Returns:
        The spinner thread (not started when stdout is redirected).
    """

    global _spinner_active
    thread = threading.Thread(target=_spinner_animation, args=(message,))
    thread.daemon = True

    if sys.stdout.isatty():
        _spinner_active = True
        thread.start()
    return thread


def stop_spinner(thread: threading.Thread, message: str) -> None:
    """
    Stop the spinner and display a success checkmark.

    Args:
        thread: The spinner thread to stop.
        message: The success message to display.
    """

    global _spinner_active
    _spinner_active = False
    if thread.is_alive():
        thread.join()
    sys.stdout.write(f"\r{GREEN}✓{RESET} {message}\n")
    sys.stdout.flush()


# =============================================================================
# TABLES
# =============================================================================


def _fmt_rate(value: float) -> str:
    """Percent with two decimals, '-' when unavailable."""

    if value is None or math.isnan(value):
        return "-"
    return f"{100.0 * value:.2f}%"


def _fmt_cost(value: float) -> str:
    if value is None or math.isnan(value):
        return "-"
    return f"{value:.4f}"


def _print_table(title: str, header: list[str], rows: list[list[str]]) -> None:
    """Right-aligned columns framed by dashed separators."""

    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]

    def _line(cells: list[str]) -> str:
        return "  ".join(cell.rjust(width) for cell, width in zip(cells, widths))

    separator = "-" * len(_line(header))

    print()
    print(GREEN + f"• {title} :" + RESET)
    print()
    print(LIGHT_YELLOW + separator + RESET)
    print(DARK_YELLOW + _line(header) + RESET)
    print(LIGHT_YELLOW + separator + RESET)
    for row in rows:
        print(_line(row))
    print(LIGHT_YELLOW + separator + RESET)
    print()


def display_corpus_summary(summary: list[PartitionSummary]) -> None:
    """
    Display per-partition counts.

    Args:
        summary: Output of dataset.corpus_summary.
    """

    header = ["Partition", "#Speakers", "#Enrollment", "#Bona fide", "#Spoof", "Attacks"]
    rows = [
        [
            row["partition"],
            str(row["speakers"]),
            str(row["enrollment"]),
            str(row["bona_fide"]),
            str(row["spoof"]),
            row["attacks"],
        ]
        for row in summary
    ]
    _print_table("Corpus Summary", header, rows)


def display_epoch(record: EpochRecord) -> None:
    """One line per finished epoch."""

    marker = f"{LIGHT_PINK}⟳{RESET}" if record["attractor_updated"] else " "
    print(
        f"{DARK_GREEN}epoch {record['epoch']:>3}{RESET} {marker} "
        f"loss {record['train_loss']:.5f}  "
        f"{GRAY}lr {record['lr']:.2e}{RESET}  "
        f"dev EER {_fmt_rate(record['dev_eer_enroll'])} / "
        f"{_fmt_rate(record['dev_eer_noenroll'])}  "
        f"min t-DCF {_fmt_cost(record['dev_min_tdcf_enroll'])} / "
        f"{_fmt_cost(record['dev_min_tdcf_noenroll'])}"
    )


def display_metrics(rows: list[MetricsRow]) -> None:
    """EER and min t-DCF per scoring mode."""

    header = ["Mode", "EER", "Threshold", "min t-DCF"]
    body = [
        [row["mode"], _fmt_rate(row["eer"]), f"{row['eer_threshold']:.4f}", _fmt_cost(row["min_tdcf"])]
        for row in rows
    ]
    _print_table("Metrics", header, body)


def display_ablation(rows: list[AblationRow]) -> None:
    """Ablation rows with both scoring modes."""

    header = ["Setup", "Configuration", "Best epoch", "EER w/o", "t-DCF w/o", "EER w/", "t-DCF w/"]
    body = [
        [
            str(row["setup"]),
            row["configuration"],
            str(row["best_epoch"]),
            _fmt_rate(row["eer_noenroll"]),
            _fmt_cost(row["min_tdcf_noenroll"]),
            _fmt_rate(row["eer_enroll"]),
            _fmt_cost(row["min_tdcf_enroll"]),
        ]
        for row in rows
    ]
    _print_table("Ablation", header, body)


def display_seeds(summary: SeedsSummary) -> None:
    """Per-seed results followed by mean and best."""

    header = ["Seed", "EER w/o", "t-DCF w/o", "EER w/", "t-DCF w/"]

    def _cells(label: str, values: dict) -> list[str]:
        return [
            label,
            _fmt_rate(values["eer_noenroll"]),
            _fmt_cost(values["min_tdcf_noenroll"]),
            _fmt_rate(values["eer_enroll"]),
            _fmt_cost(values["min_tdcf_enroll"]),
        ]

    body = [_cells(str(row["seed"]), row) for row in summary["per_seed"]]
    body.append(_cells("mean", summary["mean"]))
    body.append(_cells("best", summary["best"]))
    _print_table("Seeds", header, body)
