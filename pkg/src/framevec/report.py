"""Evaluation report rows and the plot-ready delta CSV.

A report is a TSV with one row per evaluated model.  Scores use a fixed
6-decimal rendering and missing baselines render as "NA", so identical
evaluations produce byte-identical files.
"""

from __future__ import annotations

REPORT_COLUMNS = (
    "model_id",
    "qvec",
    "overlap_n",
    "baseline_w2v",
    "baseline_3tensor",
    "delta_w2v_pct",
    "delta_3tensor_pct",
)

PLOT_COLUMNS = ("model", "ablation", "baseline", "delta_pct")

NA = "NA"


def relative_change(score: float, baseline: float) -> float:
    """Percent change of ``score`` against a strictly positive baseline."""
    if not baseline > 0:
        raise ValueError(f"baseline must be > 0, got {baseline!r}")
    return 100.0 * (score - baseline) / baseline


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_report_row(
    model_id: str,
    qvec: float,
    overlap_n: int,
    baseline_w2v: float | None = None,
    baseline_3tensor: float | None = None,
) -> str:
    """One report row; deltas are derived here so they can never disagree."""
    delta_w2v = None if baseline_w2v is None else relative_change(qvec, baseline_w2v)
    delta_3t = None if baseline_3tensor is None else relative_change(qvec, baseline_3tensor)
    fields = (
        model_id,
        _fmt(qvec),
        str(overlap_n),
        _fmt(baseline_w2v),
        _fmt(baseline_3tensor),
        _fmt(delta_w2v),
        _fmt(delta_3t),
    )
    return "\t".join(fields)


def report_header() -> str:
    return "\t".join(REPORT_COLUMNS)


def parse_report(text: str) -> list[dict[str, str]]:
    """Parse a report TSV into row dicts; validates the header."""
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != REPORT_COLUMNS:
        raise ValueError("not a report file: bad or missing header")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        fields = line.split("\t")
        if len(fields) != len(REPORT_COLUMNS):
            raise ValueError(f"report row {lineno} has {len(fields)} fields")
        rows.append(dict(zip(REPORT_COLUMNS, fields)))
    return rows


def format_plot_csv(rows: list[tuple[str, str, str, float]]) -> str:
    """CSV with one row per (model, baseline) delta, for plotting."""
    out = [",".join(PLOT_COLUMNS)]
    for model, ablation, baseline, delta in rows:
        out.append(f"{model},{ablation},{baseline},{delta:.6f}")
    return "\n".join(out) + "\n"
