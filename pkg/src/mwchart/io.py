"""Data ingestion, chart evaluation and rendering.

Input files are CSV with the header ``role,sample_id,value``.  Reference rows
(role ``ref``) are pooled into one reference sample whatever their sample
id; test rows (role ``test``) are grouped by sample id in order of
appearance.  Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .chart_design import ChartLimits  # noqa: E402
from .errors import InvalidInputError  # noqa: E402
from .mw_stat import ReferenceSample, TestSample, TiePolicy, mann_whitney  # noqa: E402

HEADER = ("role", "sample_id", "value")
SVG_SALT = "mwchart"


@dataclass(frozen=True)
class ChartRecord:
    sample_index: int
    statistic: float
    signal: bool
    limits: ChartLimits
    label: str = ""


def _data_lines(handle):
    for lineno, line in enumerate(handle, 1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield lineno, line


def ingest_csv(path) -> tuple[ReferenceSample, list[TestSample]]:
    """Load a reference sample and the test samples from ``path``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = list(_data_lines(fh))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise InvalidInputError(f"{path}: no header row")
    lineno, head = lines[0]
    cols = tuple(c.strip().lower() for c in next(csv.reader([head])))
    if cols != HEADER:
        raise InvalidInputError(f"{path}, line {lineno}: expected header {','.join(HEADER)}, got {head.strip()!r}")

    ref: list[float] = []
    groups: list[tuple[str, list[float]]] = []
    closed: set[str] = set()
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != 3:
            raise InvalidInputError(f"{path}, line {lineno}: expected 3 fields, got {len(row)}")
        role, sid, raw = (c.strip() for c in row)
        try:
            value = float(raw)
        except ValueError:
            raise InvalidInputError(f"{path}, line {lineno}: value {raw!r} is not a number") from None
        if not math.isfinite(value):
            raise InvalidInputError(f"{path}, line {lineno}: value must be finite")
        role = role.lower()
        if role == "ref":
            ref.append(value)
        elif role == "test":
            if not sid:
                raise InvalidInputError(f"{path}, line {lineno}: test rows need a sample_id")
            if groups and groups[-1][0] == sid:
                groups[-1][1].append(value)
            elif sid in closed:
                raise InvalidInputError(f"{path}, line {lineno}: rows of test sample {sid!r} are not contiguous")
            else:
                if groups:
                    closed.add(groups[-1][0])
                groups.append((sid, [value]))
        else:
            raise InvalidInputError(f"{path}, line {lineno}: role must be 'ref' or 'test', got {role!r}")
    if not ref:
        raise InvalidInputError(f"{path}: no reference rows")
    sizes = {len(v) for _, v in groups}
    if len(sizes) > 1:
        raise InvalidInputError(f"{path}: test samples have different sizes {sorted(sizes)}")
    tests = [TestSample(v, index=i) for i, (_, v) in enumerate(groups, 1)]
    return ReferenceSample(ref), tests


def run_chart(ref: ReferenceSample, tests: Sequence[TestSample], limits: ChartLimits,
              tie=TiePolicy.MIDRANK) -> list[ChartRecord]:
    if ref.m != limits.m:
        raise InvalidInputError(f"limits are for m={limits.m}, reference sample has m={ref.m}")
    out = []
    for t in tests:
        if t.n != limits.n:
            raise InvalidInputError(f"limits are for n={limits.n}, test sample {t.index} has n={t.n}")
        stat = mann_whitney(ref, t, tie)
        out.append(ChartRecord(t.index, stat, limits.signals(stat), limits))
    return out


def _fmt(x):
    return f"{x:g}" if x is not None else "-"


def format_table(records: Sequence[ChartRecord]) -> str:
    """Aligned plain-text table of the chart."""
    head = ("sample", "statistic", "lcl", "ucl", "signal")
    rows = [(str(r.sample_index), f"{r.statistic:.1f}", _fmt(r.limits.lcl), str(r.limits.ucl),
             "*" if r.signal else "") for r in records]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def write_delimited(rows: Iterable[dict], out, delimiter: str = ",") -> None:
    """Write dict rows as delimited text to a path or text stream."""
    rows = list(rows)
    if not rows:
        return
    fields = list(rows[0])

    def emit(fh):
        w = csv.DictWriter(fh, fieldnames=fields, delimiter=delimiter, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    if isinstance(out, (str, Path)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(out)


def records_as_rows(records: Sequence[ChartRecord]) -> list[dict]:
    return [{"sample": r.sample_index, "statistic": r.statistic, "lcl": r.limits.lcl,
             "ucl": r.limits.ucl, "signal": int(r.signal)} for r in records]


def render_chart(records: Sequence[ChartRecord], limits: ChartLimits, path, title: Optional[str] = None) -> Path:
    """Write the chart as an SVG file; identical input gives identical bytes."""
    if not records:
        raise InvalidInputError("nothing to plot")
    path = Path(path)
    idx = [r.sample_index for r in records]
    stat = [r.statistic for r in records]
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none", "path.simplify": False}):
        fig = Figure(figsize=(7.0, 4.0))
        ax = fig.add_subplot()
        ax.plot(idx, stat, color="0.2", marker="o", markersize=4, linewidth=1, label="MW statistic")
        sig = [(i, s) for i, s, r in zip(idx, stat, records) if r.signal]
        if sig:
            ax.plot(*zip(*sig), linestyle="none", marker="D", markersize=8, markerfacecolor="none",
                    markeredgecolor="tab:red", markeredgewidth=1.5, label="signal")
        ax.axhline(limits.ucl, color="tab:red", linestyle="--", linewidth=1)
        ax.text(1.005, limits.ucl, f"UCL={limits.ucl}", transform=ax.get_yaxis_transform(), va="center", fontsize=8)
        if limits.lcl is not None:
            ax.axhline(limits.lcl, color="tab:red", linestyle="--", linewidth=1)
            ax.text(1.005, limits.lcl, f"LCL={limits.lcl}", transform=ax.get_yaxis_transform(), va="center", fontsize=8)
        ax.axhline(limits.center, color="0.5", linewidth=0.8)
        ax.text(1.005, limits.center, f"CL={limits.center:g}", transform=ax.get_yaxis_transform(), va="center", fontsize=8)
        ax.set_xlabel("test sample")
        ax.set_ylabel("Mann-Whitney statistic")
        ax.set_xticks(idx if len(idx) <= 30 else ax.get_xticks())
        if title:
            ax.set_title(title)
        fig.subplots_adjust(right=0.85)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    try:
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc}") from exc
    return path
