"""
Report Writer Module
Serializes window reports to JSONL, a human-readable summary, or
histogram rows for plotting
"""

import json
import logging

import numpy as np

from core.exceptions import SinkError
from utils.config import Config

logger = logging.getLogger(__name__)

SINKS = ("jsonl", "summary", "plot")

PLOT_HEADER = "window_id,spec_id,bin_lo,bin_hi,count\n"


def _json_line(data):
    try:
        return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"
    except (TypeError, ValueError) as e:
        raise SinkError(f"report is not serializable: {e}")


def _format_u(estimate):
    text = f"u={estimate.u:.6g}"
    if estimate.relative is not None:
        text += f" ({estimate.relative * 100:.4g}%)"
    return text


def _summary_text(report):
    lines = [f"window {report.window_id} [{report.timing.t_start:.3f}s..{report.timing.t_end:.3f}s]"]
    for spec_id, estimate in report.estimates.items():
        lines.append(f"  {spec_id}: {_format_u(estimate)} @ {estimate.confidence:.0%}, n={estimate.n}")
    if report.pooled is not None and len(report.estimates) > 1:
        lines.append(f"  pooled: {_format_u(report.pooled)}")
    for h in report.hypotheses:
        state = "rejected" if h.rejected else "kept"
        lines.append(f"  H0 ({h.spec_id}, {h.covariate}): r={h.statistic:.3f} p={h.p_value:.4f} {state}")
    for d in report.dependencies:
        lines.append(f"  cov({d.spec_id}, {d.covariate})={d.covariance:.3g} r={d.pearson_r:.3f}")
    if report.propagation is not None:
        lines.append(f"  u_C={report.propagation.u_total:.6g} ({report.propagation.mode.value})")
    if report.verdict is not None:
        v = report.verdict
        status = "✅ PASS" if v.passed else "❌ FAIL"
        margin = "" if v.margin_orders is None else f", margin {v.margin_orders:+.2f} orders"
        lines.append(f"  {status} r={v.r:.3g} vs {v.limit.label} {v.limit.lam:g}/h{margin}")
    for message in report.errors:
        lines.append(f"  ⚠️ {message}")
    return "\n".join(lines) + "\n"


def _plot_rows(report, bins):
    rows = []
    for spec_id in sorted(report.bootstraps):
        means = report.bootstraps[spec_id].resample_means
        counts, edges = np.histogram(means, bins=bins)
        for i, count in enumerate(counts):
            rows.append(f"{report.window_id},{spec_id},{edges[i]!r},{edges[i + 1]!r},{int(count)}\n")
    return "".join(rows)


def emit_report(report, sink="jsonl", bins=50):
    """
    Serialize one window report

    Args:
        report: WindowReport
        sink: "jsonl", "summary" or "plot"
        bins: Histogram bin count of the plot sink

    Returns:
        bytes: UTF-8 output, identical for identical reports
    """
    if sink == "jsonl":
        data = {"schema_version": Config.SCHEMA_VERSION, **report.to_dict()}
        text = _json_line(data)
    elif sink == "summary":
        text = _summary_text(report)
    elif sink == "plot":
        text = _plot_rows(report, bins)
    else:
        raise SinkError(f"unknown sink '{sink}' (expected one of {', '.join(SINKS)})")
    return text.encode("utf-8")


def emit_summary(summary, sink="jsonl"):
    """Serialize the run summary (plot sink has none)"""
    if sink == "jsonl":
        return _json_line({"schema_version": Config.SCHEMA_VERSION, "summary": summary.to_dict()}).encode("utf-8")
    if sink == "summary":
        lines = [
            "=" * 60,
            f"windows: {summary.windows} (skipped frames: {summary.skipped_frames})",
            f"verdicts: {summary.verdicts}, failures: {summary.verdict_failures}",
            f"H0 rejections: {summary.rejections}",
        ]
        if summary.average is not None:
            lines.append(f"average: {_format_u(summary.average)}")
        lines.append("=" * 60)
        return ("\n".join(lines) + "\n").encode("utf-8")
    return b""


class ReportWriter:
    """
    Writes a report stream to a binary sink
    """

    def __init__(self, stream, sink="jsonl", bins=50):
        """
        Initialize ReportWriter

        Args:
            stream: Binary output stream
            sink: "jsonl", "summary" or "plot"
            bins: Histogram bins for the plot sink
        """
        if sink not in SINKS:
            raise SinkError(f"unknown sink '{sink}' (expected one of {', '.join(SINKS)})")
        self.stream = stream
        self.sink = sink
        self.bins = bins
        self.written = 0

    def write(self, report):
        """Write one report, flushing so consumers see it immediately"""
        if self.sink == "plot" and self.written == 0:
            self._put(PLOT_HEADER.encode("utf-8"))
        self._put(emit_report(report, self.sink, self.bins))
        self.written += 1

    def write_summary(self, summary):
        self._put(emit_summary(summary, self.sink))

    def _put(self, data):
        try:
            self.stream.write(data)
            self.stream.flush()
        except (OSError, ValueError) as e:
            raise SinkError(f"cannot write report: {e}")
