"""CSV and SVG emission for evaluation reports."""

import csv
import io
from xml.sax.saxutils import escape

from .metrics import METRICS

BAR_COLORS = {"known": "#4c72b0", "unknown": "#dd8452", "delta": "#55a868"}


def samples_csv(results):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample", "combination", *METRICS])
    for r in sorted(results, key=lambda r: r.sample_id):
        writer.writerow([r.sample_id, "|".join(r.combination), *(f"{r.metrics[m]:.4f}" for m in METRICS)])
    return buf.getvalue()


def delta_svg(report, width=640, height=360):
    """Grouped bars: Known and Unknown score per metric, plus the delta.

    Scores use the left axis (0-100); deltas are drawn around a zero line
    on a separate band beneath, scaled to the largest absolute delta.
    """
    margin = 40
    top_h = 200
    band_top = margin + top_h + 30
    band_h = height - band_top - 30
    group_w = (width - 2 * margin) / len(METRICS)
    bar_w = group_w / 4
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
        "Known vs Unknown (percent) and delta (Unknown - Known)</text>",
        f'<line x1="{margin}" y1="{margin + top_h}" x2="{width - margin}" y2="{margin + top_h}" stroke="black"/>',
    ]
    delta = report.delta
    scale = max((abs(v) for v in delta.values()), default=0.0) if delta else 0.0
    scale = scale or 1.0
    zero_y = band_top + band_h / 2
    parts.append(f'<line x1="{margin}" y1="{zero_y:.1f}" x2="{width - margin}" y2="{zero_y:.1f}" stroke="#888"/>')
    for gi, metric in enumerate(METRICS):
        x0 = margin + gi * group_w + bar_w / 2
        for bi, split in enumerate(("known", "unknown")):
            block = getattr(report, split)
            if block is None:
                continue
            value = block[metric]
            bh = top_h * value / 100.0
            x = x0 + bi * bar_w
            parts.append(
                f'<rect x="{x:.1f}" y="{margin + top_h - bh:.1f}" width="{bar_w * 0.9:.1f}" '
                f'height="{bh:.1f}" fill="{BAR_COLORS[split]}"><title>{split} {metric} {value:.2f}</title></rect>'
            )
        if delta:
            dv = delta[metric]
            dh = (band_h / 2) * abs(dv) / scale
            y = zero_y - dh if dv >= 0 else zero_y
            x = x0 + 2 * bar_w
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.9:.1f}" height="{dh:.1f}" '
                f'fill="{BAR_COLORS["delta"]}"><title>delta {metric} {dv:+.4f}</title></rect>'
            )
            parts.append(
                f'<text x="{x + bar_w * 0.45:.1f}" y="{band_top + band_h + 14:.1f}" '
                f'text-anchor="middle">{dv:+.2f}</text>'
            )
        parts.append(
            f'<text x="{x0 + bar_w:.1f}" y="{margin + top_h + 14}" text-anchor="middle">{escape(metric)}</text>'
        )
    for i, (name, color) in enumerate(BAR_COLORS.items()):
        parts.append(f'<rect x="{margin + i * 90}" y="28" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{margin + i * 90 + 14}" y="37">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
