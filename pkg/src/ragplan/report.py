"""Frontier reports rendered from ``pareto.json`` documents."""
from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

from . import _doc
from .errors import SchemaError
from .explore import SCHEMA

CSV_COLUMNS = ("config_key", "quality", "ttft_s", "tpot_s", "rps", "req_per_dollar")


def load_pareto(text):
    obj = _doc.loads(text)
    if not isinstance(obj, dict):
        raise SchemaError(("$", "expected an object"))
    if obj.get("schema") != SCHEMA:
        raise SchemaError(("schema", f"expected {SCHEMA!r}"))
    for key in ("frontier", "trace", "objectives"):
        if not isinstance(obj.get(key), list):
            raise SchemaError((key, "required array"))
    for i, p in enumerate(obj["frontier"]):
        if not isinstance(p, dict) or "perf" not in p or "quality" not in p or "config_key" not in p:
            raise SchemaError((f"frontier[{i}]", "needs config_key, quality and perf"))
    return obj


def frontier_csv(doc):
    """Frontier rows sorted by ascending quality; LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    rows = sorted(doc["frontier"], key=lambda p: (p["quality"], p["config_key"]))
    for p in rows:
        perf = p["perf"]
        w.writerow([p["config_key"], repr(float(p["quality"]))]
                   + [repr(float(perf[c])) for c in CSV_COLUMNS[2:]])
    return buf.getvalue()


def frontier_svg(doc, width=640, height=480):
    """Scatter of quality against the first performance objective."""
    metric = doc["objectives"][1]["metric"] if len(doc["objectives"]) > 1 else "req_per_dollar"
    frontier_keys = {p["config_key"] for p in doc["frontier"]}
    pts = []
    for e in doc["trace"]:
        if e.get("status") == "ok" and "objectives" in e:
            pts.append((e["objectives"]["quality"], e["objectives"][metric], e["config_key"] in frontier_keys))
    margin = 60
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5 * (abs(y0) or 1), y1 + 0.5 * (abs(y1) or 1)

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="14">quality</text>',
        f'<text x="15" y="{height / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 15 {height / 2:.1f})">{escape(metric)}</text>',
        f'<text x="{margin}" y="{height - margin + 18}" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 18}" font-size="10" text-anchor="end">{x1:.4g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" font-size="10" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>',
    ]
    for x, y, on in sorted(pts, key=lambda p: p[2]):
        color, r = ("#d62728", 5) if on else ("#b0b0b0", 3)
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{r}" fill="{color}"/>')
    front = sorted((p for p in pts if p[2]), key=lambda p: p[0])
    if len(front) > 1:
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y, _ in front)
        out.append(f'<polyline points="{path}" fill="none" stroke="#d62728" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
