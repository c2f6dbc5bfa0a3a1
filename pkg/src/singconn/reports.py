"""Deterministic report writers: JSON, CSV summaries and a log-log SVG plot."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__

SCHEMA = "singconn.report/1"


def jsonable(v):
    """Convert numpy scalars, arrays and complex numbers to plain JSON types."""
    if isinstance(v, Mapping):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        c = complex(v)
        if c.imag == 0.0:
            return _finite(c.real)
        return {"re": _finite(c.real), "im": _finite(c.imag)}
    if isinstance(v, (float, np.floating)):
        return _finite(float(v))
    return v


def _finite(x: float):
    if math.isfinite(x):
        return x
    return None if math.isnan(x) else ("inf" if x > 0 else "-inf")


def envelope(command: str, digest: str, body: Mapping) -> dict:
    return {"schema": SCHEMA, "command": command, "version": __version__, "config_sha256": digest,
            **jsonable(body)}


def write_json(path: str | Path, doc: Mapping) -> None:
    Path(path).write_text(json.dumps(jsonable(doc), sort_keys=True, indent=2) + "\n")


def summary_table(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    """Fixed-width text table."""
    cells = [[_cell(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "pass" if v else "FAIL"
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, complex):
        return f"{v.real:.6g}{v.imag:+.2e}j"
    return "" if v is None else str(v)


def loglog_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               width: int = 480, height: int = 320) -> str:
    """A minimal log-log line plot; non-positive values are skipped."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    pts = {k: [(math.log10(x), math.log10(y)) for x, y in zip(*v) if x > 0 and y > 0] for k, v in series.items()}
    allp = [p for v in pts.values() for p in v]
    pad = 50
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">', f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    if allp:
        x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
        y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
        x1, y1 = (x1 if x1 > x0 else x0 + 1), (y1 if y1 > y0 else y0 + 1)

        def sx(x):
            return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(y):
            return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

        out.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>')
        out.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>')
        out.append(f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" font-size="12">log10 k</text>')
        out.append(f'<text x="12" y="{height // 2}" font-size="12" transform="rotate(-90 12 {height // 2})">'
                   f'log10 gap</text>')
        for i, (name, p) in enumerate(sorted(pts.items())):
            col = colours[i % len(colours)]
            if p:
                path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
                out.append(f'<polyline fill="none" stroke="{col}" points="{path}"/>')
            out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="11" fill="{col}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
