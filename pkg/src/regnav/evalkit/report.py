"""Deterministic report files: report.json, bins.csv, curves.svg and mi_report.csv."""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from pathlib import Path

from .metrics import EvalReport

SVG_NS = "http://www.w3.org/2000/svg"
FORMATS = ("json", "csv", "svg")
BIN_COLUMNS = ("lo", "hi", "N", "SR", "SPL", "CR")
MI_COLUMNS = ("instance", "kind", "states", "exact_bits", "bound_bits", "gap_bits", "classifier")


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def parse_report(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def bins_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BIN_COLUMNS)
    for b in report.bins:
        w.writerow(["" if b.get(k) is None else repr(b[k]) if isinstance(b[k], float) else b[k]
                    for k in BIN_COLUMNS])
    return buf.getvalue()


def mi_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MI_COLUMNS)
    for r in rows:
        w.writerow([r.instance, r.kind, r.states, repr(r.exact), repr(r.bound), repr(r.gap), r.classifier])
    return buf.getvalue()


def _panel(parent, x0, y0, w, h, title, series, xlabel, ylabel):
    """Line chart of ``series`` = [(name, [(x, y), ...])] inside the box (x0, y0, w, h)."""
    g = ET.SubElement(parent, "g", {"class": "panel", "data-title": title})
    ET.SubElement(g, "text", {"x": f"{x0 + w / 2:.2f}", "y": f"{y0 - 8:.2f}", "text-anchor": "middle"}).text = title
    ET.SubElement(g, "line", {"class": "axis", "x1": f"{x0:.2f}", "y1": f"{y0 + h:.2f}",
                              "x2": f"{x0 + w:.2f}", "y2": f"{y0 + h:.2f}", "stroke": "black"})
    ET.SubElement(g, "line", {"class": "axis", "x1": f"{x0:.2f}", "y1": f"{y0:.2f}",
                              "x2": f"{x0:.2f}", "y2": f"{y0 + h:.2f}", "stroke": "black"})
    ET.SubElement(g, "text", {"x": f"{x0 + w / 2:.2f}", "y": f"{y0 + h + 28:.2f}",
                              "text-anchor": "middle"}).text = xlabel
    ET.SubElement(g, "text", {"x": f"{x0 - 36:.2f}", "y": f"{y0 + h / 2:.2f}",
                              "text-anchor": "middle"}).text = ylabel
    pts = [p for _, s in series for p in s]
    if not pts:
        return
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys + [0.0]), max(ys + [1e-9])
    xspan, yspan = (xhi - xlo) or 1.0, (yhi - ylo) or 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    for i, (name, s) in enumerate(series):
        coords = " ".join(f"{x0 + (x - xlo) / xspan * w:.2f},{y0 + h - (y - ylo) / yspan * h:.2f}" for x, y in s)
        ET.SubElement(g, "polyline", {"data-series": name, "points": coords, "fill": "none",
                                      "stroke": colors[i % len(colors)], "stroke-width": "2"})
    ET.SubElement(g, "text", {"x": f"{x0 - 4:.2f}", "y": f"{y0 + 4:.2f}", "text-anchor": "end"}).text = f"{yhi:.3g}"
    ET.SubElement(g, "text", {"x": f"{x0 - 4:.2f}", "y": f"{y0 + h:.2f}", "text-anchor": "end"}).text = f"{ylo:.3g}"


def curves_svg(report: EvalReport, returns=None) -> str:
    """Geodesic-bin SR/SPL curves, plus a return curve when ``returns`` [(x, y)] is given."""
    width, height = 640, 320 if not returns else 620
    root = ET.Element("svg", {"xmlns": SVG_NS, "width": str(width), "height": str(height),
                              "viewBox": f"0 0 {width} {height}"})
    ET.SubElement(root, "title").text = "evaluation curves"
    filled = [b for b in report.bins if b["N"] > 0]
    centers = [(b["lo"] + (b["hi"] if b["hi"] is not None else b["lo"] + 2)) / 2 for b in filled]
    series = [("SR", [(c, b["SR"]) for c, b in zip(centers, filled)]),
              ("SPL", [(c, b["SPL"]) for c, b in zip(centers, filled)])]
    n_series = len(series)
    _panel(root, 70, 40, 540, 220, "success vs. starting geodesic distance", series, "geodesic distance (cells)", "%")
    if returns:
        _panel(root, 70, 340, 540, 220, "average episode return", [("return", list(returns))],
               "episodes", "return")
        n_series += 1
    root.set("data-series-count", str(n_series))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def validate_svg(text: str) -> list[str]:
    """Structural checks on an emitted SVG; returns a list of problems (empty when valid)."""
    problems = []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        return [f"not well-formed XML: {e}"]
    if root.tag != f"{{{SVG_NS}}}svg":
        return [f"root element is {root.tag}, not svg"]
    try:
        vx, vy, vw, vh = (float(v) for v in root.get("viewBox", "").split())
    except ValueError:
        return ["missing or malformed viewBox"]
    if root.get("width") is None or root.get("height") is None:
        problems.append("missing width/height")
    if root.find(f"{{{SVG_NS}}}title") is None:
        problems.append("missing title")
    lines = root.iter(f"{{{SVG_NS}}}polyline")
    count = 0
    for pl in lines:
        count += 1
        if not pl.get("data-series"):
            problems.append("polyline without data-series")
        for pair in pl.get("points", "").split():
            try:
                x, y = (float(v) for v in pair.split(","))
            except ValueError:
                problems.append(f"bad point {pair!r}")
                continue
            if not (vx <= x <= vx + vw and vy <= y <= vy + vh):
                problems.append(f"point {pair} outside the viewBox")
    declared = root.get("data-series-count")
    if declared is None or int(declared) != count:
        problems.append(f"declared {declared} series but found {count} polylines")
    return problems


def emit_report(report: EvalReport, out_dir, formats=FORMATS, returns=None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writers = {"json": ("report.json", report_json), "csv": ("bins.csv", bins_csv),
               "svg": ("curves.svg", lambda r: curves_svg(r, returns))}
    paths = {}
    for fmt in formats:
        if fmt not in writers:
            raise ValueError(f"unknown report format {fmt!r}")
        name, fn = writers[fmt]
        path = out_dir / name
        path.write_text(fn(report))
        paths[fmt] = path
    return paths


def write_mi_report(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mi_csv(rows))
    return path
