"""Minimal SVG line plots: convergence curves and knot trajectories."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=150, top=40, bottom=50)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [10.0 ** k for k in range(math.floor(lo), math.ceil(hi) + 1)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 5))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def line_plot(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], title: str,
              xlabel: str, ylabel: str, logx: bool = False, logy: bool = False,
              markers: bool = True) -> str:
    """Render ``(label, x, y)`` series into an SVG document string."""
    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    pts = [(tx(x), ty(y)) for _, xs, ys in series for x, y in zip(xs, ys)
           if np.isfinite(x) and np.isfinite(y) and (not logx or x > 0) and (not logy or y > 0)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs_all, ys_all = zip(*pts)
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
           f'fill="none" stroke="black"/>']
    for v in _ticks(x0, x1, logx):
        tv = math.log10(v) if logx else v
        if x0 - 1e-9 <= tv <= x1 + 1e-9:
            label = f"1e{int(round(tv))}" if logx else f"{v:g}"
            out.append(f'<line x1="{_fmt(px(tv))}" y1="{MARGIN["top"] + ph}" x2="{_fmt(px(tv))}" '
                       f'y2="{MARGIN["top"]}" stroke="#ddd"/>')
            out.append(f'<text x="{_fmt(px(tv))}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{label}</text>')
    for v in _ticks(y0, y1, logy):
        tv = math.log10(v) if logy else v
        if y0 - 1e-9 <= tv <= y1 + 1e-9:
            label = f"1e{int(round(tv))}" if logy else f"{v:g}"
            out.append(f'<line x1="{MARGIN["left"]}" y1="{_fmt(py(tv))}" x2="{MARGIN["left"] + pw}" '
                       f'y2="{_fmt(py(tv))}" stroke="#ddd"/>')
            out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(py(tv) + 4)}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        colour = PALETTE[k % len(PALETTE)]
        coords = [(px(tx(x)), py(ty(y))) for x, y in zip(xs, ys)
                  if np.isfinite(x) and np.isfinite(y) and (not logx or x > 0) and (not logy or y > 0)]
        if len(coords) > 1:
            path = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        if markers:
            out += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2.5" fill="{colour}"/>' for a, b in coords]
        if label:
            ly = MARGIN["top"] + 14 + 16 * k
            lx = MARGIN["left"] + pw + 10
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 24}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def convergence_svg(summary_rows: list[dict], error: str = "energy") -> str:
    """Error against DOFs, one uniform and one adapted curve per (experiment, degree)."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in summary_rows:
        groups.setdefault((r["experiment"], r["degree"]), []).append(r)
    series = []
    for (exp, deg), rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda r: int(r["n_dofs"]))
        dofs = [float(r["n_dofs"]) for r in rows]
        for kind in ("uniform", "adapted"):
            ys = [float(r[f"err_{error}_{kind}"]) if r[f"err_{error}_{kind}"] not in ("", "nan") else float("nan")
                  for r in rows]
            if any(np.isfinite(ys)):
                series.append((f"{exp} p={deg} {kind}", dofs, ys))
    return line_plot(series, f"{error} error vs degrees of freedom", "DOFs", f"{error} error",
                     logx=True, logy=True)


def knot_trajectory_svg(knot_rows: list[dict], title: str) -> str:
    """Knot positions against iteration (one polyline per knot)."""
    iters = [float(r["iter"]) for r in knot_rows]
    keys = [k for k in knot_rows[0] if k != "iter"] if knot_rows else []
    series = [("", iters, [float(r[k]) for r in knot_rows]) for k in keys]
    return line_plot(series, title, "iteration", "knot position", markers=False)


def plot_run_dir(run_dir) -> list[Path]:
    """Write ``convergence_energy.svg``, ``convergence_l2.svg`` and 1D knot trajectories."""
    run_dir = Path(run_dir)
    written = []
    summary = run_dir / "summary.csv"
    if summary.exists():
        rows = read_csv(summary)
        for err in ("energy", "l2"):
            path = run_dir / f"convergence_{err}.svg"
            path.write_text(convergence_svg(rows, err))
            written.append(path)
    knots_dir = run_dir / "knots"
    if knots_dir.is_dir():
        for csv_path in sorted(knots_dir.glob("*.csv")):
            rows = read_csv(csv_path)
            if rows and all(k == "iter" or k.startswith("x") for k in rows[0]):
                path = csv_path.with_suffix(".svg")
                path.write_text(knot_trajectory_svg(rows, csv_path.stem))
                written.append(path)
    return written
