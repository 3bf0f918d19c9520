"""Two-panel convergence figure (ratio_a, ratio_b against n) as deterministic SVG.

Each data line carries the gid ``<panel>:<scenario>``; the reference line at
y = 1 is ``<panel>:reference``. The figure's description metadata records
each panel's data limits and its box in SVG user units, which is what
``read_svg_series`` needs to map path coordinates back to data values.
"""
from __future__ import annotations

import json
import math
import re
import xml.etree.ElementTree as ET
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .metrics import read_summary  # noqa: E402

PANELS = ("ratio_a", "ratio_b")
TITLES = {"ratio_a": "(a) mean of L0(selected) / inf L0",
          "ratio_b": "(b) mean L0(selected) / mean inf L0"}
WIDTH, HEIGHT = 10.0, 4.0  # inches; SVG user units are points
_RC = {"svg.hashsalt": "hpsplit", "svg.fonttype": "path", "path.simplify": False}


class PlotError(ValueError):
    pass


def _series(summaries):
    by_label = OrderedDict()
    for s in summaries:
        by_label.setdefault(s.scenario, []).append(s)
    return {k: sorted(v, key=lambda s: s.n) for k, v in by_label.items()}


def _limits(values, pad=0.05):
    lo, hi = min(values), max(values)
    span = hi - lo if hi > lo else max(abs(hi), 1.0) * 0.1
    return lo - pad * span, hi + pad * span


def plot_summaries(summaries, output_svg):
    """Render ``summaries`` (RatioSummary objects) to ``output_svg``."""
    sizes = sorted({s.n for s in summaries})
    if len(sizes) < 2:
        raise PlotError("the plot needs at least two distinct sample sizes")
    series = _series(summaries)
    geometry = {}
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(WIDTH, HEIGHT))
        axes = fig.subplots(1, 2)
        fig.subplots_adjust(left=0.07, right=0.98, bottom=0.14, top=0.88, wspace=0.22)
        for ax, panel in zip(axes, PANELS):
            ys = [1.0] + [getattr(s, panel) for rows in series.values() for s in rows
                          if math.isfinite(getattr(s, panel))]
            ylim = _limits(ys)
            lx = (math.log10(sizes[0]), math.log10(sizes[-1]))
            pad = 0.05 * (lx[1] - lx[0])
            xlim = (10 ** (lx[0] - pad), 10 ** (lx[1] + pad))
            ax.set_xscale("log")
            ax.set_xlim(*xlim)
            ax.set_ylim(*ylim)
            ref = ax.plot(xlim, [1.0, 1.0], color="0.4", linestyle="--", linewidth=1)[0]
            ref.set_gid(f"{panel}:reference")
            for label, rows in series.items():
                pts = [(s.n, getattr(s, panel)) for s in rows if math.isfinite(getattr(s, panel))]
                if not pts:
                    continue
                line = ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                               markersize=3, linewidth=1.5, label=label)[0]
                line.set_gid(f"{panel}:{label}")
            ax.set_xlabel("n")
            ax.set_ylabel(panel)
            ax.set_title(TITLES[panel], fontsize=10)
            ax.legend(fontsize=8, frameon=False)
            box = ax.get_position()
            geometry[panel] = {
                "xlim_log10": [math.log10(xlim[0]), math.log10(xlim[1])],
                "ylim": list(ylim),
                "box": [box.x0 * WIDTH * 72, (1 - box.y1) * HEIGHT * 72,
                        box.x1 * WIDTH * 72, (1 - box.y0) * HEIGHT * 72],
            }
        fig.savefig(output_svg, format="svg",
                    metadata={"Date": None, "Description": json.dumps(geometry, sort_keys=True)})
    return output_svg


def plot(summary_csv, output_svg):
    return plot_summaries(read_summary(summary_csv), output_svg)


_SVG = "{http://www.w3.org/2000/svg}"
_NUM = re.compile(r"-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?")


def _path_points(d):
    nums = [float(v) for v in _NUM.findall(d)]
    return list(zip(nums[0::2], nums[1::2]))


def read_svg_series(svg_path):
    """Recover ``{gid: [(n, ratio), ...]}`` from a figure made by ``plot``."""
    root = ET.parse(svg_path).getroot()
    desc = root.find(f".//{{http://purl.org/dc/elements/1.1/}}description")
    if desc is None or not desc.text:
        raise PlotError(f"{svg_path}: no geometry metadata")
    geometry = json.loads(desc.text)
    out = {}
    for g in root.iter(f"{_SVG}g"):
        gid = g.get("id", "")
        panel = gid.split(":", 1)[0]
        if panel not in geometry:
            continue
        path = g.find(f"{_SVG}path")
        if path is None:
            continue
        geo = geometry[panel]
        x0, y0, x1, y1 = geo["box"]
        (lx0, lx1), (ylo, yhi) = geo["xlim_log10"], geo["ylim"]
        pts = []
        for px, py in _path_points(path.get("d", "")):
            n = 10 ** (lx0 + (px - x0) / (x1 - x0) * (lx1 - lx0))
            pts.append((n, ylo + (y1 - py) / (y1 - y0) * (yhi - ylo)))
        out[gid] = pts
    return out
