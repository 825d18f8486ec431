"""SVG plots of trace files.

Schedule and network traces become stacked step plots: entity ``i`` is drawn
at ``i + level`` with level 0 (idle), 0.25 (ready/waiting) or 0.5
(running/sending). Response traces are line plots of reference, output and
control. Output depends only on the trace bytes.
"""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .traces import STATE_LEVEL, read_trace

log = logging.getLogger(__name__)

_RC = {"svg.hashsalt": "chronosim", "svg.fonttype": "path", "path.simplify": False}


def _stack(rows, key):
    """Per-entity step series, entities in order of first appearance."""
    series: dict[tuple, tuple[list, list]] = {}
    for r in rows:
        ent = tuple(r[k] for k in key)
        xs, ys = series.setdefault(ent, ([], []))
        xs.append(r["time"])
        ys.append(STATE_LEVEL[r["state"]])
    return series


def _plot_stack(ax, rows, key, label):
    series = _stack(rows, key)
    t_end = max((r["time"] for r in rows), default=0.0)
    names = []
    for i, (ent, (xs, ys)) in enumerate(series.items()):
        ax.step(xs + [t_end], [i + y for y in ys] + [i + ys[-1]], where="post", linewidth=1.0)
        names.append("/".join(ent))
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.set_ylim(-0.25, max(len(names), 1))
    ax.set_xlabel("time [s]")
    ax.set_title(label)


def _plot_response(ax, rows, label):
    t = [r["time"] for r in rows]
    ax.plot(t, [r["reference"] for r in rows], label="reference", linewidth=1.0)
    ax.plot(t, [r["output"] for r in rows], label="output", linewidth=1.0)
    ax.set_xlabel("time [s]")
    ax.set_title(label)
    ax.legend(loc="upper right")


def _plot_energy(ax, rows, label):
    per = {}
    for r in rows:
        xs, ys = per.setdefault(r["node"], ([], []))
        xs.append(r["time"])
        ys.append(r["remaining_joules"])
    for node, (xs, ys) in per.items():
        ax.step(xs, ys, where="post", label=node, linewidth=1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("remaining [J]")
    ax.set_title(label)
    if per:
        ax.legend(loc="upper right")


def render_trace(path, out_dir) -> Path | None:
    """Render one trace file to ``out_dir/<stem>.svg``; event traces are skipped."""
    path = Path(path)
    kind, rows = read_trace(path)
    if kind == "events":
        log.info("no plot for event trace %s", path)
        return None
    with matplotlib.rc_context(_RC):
        if kind == "response":
            fig = Figure(figsize=(8, 5))
            ax1, ax2 = fig.subplots(2, 1, sharex=True)
            _plot_response(ax1, rows, path.stem)
            ax2.step([r["time"] for r in rows], [r["control"] for r in rows], where="post", linewidth=1.0)
            ax2.set_ylabel("control")
            ax2.set_xlabel("time [s]")
        else:
            fig = Figure(figsize=(8, 4))
            ax = fig.subplots()
            if kind == "schedule":
                _plot_stack(ax, rows, ("node", "task"), path.stem)
            elif kind == "network":
                _plot_stack(ax, rows, ("network", "node"), path.stem)
            else:
                _plot_energy(ax, rows, path.stem)
        fig.tight_layout()
        FigureCanvasSVG(fig)
        out = Path(out_dir) / f"{path.stem}.svg"
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
    return out


def render_plots(trace_paths, out_dir) -> list[Path]:
    """Render every trace; raises MalformedTrace before writing anything if one is bad."""
    for p in trace_paths:
        read_trace(p)
    outs = [render_trace(p, out_dir) for p in trace_paths]
    return [o for o in outs if o is not None]
