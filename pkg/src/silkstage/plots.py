"""Static SVG charts of a trace: height, cue with preset ribbon, and credit."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .stage import Trace  # noqa: E402

PRESET_COLORS = {
    "ClearSun": "#8ec9ff",
    "LightOvercast": "#c8d3dc",
    "MistThunder": "#8a93a6",
    "LightningRain": "#4b4f63",
    "BlueHush": "#2f5fbf",
}
# fixed salt and no date keep the SVG bytes reproducible
SVG_META = {"Date": None}
matplotlib.rcParams["svg.hashsalt"] = "silkstage"


def preset_segments(trace: Trace) -> List[Tuple[float, float, str]]:
    """``(start_s, end_s, preset)`` for each constant-preset stretch."""
    if not trace.records:
        return []
    tick = float(trace.header["config"]["tick"])
    out = []
    start = trace.records[0]["time"] - tick
    current = trace.records[0]["preset"]
    for prev, rec in zip(trace.records, trace.records[1:]):
        if rec["preset"] != current:
            out.append((start, prev["time"], current))
            start, current = prev["time"], rec["preset"]
    out.append((start, trace.records[-1]["time"], current))
    return out


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def plot_height(trace: Trace, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    t = trace.column("time")
    ax.plot(t, trace.column("peak_meas"), lw=0.8, label="measured peak")
    ax.plot(t, trace.column("center_meas"), lw=0.8, label="measured center")
    ax.step(t, trace.column("record"), where="post", lw=1.2, color="k", label="rolling record")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("height [m]")
    if t:
        ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    _save(fig, Path(path))


def plot_cue(trace: Trace, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    for start, end, preset in preset_segments(trace):
        ax.axvspan(start, end, ymin=0.0, ymax=0.08, color=PRESET_COLORS[preset], lw=0)
    ax.plot(trace.column("time"), trace.column("cue"), lw=0.8, color="k")
    ax.set_ylim(-0.1, 1.05)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cooperation cue")
    fig.tight_layout()
    _save(fig, Path(path))


def plot_credit(trace: Trace, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    t = trace.column("time")
    ax.plot(t, trace.column("credit_a"), lw=1.0, label="arm A")
    ax.plot(t, trace.column("credit_b"), lw=1.0, label="arm B")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("credit")
    if t:
        ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    _save(fig, Path(path))


def plot_all(trace: Trace, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"height": out / "height.svg", "cue": out / "cue.svg", "credit": out / "credit.svg"}
    plot_height(trace, paths["height"])
    plot_cue(trace, paths["cue"])
    plot_credit(trace, paths["credit"])
    return paths
