import re

from silkstage.config import StageConfig
from silkstage.plots import PRESET_COLORS, plot_all, preset_segments
from silkstage.policy import ConstantPolicy
from silkstage.stage import run_episode


def transitions(trace):
    presets = trace.column("preset")
    return sum(a != b for a, b in zip(presets, presets[1:]))


def ribbon_patches(svg_text):
    colors = "|".join(c.lstrip("#") for c in PRESET_COLORS.values())
    return len(re.findall(rf"fill: #({colors})", svg_text))


def test_three_charts(tmp_path, rival_trace):
    paths = plot_all(rival_trace, tmp_path)
    assert sorted(paths) == ["credit", "cue", "height"]
    assert all(p.stat().st_size > 0 and p.read_text().lstrip().startswith("<?xml") for p in paths.values())


def test_ribbon_segments_match_transitions(tmp_path, rival_trace, whiplash_trace):
    for trace in (rival_trace, whiplash_trace):
        segs = preset_segments(trace)
        assert len(segs) == transitions(trace) + 1
        paths = plot_all(trace, tmp_path)
        assert ribbon_patches(paths["cue"].read_text()) == len(segs)


def test_segments_tile_the_trace(whiplash_trace):
    segs = preset_segments(whiplash_trace)
    assert segs[0][0] == 0.0 and segs[-1][1] == whiplash_trace.records[-1]["time"]
    assert all(a[1] == b[0] for a, b in zip(segs, segs[1:]))


def test_empty_trace_charts(tmp_path):
    trace = run_episode(StageConfig(duration=0.0), ConstantPolicy(), ConstantPolicy())
    paths = plot_all(trace, tmp_path)
    assert all(p.stat().st_size > 0 for p in paths.values())
    assert preset_segments(trace) == []


def test_charts_are_reproducible(tmp_path, coop_trace):
    a = plot_all(coop_trace, tmp_path / "a")
    b = plot_all(coop_trace, tmp_path / "b")
    assert all(a[k].read_bytes() == b[k].read_bytes() for k in a)
