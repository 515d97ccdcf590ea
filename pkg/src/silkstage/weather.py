"""Cooperation cue, the hysteretic weather preset machine and the forest altimeter."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .sensing import TimingEstimate

LAG_DECAY = 0.12


class Preset(str, enum.Enum):
    CLEAR_SUN = "ClearSun"
    LIGHT_OVERCAST = "LightOvercast"
    MIST_THUNDER = "MistThunder"
    LIGHTNING_RAIN = "LightningRain"
    BLUE_HUSH = "BlueHush"


# cue bands, best first: (preset, lower edge, upper edge)
BANDS = (
    (Preset.CLEAR_SUN, 0.75, math.inf),
    (Preset.LIGHT_OVERCAST, 0.5, 0.75),
    (Preset.MIST_THUNDER, 0.25, 0.5),
    (Preset.LIGHTNING_RAIN, -math.inf, 0.25),
)
RANK = {p: len(BANDS) - 1 - i for i, (p, _, _) in enumerate(BANDS)}
_EDGES = {p: (lo, hi) for p, lo, hi in BANDS}


class Band(str, enum.Enum):
    UNDERSTORY = "Understory"
    TRUNKS = "Trunks"
    CANOPY = "Canopy"
    OPEN_SKY = "OpenSky"


@dataclass(frozen=True)
class CooperationCue:
    value: float
    time: float


@dataclass(frozen=True)
class ForestBand:
    value: Band
    scroll: float


@dataclass(frozen=True)
class WeatherFsm:
    current: Preset = Preset.CLEAR_SUN
    since: float = 0.0
    min_dwell: float = 2.0
    margin: float = 0.05


def cooperation_cue(est: TimingEstimate, time: float = 0.0, lag_decay: float = LAG_DECAY) -> CooperationCue:
    value = max(0.0, est.correlation) * math.exp(-abs(est.lag) / lag_decay)
    return CooperationCue(min(1.0, max(0.0, value)), time)


def preset_for_cue(value: float) -> Preset:
    for preset, lo, _ in BANDS:
        if value >= lo:
            return preset
    return Preset.LIGHTNING_RAIN


def step_preset(fsm: WeatherFsm, cue: CooperationCue, safety_active: bool) -> WeatherFsm:
    """Advance the preset machine by one cue sample.

    Safety forces BlueHush at once. Otherwise the preset follows the cue band,
    but only after ``min_dwell`` in the current preset and only once the cue
    is past the current band's edge by at least ``margin``.
    """
    if cue.time < fsm.since:
        raise ValueError(f"cue time {cue.time} precedes preset start {fsm.since}")
    if safety_active:
        if fsm.current is Preset.BLUE_HUSH:
            return fsm
        return replace(fsm, current=Preset.BLUE_HUSH, since=cue.time)
    target = preset_for_cue(cue.value)
    if fsm.current is Preset.BLUE_HUSH:
        return replace(fsm, current=target, since=cue.time)
    if target is fsm.current:
        return fsm
    if cue.time - fsm.since < fsm.min_dwell - 1e-9:
        return fsm
    lo, hi = _EDGES[fsm.current]
    if RANK[target] < RANK[fsm.current]:
        beyond = cue.value <= lo - fsm.margin
    else:
        beyond = cue.value >= hi + fsm.margin
    if not beyond:
        return fsm
    return replace(fsm, current=target, since=cue.time)


def forest_band(center_height: float, h_floor: float, h_sky: float) -> ForestBand:
    if not h_sky > h_floor:
        raise ValueError("h_sky must exceed h_floor")
    scroll = min(1.0, max(0.0, (center_height - h_floor) / (h_sky - h_floor)))
    if scroll < 0.25:
        band = Band.UNDERSTORY
    elif scroll < 0.5:
        band = Band.TRUNKS
    elif scroll < 0.75:
        band = Band.CANOPY
    else:
        band = Band.OPEN_SKY
    return ForestBand(band, scroll)
