"""Hand-built traces for the episode detectors.

Only the columns the detectors read are filled in, so these traces do not
replay and are passed to ``detect(..., check=False)``.
"""
from dataclasses import dataclass

from silkstage.stage import Trace

TICK = 0.02


@dataclass(frozen=True)
class Segment:
    seconds: float
    relation: str
    preset: str
    slope: float = 0.0
    active: bool = True
    flag: bool = False
    mode: str = "Active"


def build(segments, start_height=1.0):
    records, h, k = [], start_height, 0
    for seg in segments:
        for i in range(int(round(seg.seconds / TICK))):
            h += seg.slope * TICK
            records.append({
                "tick": k, "time": (k + 1) * TICK, "peak_meas": h,
                "relation": seg.relation, "timing_active": seg.active, "preset": seg.preset,
                "flag_a": seg.flag and i == 0, "flag_b": False,
                "mode_a": seg.mode, "mode_b": "Active",
            })
            k += 1
    return Trace({"type": "header", "config": {"tick": TICK}}, records)


PAD = Segment(1.0, "InStep", "LightOvercast", active=False)

ASCENT = [Segment(4.0, "InStep", "ClearSun", slope=0.05)]
NEGOTIATION = [Segment(3.0, "SmallLag", "LightOvercast")]
DRIFT = [Segment(1.0, "GrowingLag", "MistThunder")]
WHIPLASH = [Segment(1.5, "Split", "LightningRain", slope=-0.05)]
RECOVERY = [Segment(2.0, "InStep", "LightOvercast", slope=0.05)]
ECLIPSE = [Segment(0.5, "InStep", "BlueHush", active=False, flag=True, mode="Softening"),
           Segment(1.5, "InStep", "BlueHush", active=False, mode="Frozen")]

SINGLES = {
    "ClearAscent": [PAD] + ASCENT + [PAD],
    "SuspendedNegotiation": [PAD] + NEGOTIATION + [PAD],
    "CompetitiveWhiplash": [PAD] + WHIPLASH + [PAD],
    "RecoverySpiral": [PAD] + DRIFT + RECOVERY + [PAD],
    "SafetyEclipse": [PAD] + ECLIPSE + [PAD],
}

# every row of the hypothesis table in sequence
SEQUENCE = [PAD] + ASCENT + NEGOTIATION + WHIPLASH + RECOVERY + [PAD] + ECLIPSE + [PAD]
