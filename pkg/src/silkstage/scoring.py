"""Credit ledger: earn only on new height records, pay for every motion."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .sensing import FirstMover

RECORD_AWARD = 10.0
MOTION_RATE = 1.0
SAFETY_PENALTY = 20.0


@dataclass(frozen=True)
class CreditLedger:
    credit_a: float = 0.0
    credit_b: float = 0.0
    motion_cost_a: float = 0.0
    motion_cost_b: float = 0.0
    awards_a: float = 0.0
    awards_b: float = 0.0
    record_award: float = RECORD_AWARD
    motion_rate: float = MOTION_RATE

    def credit(self, arm: str) -> float:
        return self.credit_a if arm == "A" else self.credit_b

    def audit(self, tol: float = 1e-9) -> bool:
        """credit == awards - spends for both arms."""
        return (abs(self.credit_a - (self.awards_a - self.motion_cost_a)) <= tol
                and abs(self.credit_b - (self.awards_b - self.motion_cost_b)) <= tol)


def charge_motion(ledger: CreditLedger, arm: str, grip_speed: float, tick: float) -> CreditLedger:
    if grip_speed < 0:
        raise ValueError("grip_speed must be >= 0")
    spend = ledger.motion_rate * grip_speed * tick
    if spend == 0.0:
        return ledger
    if arm == "A":
        return replace(ledger, credit_a=ledger.credit_a - spend, motion_cost_a=ledger.motion_cost_a + spend)
    if arm == "B":
        return replace(ledger, credit_b=ledger.credit_b - spend, motion_cost_b=ledger.motion_cost_b + spend)
    raise ValueError(f"arm must be 'A' or 'B', got {arm!r}")


def award_shares(mover: FirstMover, record_award: float = RECORD_AWARD):
    """(award to A, award to B) for one broken record."""
    if mover is FirstMover.SHARED:
        return record_award / 2.0, record_award / 2.0
    if mover is FirstMover.ARM_A:
        return record_award, 0.0
    return 0.0, record_award


def award_record(ledger: CreditLedger, mover: FirstMover) -> CreditLedger:
    a, b = award_shares(mover, ledger.record_award)
    return replace(ledger, credit_a=ledger.credit_a + a, credit_b=ledger.credit_b + b,
                   awards_a=ledger.awards_a + a, awards_b=ledger.awards_b + b)


def reward(award: float, spend: float, safety_flagged: bool,
           safety_penalty: float = SAFETY_PENALTY) -> float:
    """Per-arm training reward for one control interval."""
    return award - spend - (safety_penalty if safety_flagged else 0.0)
