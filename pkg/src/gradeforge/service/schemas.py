"""Request bodies accepted by the calibration endpoints.

Every model forbids unknown fields: a typo in a policy override should be
rejected outright instead of silently leaving the old value in place.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class CutoffRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min: float | str
    concept: str


class BonusOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    improvement_factor: float | str | None = None
    activity_factor: float | str | None = None


class PreviewRequest(BaseModel):
    """Policy overrides to try against the current snapshot.

    Absent fields keep the persisted policy's value.  ``weights`` replaces
    the whole weight map (partial weight maps would not sum to one anyway).
    """

    model_config = ConfigDict(extra="forbid")

    cutoffs: list[CutoffRow] | None = None
    weights: dict[str, float | str] | None = None
    bonuses: BonusOverrides | None = None
    rec_policy: str | None = None

    def is_empty(self) -> bool:
        return (
            self.cutoffs is None
            and self.weights is None
            and self.bonuses is None
            and self.rec_policy is None
        )


class PolicyRequest(PreviewRequest):
    """Same overrides as a preview plus the snapshot they were computed on."""

    snapshot_id: int
