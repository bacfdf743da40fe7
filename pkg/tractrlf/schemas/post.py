from pydantic import BaseModel, ConfigDict, Field, model_validator


class CleanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    radius_mm: float = Field(4.0, gt=0)
    resample_points: int = Field(32, ge=2)


class TractScores(BaseModel):
    dice: float = Field(..., ge=0, le=1)
    ovl: float = Field(..., ge=0, le=1)
    ovr: float = Field(..., ge=0)
    intersection: int
    pred_voxels: int
    gt_voxels: int

    @model_validator(mode="after")
    def check_consistency(self):
        expected = 2.0 * self.ovl * self.gt_voxels / (self.pred_voxels + self.gt_voxels)
        if abs(expected - self.dice) > 1e-9:
            raise ValueError("dice inconsistent with overlap counts")
        return self

    def as_kv(self) -> str:
        return (
            f"dice={self.dice:.6f} ovl={self.ovl:.6f} ovr={self.ovr:.6f} "
            f"intersection={self.intersection} pred_voxels={self.pred_voxels} gt_voxels={self.gt_voxels}"
        )
