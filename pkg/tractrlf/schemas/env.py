import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

STEP_SIZE_PROFILES = {
    "tractoinferno": 0.375,
    "hcp": 0.468,
    "ismrm": 0.75,
}


class EnvConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    profile: Literal["tractoinferno", "hcp", "ismrm"] = "tractoinferno"
    step_size_mm: Optional[float] = Field(None, gt=0, description="Overrides the profile step size")
    min_len_mm: float = Field(20.0, ge=0)
    max_len_mm: float = Field(200.0, gt=0)
    max_steps: int = Field(530, ge=1)
    max_angle_deg: float = Field(60.0, gt=0, le=180)
    seeds_per_voxel: int = Field(7, ge=1)
    n_prev_dirs: int = Field(4, ge=0)

    @property
    def step(self) -> float:
        return self.step_size_mm if self.step_size_mm is not None else STEP_SIZE_PROFILES[self.profile]

    @model_validator(mode="after")
    def check_lengths(self):
        if self.min_len_mm > self.max_len_mm:
            raise ValueError("min_len_mm must not exceed max_len_mm")
        return self

    @property
    def cos_max_angle(self) -> float:
        return math.cos(math.radians(self.max_angle_deg))
