from pydantic import BaseModel, ConfigDict, Field, field_validator


class PeakConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    order: int = Field(8, ge=0)
    rel_threshold: float = Field(0.25, ge=0, le=1)
    min_sep_deg: float = Field(25.0, ge=0, le=90)
    n_max: int = Field(3, ge=1)

    @field_validator("order")
    @classmethod
    def validate_order(cls, v):
        if v % 2:
            raise ValueError("SH order must be even")
        return v
