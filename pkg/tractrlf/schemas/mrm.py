from pydantic import BaseModel, ConfigDict, Field, field_validator

from tractrlf.field.grid import NEIGHBOUR_COUNT


class MRMConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden: list[int] = Field(default_factory=lambda: [512, 256, 128])
    dropout: float = Field(0.5, ge=0, lt=1)
    threshold: float = Field(0.5, ge=0, le=1)
    input_dim: int = 322
    final_dilation_mm: float = Field(1.0, ge=0)
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(256, ge=2)
    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    train_fraction: float = Field(0.8, gt=0, lt=1)

    @field_validator("input_dim")
    @classmethod
    def validate_input_dim(cls, v):
        if v != NEIGHBOUR_COUNT * 46:
            raise ValueError("input_dim must equal 7 x 46 (SH coefficients plus mask value per voxel)")
        return v
