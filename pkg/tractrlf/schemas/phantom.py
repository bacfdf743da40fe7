from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

PhantomKind = Literal["straight", "arc", "crossing"]


class PhantomConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: PhantomKind = "straight"
    dims: int = Field(32, ge=1, description="Voxels per axis")
    spacing_mm: float = Field(1.0, gt=0)
    n_streamlines: int = Field(500, ge=1, description="Ground-truth streamlines per bundle")
    tube_radius_vox: float = Field(3.0, gt=0)
    lobe_sharpness: int = Field(16, ge=1)
    background_level: float = Field(0.3, ge=0, description="Isotropic fODF amplitude outside the bundle")
    aug_dilation_mm: float = Field(5.0, ge=0)
