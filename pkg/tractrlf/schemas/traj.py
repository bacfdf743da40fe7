from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class TrajConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    per_tract: int = Field(2000, ge=1)
    mixed: int = Field(5000, ge=1)
    max_ep_len: int = Field(530, ge=1)
    rollout_seeds_per_voxel: int = Field(7, ge=1)


class SelectionManifest(BaseModel):
    """Provenance of a selected trajectory dataset."""

    kind: Literal["tract_specific", "mixed"]
    rule: str
    rng_seed: int
    n_total: int
    counts: dict[str, dict[str, int]] = Field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(c["longest"] + c["random"] for c in self.counts.values())
