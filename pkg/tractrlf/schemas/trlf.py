from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TRLFConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_layers_pretrain: int = Field(3, ge=1)
    n_layers_total: int = 4
    n_heads: int = Field(1, ge=1)
    K: int = Field(40, ge=5)
    d: int = Field(128, ge=1)
    dropout: float = Field(0.1, ge=0, lt=1)
    max_ep_len: int = Field(530, ge=1)
    rtg_init: float = 300.0
    rtg_mode: Literal["fixed", "dataset_max", "phantom_path"] = "fixed"
    pretrain_iters: int = Field(30, ge=0)
    finetune_iters: int = Field(10, ge=0)
    steps_per_iter: int = Field(10_000, ge=1)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(1e-4, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    normalize_loss: bool = True

    @model_validator(mode="after")
    def check_layers(self):
        if self.n_layers_total <= self.n_layers_pretrain:
            raise ValueError("n_layers_total must exceed n_layers_pretrain")
        if self.d % self.n_heads:
            raise ValueError("d must be divisible by n_heads")
        return self
