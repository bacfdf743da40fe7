from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class TD3Config(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    actor_hidden: list[int] = Field(default_factory=lambda: [1024, 1024])
    critic_hidden: list[int] = Field(default_factory=lambda: [1024, 1024])
    critic_output: Literal["tanh", "linear"] = "tanh"
    lr: float = Field(8.56e-6, gt=0)
    gamma: float = Field(0.776, gt=0, lt=1)
    sigma_train: float = Field(0.334, ge=0)
    buffer_capacity: int = Field(1_000_000, ge=1)
    minibatch: int = Field(256, ge=1)
    policy_delay: int = Field(2, ge=1)
    target_noise: float = Field(0.2, ge=0)
    target_noise_clip: float = Field(0.5, ge=0)
    polyak_tau: float = Field(0.005, ge=0, le=1)
    episodes_budget: int = Field(5000, ge=0)
    episodes_per_batch: int = Field(100, ge=1)
    updates_per_step: float = Field(1.0, ge=0)
    warmup_transitions: int = Field(1000, ge=0)
