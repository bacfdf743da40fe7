"""Actor and twin critics as plain MLPs over ModelParams segments."""

import numpy as np

from tractrlf.core.errors import ShapeError
from tractrlf.diffcore import ops
from tractrlf.diffcore.params import ModelParams, add_linear
from tractrlf.diffcore.tensor import Tensor
from tractrlf.schemas.td3 import TD3Config

ACTION_DIM = 3
CRITICS = ("critic1", "critic2")


def add_mlp(params: ModelParams, prefix: str, sizes: list[int], rng: np.random.Generator) -> None:
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-2], sizes[1:-1])):
        add_linear(params, f"{prefix}.l{i}", fan_in, fan_out, rng)
    add_linear(params, f"{prefix}.out", sizes[-2], sizes[-1], rng)


def mlp_forward(params: ModelParams, prefix: str, x, output: str = "tanh") -> Tensor:
    h = x
    i = 0
    while f"{prefix}.l{i}.W" in params:
        h = ops.relu(ops.linear(h, params[f"{prefix}.l{i}.W"], params[f"{prefix}.l{i}.b"]))
        i += 1
    out = ops.linear(h, params[f"{prefix}.out.W"], params[f"{prefix}.out.b"])
    return ops.tanh(out) if output == "tanh" else out


def init_td3_params(cfg: TD3Config, state_dim: int, rng: np.random.Generator) -> ModelParams:
    params = ModelParams()
    add_mlp(params, "actor", [state_dim, *cfg.actor_hidden, ACTION_DIM], rng)
    for name in CRITICS:
        add_mlp(params, name, [state_dim + ACTION_DIM, *cfg.critic_hidden, 1], rng)
    return params


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def actor_forward(params: ModelParams, s) -> Tensor:
    """334 -> hidden -> 3, ReLU hidden layers and tanh output. Batched (N, 334)."""
    expected = params["actor.l0.W"].shape[0] if "actor.l0.W" in params else params["actor.out.W"].shape[0]
    if np.shape(s)[-1] != expected:
        raise ShapeError(f"actor expects states of length {expected}, got {np.shape(s)[-1]}")
    return mlp_forward(params, "actor", s if isinstance(s, Tensor) else np.atleast_2d(s))


def critic_forward(params: ModelParams, s, a, name: str = "critic1", output: str = "tanh") -> Tensor:
    """Q(s, a) from concat(s, a); returns (N, 1)."""
    s = s if isinstance(s, Tensor) else np.atleast_2d(s)
    a = a if isinstance(a, Tensor) else np.atleast_2d(a)
    x = ops.concat_lastdim([s, a])
    w = params[f"{name}.l0.W"] if f"{name}.l0.W" in params else params[f"{name}.out.W"]
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"critic expects inputs of length {w.shape[0]}, got {x.shape[-1]}")
    return mlp_forward(params, name, x, output)


def act(params: ModelParams, s) -> np.ndarray:
    """Deterministic action(s) as numpy; a single state gives a (3,) action."""
    x, single = _batch(s)
    a = actor_forward(params, x).data
    return a[0] if single else a


def explore_action(params: ModelParams, s, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Actor output plus iid N(0, sigma^2) noise, clamped to [-1, 1]."""
    a = act(params, s)
    if sigma > 0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


class ActorPolicy:
    def __init__(self, params: ModelParams):
        self.params = params

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return act(self.params, state)


class ExplorationPolicy:
    def __init__(self, params: ModelParams, sigma: float, rng: np.random.Generator):
        self.params = params
        self.sigma = sigma
        self.rng = rng

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return explore_action(self.params, state, self.sigma, self.rng)
