"""
Decoder-only transformer over interleaved (return-to-go, state, action) tokens.

Parameter layout:
    emb_R, emb_s, emb_a       affine token embeddings to width d
    pos                       learnable timestep table (max_ep_len, d)
    block{i}.*                pre-LN decoder blocks (attention + 4d ReLU MLP)
    ln_f, head                final layer norm and tanh action head
"""

import math
import re
from typing import Optional

import numpy as np

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.diffcore import ops
from tractrlf.diffcore.params import ModelParams, add_linear, truncated_normal
from tractrlf.diffcore.tensor import Tensor
from tractrlf.schemas.trlf import TRLFConfig
from tractrlf.traj.segments import SegmentBatch

INIT_STD = 0.02
MASKED = -1e9
EMBEDDINGS = ("emb_R.", "emb_s.", "emb_a.", "pos")
HEAD = ("ln_f.", "head.")

_BLOCK = re.compile(r"^block(\d+)\.")


def trlf_param_count(cfg: TRLFConfig, state_dim: int = 334, n_layers: Optional[int] = None) -> int:
    """Closed-form parameter count for a model with `n_layers` blocks (default: all)."""
    d = cfg.d
    L = cfg.n_layers_total if n_layers is None else n_layers
    embeddings = 2 * d + (state_dim + 1) * d + 4 * d + cfg.max_ep_len * d
    per_block = 12 * d * d + 13 * d
    return embeddings + L * per_block + 2 * d + 3 * d + 3


def _add_layernorm(params: ModelParams, prefix: str, d: int) -> None:
    params.add(f"{prefix}.g", np.ones(d))
    params.add(f"{prefix}.b", np.zeros(d))


def add_block(params: ModelParams, index: int, d: int, rng: np.random.Generator) -> None:
    p = f"block{index}"
    _add_layernorm(params, f"{p}.ln1", d)
    for name in ("q", "k", "v", "o"):
        add_linear(params, f"{p}.{name}", d, d, rng, std=INIT_STD)
    _add_layernorm(params, f"{p}.ln2", d)
    add_linear(params, f"{p}.mlp1", d, 4 * d, rng, std=INIT_STD)
    add_linear(params, f"{p}.mlp2", 4 * d, d, rng, std=INIT_STD)


def init_trlf_params(
    cfg: TRLFConfig, rng: np.random.Generator, state_dim: int = 334, n_layers: Optional[int] = None
) -> ModelParams:
    d = cfg.d
    params = ModelParams()
    add_linear(params, "emb_R", 1, d, rng, std=INIT_STD)
    add_linear(params, "emb_s", state_dim, d, rng, std=INIT_STD)
    add_linear(params, "emb_a", 3, d, rng, std=INIT_STD)
    params.add("pos", truncated_normal(rng, (cfg.max_ep_len, d), INIT_STD))
    for i in range(cfg.n_layers_pretrain if n_layers is None else n_layers):
        add_block(params, i, d, rng)
    _add_layernorm(params, "ln_f", d)
    add_linear(params, "head", d, 3, rng, std=INIT_STD)
    return params


def count_blocks(params: ModelParams) -> int:
    return len({int(m.group(1)) for m in (_BLOCK.match(n) for n in params) if m})


def block_prefixes(n: int) -> tuple[str, ...]:
    return tuple(f"block{i}." for i in range(n))


def state_width(params: ModelParams) -> int:
    return params["emb_s.W"].shape[0]


def embed(batch: SegmentBatch, params: ModelParams) -> Tensor:
    """(B, K) blocks -> (B, 3K, d) tokens ordered [R_t, s_t, a_t] per timestep."""
    B, K = batch.timesteps.shape
    if batch.states.shape[:2] != (B, K) or batch.states.shape[2] != state_width(params):
        raise ShapeError(f"state block {batch.states.shape} does not match model width {state_width(params)}")
    if batch.actions.shape != (B, K, 3) or batch.rtg.shape != (B, K, 1):
        raise ShapeError("rtg/action blocks must be (B, K, 1) and (B, K, 3)")
    pos = ops.embedding_lookup(params["pos"], batch.timesteps)
    tokens = [
        ops.linear(batch.rtg, params["emb_R.W"], params["emb_R.b"]) + pos,
        ops.linear(batch.states, params["emb_s.W"], params["emb_s.b"]) + pos,
        ops.linear(batch.actions, params["emb_a.W"], params["emb_a.b"]) + pos,
    ]
    d = params["pos"].shape[1]
    # (B, K, 3d) -> (B, 3K, d) keeps each timestep's three tokens adjacent
    return ops.reshape(ops.concat_lastdim(tokens), (B, 3 * K, d))


def attention_bias(mask: Optional[np.ndarray], n_tokens: int) -> np.ndarray:
    """
    Additive (B or 1, 1, T, T) bias: causal, and padded keys hidden from every
    query except themselves.
    """
    allowed = np.tril(np.ones((n_tokens, n_tokens), dtype=bool))[None]
    if mask is not None:
        key_valid = np.repeat(np.asarray(mask, dtype=bool), 3, axis=1)  # (B, T)
        allowed = allowed & (key_valid[:, None, :] | np.eye(n_tokens, dtype=bool)[None])
    return np.where(allowed, 0.0, MASKED)[:, None]


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    B, T, d = x.shape
    return ops.swapaxes(ops.reshape(x, (B, T, n_heads, d // n_heads)), 1, 2)


def _merge_heads(x: Tensor) -> Tensor:
    B, h, T, dh = x.shape
    return ops.reshape(ops.swapaxes(x, 1, 2), (B, T, h * dh))


def _linear(params: ModelParams, prefix: str, x) -> Tensor:
    return ops.linear(x, params[f"{prefix}.W"], params[f"{prefix}.b"])


def _layernorm(params: ModelParams, prefix: str, x) -> Tensor:
    return ops.layernorm_lastdim(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def attention(
    params: ModelParams, prefix: str, x: Tensor, bias: np.ndarray, n_heads: int, p_drop: float, training: bool, rng
) -> Tensor:
    q = _split_heads(_linear(params, f"{prefix}.q", x), n_heads)
    k = _split_heads(_linear(params, f"{prefix}.k", x), n_heads)
    v = _split_heads(_linear(params, f"{prefix}.v", x), n_heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * scale + bias
    weights = ops.dropout(ops.softmax_lastdim(scores), p_drop, rng, training)
    return _linear(params, f"{prefix}.o", _merge_heads(ops.matmul(weights, v)))


def decoder_forward(
    tokens: Tensor,
    params: ModelParams,
    n_layers: int,
    n_heads: int = 1,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    mask: Optional[np.ndarray] = None,
    p_drop: float = 0.1,
) -> Tensor:
    """Run the first `n_layers` blocks. `mask` is the (B, K) timestep validity mask."""
    available = count_blocks(params)
    if not 1 <= n_layers <= available:
        raise UsageError(f"cannot run {n_layers} decoder blocks; model has {available}")
    if tokens.shape[-1] % n_heads:
        raise UsageError("model width must be divisible by the number of heads")
    bias = attention_bias(mask, tokens.shape[1])
    x = tokens
    for i in range(n_layers):
        p = f"block{i}"
        h = attention(params, p, _layernorm(params, f"{p}.ln1", x), bias, n_heads, p_drop, training, rng)
        x = x + ops.dropout(h, p_drop, rng, training)
        h = _linear(params, f"{p}.mlp2", ops.relu(_linear(params, f"{p}.mlp1", _layernorm(params, f"{p}.ln2", x))))
        x = x + ops.dropout(h, p_drop, rng, training)
    return x


def predict_actions(hidden: Tensor, params: ModelParams) -> Tensor:
    """Action head at every state-token position: (B, 3K, d) -> (B, K, 3)."""
    states = ops.index(hidden, (slice(None), slice(1, None, 3)))
    return ops.tanh(_linear(params, "head", _layernorm(params, "ln_f", states)))


def forward(
    params: ModelParams,
    batch: SegmentBatch,
    cfg: TRLFConfig,
    n_layers: Optional[int] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    hidden = decoder_forward(
        embed(batch, params),
        params,
        count_blocks(params) if n_layers is None else n_layers,
        n_heads=cfg.n_heads,
        training=training,
        rng=rng,
        mask=batch.mask,
        p_drop=cfg.dropout,
    )
    return predict_actions(hidden, params)
