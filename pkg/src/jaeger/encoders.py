"""Toy transformer encoders for questions, element content and visuals.

Blocks are post-norm: self-attention, residual add, layer norm,
feed-forward, residual add, layer norm. Attention masks PAD keys always
and future keys when the encoder is causal; masked scores are set to
-inf before the softmax so masked weights are exactly zero, which makes
causal and PAD invariance hold bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import (Tensor, add, concat_last, layer_norm, linear, masked_mean_rows,
                       matmul, relu, scale, seeded_init, select_row, slice_last,
                       softmax_last, transpose)
from .text import embed_sequence


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int
    n_heads: int
    n_layers: int
    d_ff: int
    max_seq: int
    causal: bool = False

    def __post_init__(self):
        for name in ("d_model", "n_heads", "n_layers", "d_ff", "max_seq"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class BlockParams:
    """Weights of one transformer block, in application order."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln2_g: Tensor
    ln2_b: Tensor

    def named(self, prefix: str):
        for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b",
                     "w1", "b1", "w2", "b2", "ln2_g", "ln2_b"):
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class EncoderParams:
    """Embedding tables plus a stack of block weights."""

    token_table: Tensor
    pos_table: Tensor
    blocks: list[BlockParams] = field(default_factory=list)

    def named(self, prefix: str):
        yield f"{prefix}.tok", self.token_table
        yield f"{prefix}.pos", self.pos_table
        for i, blk in enumerate(self.blocks):
            yield from blk.named(f"{prefix}.blk{i}")


def init_block(cfg: EncoderConfig, seed: int, prefix: str, dtype=np.float32) -> BlockParams:
    d, f = cfg.d_model, cfg.d_ff

    def xav(name, shape):
        return seeded_init(shape, "xavier_uniform", seed, f"{prefix}.{name}", dtype=dtype)

    def zeros(name, shape):
        return seeded_init(shape, "zeros", seed, f"{prefix}.{name}", dtype=dtype)

    def ones(name, shape):
        return seeded_init(shape, "ones", seed, f"{prefix}.{name}", dtype=dtype)

    return BlockParams(
        wq=xav("wq", (d, d)), bq=zeros("bq", (d,)),
        wk=xav("wk", (d, d)), bk=zeros("bk", (d,)),
        wv=xav("wv", (d, d)), bv=zeros("bv", (d,)),
        wo=xav("wo", (d, d)), bo=zeros("bo", (d,)),
        ln1_g=ones("ln1_g", (d,)), ln1_b=zeros("ln1_b", (d,)),
        w1=xav("w1", (d, f)), b1=zeros("b1", (f,)),
        w2=xav("w2", (f, d)), b2=zeros("b2", (d,)),
        ln2_g=ones("ln2_g", (d,)), ln2_b=zeros("ln2_b", (d,)),
    )


def init_encoder(cfg: EncoderConfig, vocab_size: int, seed: int, prefix: str,
                 dtype=np.float32) -> EncoderParams:
    token = seeded_init((vocab_size, cfg.d_model), "xavier_uniform", seed,
                        f"{prefix}.tok", dtype=dtype)
    pos = seeded_init((cfg.max_seq, cfg.d_model), "xavier_uniform", seed,
                      f"{prefix}.pos", dtype=dtype)
    blocks = [init_block(cfg, seed, f"{prefix}.blk{i}", dtype=dtype)
              for i in range(cfg.n_layers)]
    return EncoderParams(token, pos, blocks)


def attention_bias(mask: np.ndarray, causal: bool, dtype) -> Tensor:
    """(L, L) additive bias: 0 where key j is visible to query i, -inf otherwise."""
    m = np.asarray(mask, dtype=bool)
    length = m.shape[0]
    bias = np.zeros((length, length), dtype=dtype)
    bias[:, ~m] = -np.inf
    if causal:
        bias[np.triu_indices(length, k=1)] = -np.inf
    return Tensor(bias)


def multi_head_attention(x: Tensor, mask: np.ndarray, params: BlockParams,
                         cfg: EncoderConfig) -> Tensor:
    """Masked scaled dot-product attention over all heads, then output projection."""
    q = linear(x, params.wq, params.bq)
    k = linear(x, params.wk, params.bk)
    v = linear(x, params.wv, params.bv)
    bias = attention_bias(mask, cfg.causal, x.data.dtype)
    inv_scale = 1.0 / math.sqrt(cfg.d_head)
    ctx = None
    for h in range(cfg.n_heads):
        lo, hi = h * cfg.d_head, (h + 1) * cfg.d_head
        qh, kh, vh = slice_last(q, lo, hi), slice_last(k, lo, hi), slice_last(v, lo, hi)
        scores = add(scale(matmul(qh, transpose(kh)), inv_scale), bias)
        weights = softmax_last(scores)
        head = matmul(weights, vh)
        ctx = head if ctx is None else concat_last(ctx, head)
    return linear(ctx, params.wo, params.bo)


def transformer_block(x: Tensor, mask: np.ndarray, params: BlockParams,
                      cfg: EncoderConfig) -> Tensor:
    """One post-norm block; preserves the (L, d_model) shape."""
    if x.data.ndim != 2 or x.data.shape[1] != cfg.d_model:
        raise ShapeError(f"block input {x.data.shape} does not match d_model {cfg.d_model}")
    if x.data.shape[0] > cfg.max_seq:
        raise ContractError(f"sequence of {x.data.shape[0]} exceeds max_seq {cfg.max_seq}")
    attn = multi_head_attention(x, mask, params, cfg)
    h = layer_norm(add(x, attn), params.ln1_g, params.ln1_b)
    ff = linear(relu(linear(h, params.w1, params.b1)), params.w2, params.b2)
    return layer_norm(add(h, ff), params.ln2_g, params.ln2_b)


def run_blocks(ids, mask: np.ndarray, params: EncoderParams, cfg: EncoderConfig,
               extra: Tensor | None = None) -> Tensor:
    """Embed a sequence, optionally add a per-sequence vector, run the stack."""
    x = embed_sequence(ids, params.token_table, params.pos_table)
    if extra is not None:
        x = add(x, extra)
    for blk in params.blocks:
        x = transformer_block(x, mask, blk, cfg)
    return x


def encode_question_bidir(ids, mask: np.ndarray, params: EncoderParams,
                          cfg: EncoderConfig) -> Tensor:
    """Bidirectional question feature: the final CLS (position 0) vector."""
    if cfg.causal:
        raise ContractError("bidirectional encoder configured as causal")
    return select_row(run_blocks(ids, mask, params, cfg), 0)


def encode_question_causal(ids, mask: np.ndarray, params: EncoderParams,
                           cfg: EncoderConfig) -> Tensor:
    """Causal question feature: the hidden state at the last non-PAD position."""
    if not cfg.causal:
        raise ContractError("causal encoder configured as bidirectional")
    nz = np.flatnonzero(np.asarray(mask, dtype=bool))
    if nz.size == 0:
        raise ContractError("cannot pool an all-PAD sequence")
    return select_row(run_blocks(ids, mask, params, cfg), int(nz[-1]))


@dataclass
class ContentParams:
    """Content encoder weights: a text encoder plus the bbox injection."""

    encoder: EncoderParams
    bbox_w: Tensor
    bbox_b: Tensor

    def named(self, prefix: str):
        yield from self.encoder.named(prefix)
        yield f"{prefix}.bbox_w", self.bbox_w
        yield f"{prefix}.bbox_b", self.bbox_b


def init_content(cfg: EncoderConfig, vocab_size: int, seed: int, prefix: str,
                 dtype=np.float32) -> ContentParams:
    enc = init_encoder(cfg, vocab_size, seed, prefix, dtype=dtype)
    bbox_w = seeded_init((4, cfg.d_model), "xavier_uniform", seed, f"{prefix}.bbox_w",
                         dtype=dtype)
    bbox_b = seeded_init((cfg.d_model,), "zeros", seed, f"{prefix}.bbox_b", dtype=dtype)
    return ContentParams(enc, bbox_w, bbox_b)


def encode_content(ids, mask: np.ndarray, bbox, params: ContentParams,
                   cfg: EncoderConfig) -> Tensor:
    """Element feature: text plus bbox geometry, mean-pooled over non-PAD rows.

    The bbox is mapped through a learned affine layer and the result is
    added to every token embedding before the block stack.
    """
    box = np.asarray(bbox, dtype=np.float64)
    if box.shape != (4,):
        raise ShapeError(f"bbox must have 4 coordinates, got shape {box.shape}")
    x1, y1, x2, y2 = (float(c) for c in box)
    if not (x1 < x2 and y1 < y2):
        raise ContractError(f"degenerate bbox ({x1}, {y1}, {x2}, {y2})")
    dtype = params.bbox_w.data.dtype
    proj = linear(Tensor(box.astype(dtype)), params.bbox_w, params.bbox_b)
    hidden = run_blocks(ids, mask, params.encoder, cfg, extra=proj)
    return masked_mean_rows(hidden, mask)


@dataclass
class VisualParams:
    """Two-layer MLP over raw visual descriptors."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named(self, prefix: str):
        for name in ("w1", "b1", "w2", "b2"):
            yield f"{prefix}.{name}", getattr(self, name)


def init_visual(d_in: int, d_hidden: int, d_out: int, seed: int, prefix: str,
                dtype=np.float32) -> VisualParams:
    return VisualParams(
        w1=seeded_init((d_in, d_hidden), "xavier_uniform", seed, f"{prefix}.w1", dtype=dtype),
        b1=seeded_init((d_hidden,), "zeros", seed, f"{prefix}.b1", dtype=dtype),
        w2=seeded_init((d_hidden, d_out), "xavier_uniform", seed, f"{prefix}.w2", dtype=dtype),
        b2=seeded_init((d_out,), "zeros", seed, f"{prefix}.b2", dtype=dtype),
    )


def encode_visual(descriptor, params: VisualParams) -> Tensor:
    """relu affine then affine, mapping a raw descriptor to d_v."""
    dtype = params.w1.data.dtype
    x = Tensor(np.asarray(descriptor, dtype=dtype))
    if x.data.ndim != 1 or x.data.shape[0] != params.w1.data.shape[0]:
        raise ShapeError(
            f"descriptor shape {x.data.shape} does not match input width {params.w1.data.shape[0]}")
    return linear(relu(linear(x, params.w1, params.b1)), params.w2, params.b2)
