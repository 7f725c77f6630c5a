"""Feature fusion: concatenation, dimensionality reduction and scoring.

The two question features are concatenated, reduced to a narrower width
by a learned affine map, and paired with each candidate element's
content and visual features. Every candidate is scored independently by
the same small perceptron, so logits never mix information across
candidates and the answer set is read off per candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import (Tensor, add, concat_last, linear, matmul, relu, seeded_init,
                       select_row, stack_rows, _sigmoid)


@dataclass
class FeatureBundle:
    """Every intermediate feature of one forward pass.

    qfeat1/qfeat2 are None for single-encoder variants; qfeat is then
    the surviving feature itself rather than a concatenation.
    """

    qfeat1: Tensor | None
    qfeat2: Tensor | None
    qfeat: Tensor
    qreduced: Tensor
    content_feats: Tensor
    visual_feats: Tensor

    def __post_init__(self):
        n = self.content_feats.data.shape[0]
        if self.visual_feats.data.shape[0] != n:
            raise ShapeError(
                f"{n} content rows but {self.visual_feats.data.shape[0]} visual rows")
        if self.qfeat1 is not None and self.qfeat2 is not None:
            d1 = self.qfeat1.data.shape[0]
            d2 = self.qfeat2.data.shape[0]
            if self.qfeat.data.shape[0] != d1 + d2:
                raise ShapeError(
                    f"concatenated width {self.qfeat.data.shape[0]} != {d1} + {d2}")


@dataclass
class FusionParams:
    """Reduction affine plus the candidate scorer perceptron."""

    reduce_w: Tensor
    reduce_b: Tensor
    score_w1: Tensor
    score_b1: Tensor
    score_w2: Tensor
    score_b2: Tensor

    def named(self, prefix: str):
        for name in ("reduce_w", "reduce_b", "score_w1", "score_b1", "score_w2", "score_b2"):
            yield f"{prefix}.{name}", getattr(self, name)


def init_fusion(q_width: int, d_reduced: int, d_content: int, d_visual: int,
                hidden: int, seed: int, prefix: str = "fusion",
                dtype=np.float32) -> FusionParams:
    f_width = d_reduced + d_content + d_visual

    def xav(name, shape):
        return seeded_init(shape, "xavier_uniform", seed, f"{prefix}.{name}", dtype=dtype)

    def zeros(name, shape):
        return seeded_init(shape, "zeros", seed, f"{prefix}.{name}", dtype=dtype)

    return FusionParams(
        reduce_w=xav("reduce_w", (q_width, d_reduced)),
        reduce_b=zeros("reduce_b", (d_reduced,)),
        score_w1=xav("score_w1", (f_width, hidden)),
        score_b1=zeros("score_b1", (hidden,)),
        score_w2=xav("score_w2", (hidden,)),
        score_b2=zeros("score_b2", ()),
    )


def concat_question_features(qfeat1: Tensor, qfeat2: Tensor) -> Tensor:
    """Plain concatenation, bidirectional feature first."""
    if qfeat1.data.ndim != 1 or qfeat2.data.ndim != 1:
        raise ShapeError(
            f"question features must be vectors, got {qfeat1.data.shape} and {qfeat2.data.shape}")
    return concat_last(qfeat1, qfeat2)


def reduce_dim(qfeat: Tensor, params: FusionParams) -> Tensor:
    """Learned affine map down to the reduced question width."""
    if qfeat.data.shape != (params.reduce_w.data.shape[0],):
        raise ShapeError(
            f"question width {qfeat.data.shape} does not match reduction "
            f"input {params.reduce_w.data.shape[0]}")
    return linear(qfeat, params.reduce_w, params.reduce_b)


def score_candidates(qreduced: Tensor, content_feats: Tensor, visual_feats: Tensor,
                     params: FusionParams) -> Tensor:
    """One logit per candidate; no cross-candidate terms.

    Each row is scored by its own pass through the perceptron, so a
    candidate's logit is bit-identical no matter which other candidates
    are present or in what order.
    """
    if content_feats.data.ndim != 2 or visual_feats.data.ndim != 2:
        raise ShapeError("candidate features must be matrices")
    n = content_feats.data.shape[0]
    if visual_feats.data.shape[0] != n:
        raise ShapeError(f"{n} content rows but {visual_feats.data.shape[0]} visual rows")
    logits = []
    for i in range(n):
        f = concat_last(concat_last(qreduced, select_row(content_feats, i)),
                        select_row(visual_feats, i))
        h = relu(linear(f, params.score_w1, params.score_b1))
        logits.append(add(matmul(h, params.score_w2), params.score_b2))
    return stack_rows(logits, row_shape=(), dtype=qreduced.data.dtype)


def predict_answer_set(logits, threshold: float = 0.5) -> set[int]:
    """Candidate indices whose sigmoid score reaches the threshold.

    Scores exactly at the threshold are included.
    """
    if not 0 < threshold < 1:
        raise ContractError(f"threshold must lie strictly in (0, 1), got {threshold}")
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if z.ndim != 1:
        raise ShapeError(f"logits must be a vector, got shape {z.shape}")
    probs = _sigmoid(z.astype(np.float64))
    return {int(i) for i in np.flatnonzero(probs >= threshold)}


def per_candidate_mult_count(q_width: int, d_content: int, d_visual: int,
                             hidden: int) -> int:
    """Multiplications the scorer spends on one candidate."""
    return (q_width + d_content + d_visual) * hidden + hidden
