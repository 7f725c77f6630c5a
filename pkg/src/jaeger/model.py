"""Assembly of the full pipeline: encoders, fusion and the forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig, VARIANTS
from .encoders import (ContentParams, EncoderConfig, EncoderParams, VisualParams,
                       encode_content, encode_question_bidir, encode_question_causal,
                       encode_visual, init_content, init_encoder, init_visual)
from .errors import CompatibilityError, ContractError
from .fusion import (FeatureBundle, FusionParams, concat_question_features, init_fusion,
                     reduce_dim, score_candidates)
from .numerics import Tensor, stack_rows
from .text import Vocabulary, encode_text


@dataclass
class EncodedSample:
    """One question of one document, fully converted to model inputs."""

    qid: str
    doc_id: str
    question_ids: np.ndarray
    question_mask: np.ndarray
    content_ids: list[np.ndarray]
    content_masks: list[np.ndarray]
    bboxes: list[np.ndarray]
    visuals: list[np.ndarray]
    candidate_ids: list[int]
    targets: np.ndarray
    gold: frozenset[int] = field(default_factory=frozenset)


def encode_sample(doc, question, vocab: Vocabulary, cfg: TrainConfig) -> EncodedSample:
    """Tokenize a question and every candidate element of its document.

    Candidates are the document's elements in stored order; targets mark
    gold answer membership per candidate.
    """
    q_ids, q_mask = encode_text(question.question, vocab, cfg.max_question_len)
    content_ids, content_masks, bboxes, visuals = [], [], [], []
    for el in doc.elements:
        ids, mask = encode_text(el.text, vocab, cfg.max_content_len)
        content_ids.append(ids)
        content_masks.append(mask)
        bboxes.append(np.asarray(el.bbox, dtype=np.float64))
        visuals.append(np.asarray(el.vis, dtype=np.float64))
    gold = frozenset(question.answers)
    targets = np.asarray([1.0 if el.id in gold else 0.0 for el in doc.elements],
                         dtype=np.float64)
    return EncodedSample(
        qid=question.qid, doc_id=doc.doc_id,
        question_ids=q_ids, question_mask=q_mask,
        content_ids=content_ids, content_masks=content_masks,
        bboxes=bboxes, visuals=visuals,
        candidate_ids=[el.id for el in doc.elements],
        targets=targets, gold=gold,
    )


class JaegerModel:
    """All trainable state for one pipeline variant.

    Parameter names are stable across runs and variants, so checkpoints
    and ablation comparisons can address weights by name.
    """

    def __init__(self, cfg: TrainConfig, vocab: Vocabulary, dtype=np.float32):
        if cfg.variant not in VARIANTS:
            raise ContractError(f"unknown variant {cfg.variant!r}")
        self.cfg = cfg
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        seed = cfg.seed
        v = len(vocab)

        self.bidir_cfg = EncoderConfig(cfg.d_bidir, cfg.n_heads, cfg.n_layers,
                                       cfg.ff_multiplier * cfg.d_bidir,
                                       cfg.max_question_len, causal=False)
        self.causal_cfg = EncoderConfig(cfg.d_causal, cfg.n_heads, cfg.n_layers,
                                        cfg.ff_multiplier * cfg.d_causal,
                                        cfg.max_question_len, causal=True)
        self.content_cfg = EncoderConfig(cfg.d_content, cfg.n_heads, cfg.n_layers,
                                         cfg.ff_multiplier * cfg.d_content,
                                         cfg.max_content_len, causal=False)

        self.bidir: EncoderParams | None = None
        self.causal: EncoderParams | None = None
        if cfg.variant in ("dual", "bidir_only"):
            self.bidir = init_encoder(self.bidir_cfg, v, seed, "q_bidir", dtype=dtype)
        if cfg.variant in ("dual", "causal_only"):
            self.causal = init_encoder(self.causal_cfg, v, seed, "q_causal", dtype=dtype)
        self.content = init_content(self.content_cfg, v, seed, "content", dtype=dtype)
        self.visual = init_visual(cfg.d_vis_in, cfg.scorer_hidden, cfg.d_visual,
                                  seed, "visual", dtype=dtype)
        self.fusion = init_fusion(cfg.question_width, cfg.d_reduced, cfg.d_content,
                                  cfg.d_visual, cfg.scorer_hidden, seed, dtype=dtype)

        self._named: dict[str, Tensor] = {}
        if self.bidir is not None:
            self._named.update(self.bidir.named("q_bidir"))
        if self.causal is not None:
            self._named.update(self.causal.named("q_causal"))
        self._named.update(self.content.named("content"))
        self._named.update(self.visual.named("visual"))
        self._named.update(self.fusion.named("fusion"))

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._named)

    def parameters(self) -> list[Tensor]:
        return list(self._named.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Name to float32 array snapshot, in registry order."""
        return {name: np.array(p.data, dtype=np.float32, order="C")
                for name, p in self._named.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Install a named snapshot; names and shapes must match exactly."""
        missing = sorted(set(self._named) - set(arrays))
        if missing:
            raise CompatibilityError(f"checkpoint is missing parameter {missing[0]!r}")
        extra = sorted(set(arrays) - set(self._named))
        if extra:
            raise CompatibilityError(f"checkpoint has unexpected parameter {extra[0]!r}")
        for name, p in self._named.items():
            arr = np.asarray(arrays[name])
            if arr.shape != p.data.shape:
                raise CompatibilityError(
                    f"parameter {name!r} has shape {arr.shape}, model expects {p.data.shape}")
            p.data = np.array(arr, dtype=self.dtype, order="C")

    def question_features(self, sample: EncodedSample) -> tuple[Tensor | None, Tensor | None, Tensor]:
        q1 = q2 = None
        if self.bidir is not None:
            q1 = encode_question_bidir(sample.question_ids, sample.question_mask,
                                       self.bidir, self.bidir_cfg)
        if self.causal is not None:
            q2 = encode_question_causal(sample.question_ids, sample.question_mask,
                                        self.causal, self.causal_cfg)
        if q1 is not None and q2 is not None:
            return q1, q2, concat_question_features(q1, q2)
        return q1, q2, q1 if q1 is not None else q2

    def forward(self, sample: EncodedSample) -> Tensor:
        """Logits over the sample's candidates, in candidate order."""
        return self.forward_with_features(sample)[0]

    def forward_with_features(self, sample: EncodedSample) -> tuple[Tensor, FeatureBundle]:
        q1, q2, qfeat = self.question_features(sample)
        qreduced = reduce_dim(qfeat, self.fusion)
        content_rows = [
            encode_content(ids, mask, bbox, self.content, self.content_cfg)
            for ids, mask, bbox in zip(sample.content_ids, sample.content_masks,
                                       sample.bboxes)
        ]
        visual_rows = [encode_visual(vis, self.visual) for vis in sample.visuals]
        content_feats = stack_rows(content_rows, row_shape=(self.cfg.d_content,),
                                   dtype=self.dtype)
        visual_feats = stack_rows(visual_rows, row_shape=(self.cfg.d_visual,),
                                  dtype=self.dtype)
        logits = score_candidates(qreduced, content_feats, visual_feats, self.fusion)
        bundle = FeatureBundle(qfeat1=q1, qfeat2=q2, qfeat=qfeat, qreduced=qreduced,
                               content_feats=content_feats, visual_feats=visual_feats)
        return logits, bundle


def jaeger_forward(model: JaegerModel, sample: EncodedSample) -> Tensor:
    """Full pipeline: encode, concatenate, reduce, score each candidate."""
    return model.forward(sample)
