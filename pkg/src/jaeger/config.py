"""Training configuration, shared by the model assembly and the harness."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .errors import ContractError, SchemaError

VARIANTS = ("dual", "bidir_only", "causal_only")


@dataclass
class TrainConfig:
    """Everything a run needs: optimizer, widths, data handling.

    The defaults mirror the desk-scale setup; the learning rate default
    is deliberately tiny and overfit-style runs override it.
    """

    learning_rate: float = 1e-6
    epochs: int = 5
    batch_size: int = 8
    max_steps: int | None = None
    seed: int = 42
    threshold: float = 0.5
    variant: str = "dual"
    min_count: int = 1
    max_question_len: int = 24
    max_content_len: int = 16
    d_bidir: int = 32
    d_causal: int = 48
    d_content: int = 32
    d_visual: int = 16
    d_vis_in: int = 8
    d_reduced: int = 32
    scorer_hidden: int = 32
    n_heads: int = 2
    n_layers: int = 2
    ff_multiplier: int = 2
    split_ratios: tuple[float, ...] = (0.8, 0.1, 0.1)
    data_path: str | None = None

    def __post_init__(self):
        self.split_ratios = tuple(self.split_ratios)
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be at least 1, got {self.epochs}")
        if not 0 < self.threshold < 1:
            raise ContractError(f"threshold must lie strictly in (0, 1), got {self.threshold}")
        if self.variant not in VARIANTS:
            raise ContractError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("batch_size", "min_count", "max_question_len", "max_content_len",
                     "d_bidir", "d_causal", "d_content", "d_visual", "d_vis_in",
                     "d_reduced", "scorer_hidden", "n_heads", "n_layers", "ff_multiplier"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ContractError(f"max_steps must be at least 1, got {self.max_steps}")

    @property
    def question_width(self) -> int:
        """Pre-reduction question feature width for the configured variant."""
        if self.variant == "dual":
            return self.d_bidir + self.d_causal
        if self.variant == "bidir_only":
            return self.d_bidir
        return self.d_causal

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"unknown config field {sorted(unknown)[0]!r}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise SchemaError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
