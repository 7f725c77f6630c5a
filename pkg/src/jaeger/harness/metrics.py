"""Exact matching accuracy over predicted answer sets."""

from __future__ import annotations

from typing import Iterable, Sequence

from ..errors import ContractError


def ema(predictions: Sequence[Iterable[int]], golds: Sequence[Iterable[int]]) -> float:
    """Fraction of predictions that equal their gold set exactly.

    Partial overlap scores zero; two empty sets match.
    """
    if len(predictions) != len(golds):
        raise ContractError(
            f"{len(predictions)} predictions but {len(golds)} gold sets")
    if not predictions:
        raise ContractError("ema needs at least one prediction")
    hits = sum(1 for p, g in zip(predictions, golds) if set(p) == set(g))
    return hits / len(predictions)
