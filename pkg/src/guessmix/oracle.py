"""Rule-based answerer with configurable answer noise.

The Oracle parses each question through the closed grammar and answers
truthfully about the secret target, flipping the answer with probability
`noise_rate`. Questions that fail to parse are answered "no" and are never
flipped, so self-play cannot deadlock on malformed output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lang
from .dialogue import NO, YES
from .scene import GRID_SIZE, Scene, SceneObject


@dataclass(frozen=True)
class OracleConfig:
    noise_rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.noise_rate <= 1.0):
            raise ValueError(f"noise_rate must be in [0, 1], got {self.noise_rate}")


# region thresholds on the 5x5 grid: a band of two cells on each side,
# single center cell
_MID = GRID_SIZE // 2


def eval_predicate(obj: SceneObject, semantics: lang.QuestionSemantics) -> bool:
    if semantics.kind == lang.KIND_CATEGORY:
        return obj.category == semantics.value
    if semantics.kind == lang.KIND_COLOR:
        return obj.color == semantics.value
    if semantics.kind == lang.KIND_SIZE:
        return obj.size == semantics.value
    region = semantics.value
    if region == "left":
        return obj.cell_x < _MID
    if region == "right":
        return obj.cell_x > _MID
    if region == "top":
        return obj.cell_y < _MID
    if region == "bottom":
        return obj.cell_y > _MID
    return obj.cell_x == _MID and obj.cell_y == _MID  # center


def truthful_answer(scene: Scene, semantics: lang.QuestionSemantics) -> str:
    return YES if eval_predicate(scene.target, semantics) else NO


def answer(
    scene: Scene,
    question_tokens: list[str] | tuple[str, ...],
    cfg: OracleConfig,
    rng: np.random.Generator,
) -> str:
    semantics = lang.parse_question(question_tokens)
    if semantics is None:
        return NO
    truth = truthful_answer(scene, semantics)
    if cfg.noise_rate > 0.0 and rng.random() < cfg.noise_rate:
        return NO if truth == YES else YES
    return truth
