"""Scripted Questioner producing the human-proxy corpus.

The teacher keeps the set of objects still consistent with every answer so
far and greedily asks the unasked question that splits that set most evenly,
with a random template for surface variety. It never repeats a question and
stops as soon as a single candidate remains, so its dialogues look like the
clean, variable-length games a careful human would play.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import lang, oracle
from .dialogue import SOURCE_HUMAN, YES, Dialogue, Turn
from .scene import Scene

log = logging.getLogger(__name__)

# kept games must be successful and strictly shorter than this many turns
MAX_HUMAN_TURNS = 20

DEFAULT_MAX_TURNS = 8


class ExhaustedQuestions(Exception):
    """No unasked question can split the current candidate set."""


@dataclass
class TeacherState:
    candidates: list[int]
    asked: set[lang.QuestionSemantics] = field(default_factory=set)


def next_teacher_question(
    scene: Scene, state: TeacherState, rng: np.random.Generator
) -> tuple[lang.QuestionSemantics, int]:
    """Pick the most balanced unasked split of the candidate set.

    Balance is |#yes - #no| over candidates; ties are broken uniformly at
    random. Questions whose answer is already determined (all candidates on
    one side) carry no information and are skipped; ExhaustedQuestions means
    no informative unasked question remains.
    """
    if len(state.candidates) < 2:
        raise ValueError("teacher needs at least two candidates to ask about")
    objs = [scene.objects[i] for i in state.candidates]
    best_score = None
    best: list[lang.QuestionSemantics] = []
    for sem in lang.all_semantics():
        if sem in state.asked:
            continue
        n_yes = sum(1 for o in objs if oracle.eval_predicate(o, sem))
        if n_yes == 0 or n_yes == len(objs):
            continue  # zero-information question
        score = abs(2 * n_yes - len(objs))
        if best_score is None or score < best_score:
            best_score, best = score, [sem]
        elif score == best_score:
            best.append(sem)
    if not best:
        raise ExhaustedQuestions
    sem = best[int(rng.integers(len(best)))]
    template_id = int(rng.integers(len(lang.TEMPLATES[sem.kind])))
    return sem, template_id


def play_teacher_game(
    scene: Scene,
    oracle_cfg: oracle.OracleConfig,
    max_turns: int,
    rng: np.random.Generator,
) -> Dialogue:
    """Play one full game; the dialogue is returned unfiltered."""
    state = TeacherState(candidates=list(range(len(scene.objects))))
    turns: list[Turn] = []
    while len(state.candidates) > 1 and len(turns) < max_turns:
        try:
            sem, template_id = next_teacher_question(scene, state, rng)
        except ExhaustedQuestions:
            break
        question = tuple(lang.realize(sem, template_id))
        ans = oracle.answer(scene, question, oracle_cfg, rng)
        turns.append(Turn(question=question, answer=ans))
        state.asked.add(sem)
        keep = [
            i for i in state.candidates
            if oracle.eval_predicate(scene.objects[i], sem) == (ans == YES)
        ]
        # a noisy answer can contradict every candidate; ignore it rather
        # than ending up with nothing to guess
        if keep:
            state.candidates = keep
    if len(state.candidates) == 1:
        guess = state.candidates[0]
    else:
        guess = state.candidates[int(rng.integers(len(state.candidates)))]
    return Dialogue(
        game_id=scene.scene_id,
        scene_id=scene.scene_id,
        source=SOURCE_HUMAN,
        turns=tuple(turns),
        guess=guess,
        success=guess == scene.target_index,
    )


def keep_human_game(d: Dialogue) -> bool:
    """The human-data filter: successful games shorter than MAX_HUMAN_TURNS."""
    return d.success and len(d.turns) < MAX_HUMAN_TURNS


def collect_teacher_corpus(
    scenes: list[Scene],
    oracle_cfg: oracle.OracleConfig | None = None,
    max_turns: int = DEFAULT_MAX_TURNS,
    seed: int = 0,
) -> list[Dialogue]:
    """Play every scene and keep the games passing keep_human_game.

    Each game runs on its own random stream derived from (seed, scene_id),
    so the corpus is a pure function of its arguments.
    """
    if max_turns < 1:
        raise ValueError(f"max_turns must be >= 1, got {max_turns}")
    oracle_cfg = oracle_cfg or oracle.OracleConfig(0.0)
    kept: list[Dialogue] = []
    dropped = 0
    for sc in scenes:
        d = play_teacher_game(sc, oracle_cfg, max_turns, np.random.default_rng([seed, sc.scene_id]))
        if keep_human_game(d):
            kept.append(d)
        else:
            dropped += 1
    if kept:
        mean_turns = sum(len(d.turns) for d in kept) / len(kept)
    else:
        mean_turns = 0.0
    log.info(
        "teacher corpus: kept %d of %d games (dropped %d), mean turns %.2f",
        len(kept), len(scenes), dropped, mean_turns,
    )
    return kept
