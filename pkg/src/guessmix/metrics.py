"""Evaluation metrics for played games and dialogue corpora.

Five numbers summarize a corpus of generated games:

  ACC  task accuracy, percent of games where the guess hits the target
  GRQ  percent of games whose dialogue repeats a question verbatim
  MO   mutual overlap, mean BLEU-4 of each question against the other
       questions of the same dialogue
  NQ   mean count per dialogue of questions never seen in training
  GR   percent of the learnable vocabulary used across all questions

BLEU-4 here is the plain no-smoothing variant: modified n-gram precisions
clipped against the best reference count, a uniform geometric mean over the
orders up to min(4, len(candidate)), zero if any used precision is zero,
and brevity penalty min(1, exp(1 - r/c)) with r the reference length
closest to c (ties broken toward the shorter reference).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .dialogue import Dialogue
from .lang import Vocabulary

Tokens = tuple[str, ...]


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate, references) -> float:
    """BLEU with n-gram orders capped at the candidate length, no smoothing."""
    candidate = tuple(candidate)
    references = [tuple(r) for r in references]
    if not candidate:
        raise ValueError("bleu4 candidate must be non-empty")
    if not references:
        raise ValueError("bleu4 needs at least one reference")
    max_order = min(4, len(candidate))
    log_precisions = []
    for n in range(1, max_order + 1):
        counts = ngram_counts(candidate, n)
        max_ref: Counter = Counter()
        for ref in references:
            for gram, c in ngram_counts(ref, n).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        clipped = sum(min(c, max_ref[gram]) for gram, c in counts.items())
        total = sum(counts.values())
        if clipped == 0:
            return 0.0
        log_precisions.append(math.log(clipped / total))
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda rl: (abs(rl - c), rl))
    bp = min(1.0, math.exp(1.0 - r / c))
    return bp * math.exp(sum(log_precisions) / max_order)


def mutual_overlap_dialogue(dialogue: Dialogue) -> float:
    """Mean BLEU-4 of each question against the dialogue's other questions.

    Dialogues with fewer than two questions have no comparison partners and
    score 0 by convention.
    """
    questions = dialogue.questions()
    if len(questions) < 2:
        return 0.0
    scores = []
    for i, q in enumerate(questions):
        refs = questions[:i] + questions[i + 1:]
        scores.append(bleu4(q, refs))
    return sum(scores) / len(scores)


def corpus_mo(corpus: list[Dialogue]) -> float:
    """Unweighted mean of the per-dialogue mutual overlap."""
    if not corpus:
        raise ValueError("empty corpus")
    return sum(mutual_overlap_dialogue(d) for d in corpus) / len(corpus)


def grq(corpus: list[Dialogue]) -> float:
    """Percent of games with at least one verbatim repeated question."""
    if not corpus:
        raise ValueError("empty corpus")
    repeated = 0
    for d in corpus:
        questions = d.questions()
        if len(set(questions)) < len(questions):
            repeated += 1
    return 100.0 * repeated / len(corpus)


def novel_questions(corpus: list[Dialogue], training_questions: set[Tokens]) -> float:
    """Mean per-dialogue count of question occurrences unseen in training.

    A question repeated inside one dialogue counts once per occurrence.
    """
    if not corpus:
        raise ValueError("empty corpus")
    total = 0
    for d in corpus:
        total += sum(1 for q in d.questions() if q not in training_questions)
    return total / len(corpus)


def global_recall(corpus: list[Dialogue], vocab: Vocabulary) -> float:
    """Percent of learnable vocabulary words used in the corpus questions."""
    learnable = set(vocab.learnable_words)
    if not learnable:
        raise ValueError("vocabulary has no learnable words")
    used = set()
    for d in corpus:
        for q in d.questions():
            used.update(q)
    return 100.0 * len(used & learnable) / len(learnable)


def accuracy(games) -> float:
    """Percent of games whose guess hit the target."""
    if not games:
        raise ValueError("no games to score")
    return 100.0 * sum(1 for g in games if g.success) / len(games)


@dataclass
class ReportRow:
    pct_human: float
    pct_generated: float
    length_mode: str
    acc: float
    grq: float
    mo: float
    nq: float
    gr: float


def evaluate(
    questioner,
    test_scenes,
    oracle_cfg,
    training_questions: set[Tokens],
    turns: int = 5,
    seed: int = 0,
    pct_human: float = 100.0,
    length_mode: str = "-",
) -> ReportRow:
    """Play every test scene for `turns` questions, then score all metrics.

    `training_questions` and the questioner's vocabulary must come from the
    corpus the model was trained on; NQ and GR are defined relative to them.
    """
    from . import selfplay  # deferred: selfplay sits on top of the model stack

    games = selfplay.play_games(questioner, test_scenes, oracle_cfg, turns, seed)
    played = [g.dialogue for g in games]
    return ReportRow(
        pct_human=pct_human,
        pct_generated=100.0 - pct_human,
        length_mode=length_mode,
        acc=accuracy(games),
        grq=grq(played),
        mo=corpus_mo(played),
        nq=novel_questions(played, training_questions),
        gr=global_recall(played, questioner.vocab),
    )


REPORT_HEADER = "pct_human,pct_generated,length_mode,acc,grq,mo,nq,gr"


def format_report_row(row: ReportRow) -> str:
    return (
        f"{row.pct_human:g},{row.pct_generated:g},{row.length_mode},"
        f"{row.acc:.2f},{row.grq:.2f},{row.mo:.4f},{row.nq:.2f},{row.gr:.2f}"
    )


def write_report_csv(path: str | Path, rows: list[ReportRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(REPORT_HEADER + "\n")
        for row in rows:
            f.write(format_report_row(row) + "\n")


def report_markdown(rows: list[ReportRow], title: str = "Test set, 5-question protocol") -> str:
    """Aligned table with direction markers: higher ACC/NQ/GR and lower
    GRQ/MO are better."""
    header = ["% human", "% generated", "length",
              "ACC ↑", "GRQ ↓", "MO ↓", "NQ ↑", "GR ↑"]
    lines = [f"## {title}", ""]
    cells = [header, ["---"] * len(header)]
    for r in rows:
        cells.append([
            f"{r.pct_human:g}", f"{r.pct_generated:g}", r.length_mode,
            f"{r.acc:.1f}", f"{r.grq:.1f}", f"{r.mo:.2f}", f"{r.nq:.2f}", f"{r.gr:.1f}",
        ])
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for row in cells:
        lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
    lines.append("")
    lines.append("↑ higher is better, ↓ lower is better.")
    return "\n".join(lines) + "\n"
