"""Question language: tokenization, a closed template grammar, and vocabulary.

Questions are realized from a small semantic space (category / color / size /
grid region checks) through several surface templates per kind, which gives
the teacher corpus lexical variety. Parsing inverts realization and is the
only path by which the Oracle understands a question: token sequences that
match no template are malformed by definition.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import scene
from .dialogue import Dialogue

REGIONS = ("left", "right", "top", "bottom", "center")

KIND_CATEGORY = "category"
KIND_COLOR = "color"
KIND_SIZE = "size"
KIND_REGION = "region"
KINDS = (KIND_CATEGORY, KIND_COLOR, KIND_SIZE, KIND_REGION)

SLOT_VALUES: dict[str, tuple[str, ...]] = {
    KIND_CATEGORY: scene.CATEGORIES,
    KIND_COLOR: scene.COLORS,
    KIND_SIZE: scene.SIZES,
    KIND_REGION: REGIONS,
}

SOQ = "<soq>"
EOQ = "<eoq>"
YES_TOKEN = "<yes>"
NO_TOKEN = "<no>"
UNK = "<unk>"
SPECIAL_TOKENS = (SOQ, EOQ, YES_TOKEN, NO_TOKEN, UNK)

SLOT = "<slot>"


@dataclass(frozen=True)
class QuestionSemantics:
    """One binary predicate about the target object."""

    kind: str
    value: str

    def __post_init__(self):
        if self.kind not in SLOT_VALUES:
            raise ValueError(f"unknown question kind {self.kind!r}")
        if self.value not in SLOT_VALUES[self.kind]:
            raise ValueError(f"{self.value!r} is not a valid {self.kind} argument")


@dataclass(frozen=True)
class Template:
    template_id: int
    kind: str
    pattern: tuple[str, ...]  # exactly one SLOT, ends with "?"


def _make_templates(kind: str, patterns: list[tuple[str, ...]]) -> tuple[Template, ...]:
    return tuple(Template(i, kind, p) for i, p in enumerate(patterns))


TEMPLATES: dict[str, tuple[Template, ...]] = {
    KIND_CATEGORY: _make_templates(KIND_CATEGORY, [
        ("is", "it", "a", SLOT, "?"),
        ("is", "the", "object", "a", SLOT, "?"),
        ("could", "it", "be", "a", SLOT, "?"),
    ]),
    KIND_COLOR: _make_templates(KIND_COLOR, [
        ("is", "it", SLOT, "?"),
        ("is", "the", "object", SLOT, "?"),
        ("is", "it", "colored", SLOT, "?"),
    ]),
    KIND_SIZE: _make_templates(KIND_SIZE, [
        ("is", "it", SLOT, "?"),
        ("is", "the", "object", SLOT, "?"),
        ("is", "it", "a", SLOT, "one", "?"),
    ]),
    KIND_REGION: _make_templates(KIND_REGION, [
        ("is", "it", "on", "the", SLOT, "?"),
        ("is", "it", "in", "the", SLOT, "part", "?"),
        ("is", "it", "near", "the", SLOT, "?"),
    ]),
}

# longest pattern first so parsing prefers the most specific surface match
_PARSE_ORDER: list[Template] = sorted(
    (t for ts in TEMPLATES.values() for t in ts),
    key=lambda t: (-len(t.pattern), t.kind, t.template_id),
)


def all_semantics() -> list[QuestionSemantics]:
    """The full question space, in a fixed enumeration order."""
    return [QuestionSemantics(kind, v) for kind in KINDS for v in SLOT_VALUES[kind]]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel off leading/trailing punctuation.

    Stable under detokenize: tokenize(detokenize(tokenize(x))) == tokenize(x).
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        head: list[str] = []
        tail: list[str] = []
        while chunk and chunk[0] in string.punctuation:
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in string.punctuation:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def detokenize(tokens: list[str] | tuple[str, ...]) -> str:
    return " ".join(tokens)


def realize(semantics: QuestionSemantics, template_id: int) -> list[str]:
    """Fill the template slot with the semantics argument."""
    templates = TEMPLATES[semantics.kind]
    if not (0 <= template_id < len(templates)):
        raise ValueError(f"unknown template id {template_id} for kind {semantics.kind!r}")
    return [semantics.value if tok == SLOT else tok for tok in templates[template_id].pattern]


def parse_question(tokens: list[str] | tuple[str, ...]) -> QuestionSemantics | None:
    """Invert realize. Returns None when no template matches (malformed question)."""
    toks = tuple(tokens)
    for tpl in _PARSE_ORDER:
        if len(toks) != len(tpl.pattern):
            continue
        value = None
        for got, want in zip(toks, tpl.pattern):
            if want == SLOT:
                value = got
            elif got != want:
                break
        else:
            if value is not None and value in SLOT_VALUES[tpl.kind]:
                return QuestionSemantics(tpl.kind, value)
    return None


@dataclass
class Vocabulary:
    """Word list with dense ids; the five special tokens always occupy ids 0..4.

    `words` lists specials first, then learnable words ordered by descending
    corpus count (ties broken lexicographically). `counts` holds the corpus
    frequency of every non-special word that met the threshold.
    """

    words: list[str]
    counts: dict[str, int]
    min_count: int
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._ids = {w: i for i, w in enumerate(self.words)}
        for sp in SPECIAL_TOKENS:
            if sp not in self._ids:
                raise ValueError(f"special token {sp!r} missing from vocabulary")

    def __len__(self) -> int:
        return len(self.words)

    @property
    def n_words(self) -> int:
        """Total word count including specials (the model's softmax size)."""
        return len(self.words)

    @property
    def learnable_words(self) -> list[str]:
        return [w for w in self.words if w not in SPECIAL_TOKENS]

    @property
    def voc_size(self) -> int:
        """Number of learnable (non-special) words; the reported "Voc size"."""
        return len(self.learnable_words)

    @property
    def soq_id(self) -> int:
        return self._ids[SOQ]

    @property
    def eoq_id(self) -> int:
        return self._ids[EOQ]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    def token_id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def answer_id(self, answer: str) -> int:
        return self._ids[YES_TOKEN] if answer == "yes" else self._ids[NO_TOKEN]

    def word(self, idx: int) -> str:
        return self.words[idx]


def build_vocabulary(corpus: list[Dialogue], min_count: int = 3) -> Vocabulary:
    """Count question tokens across the corpus and keep those above threshold.

    Answers are encoded by the yes/no special tokens and do not contribute to
    the learnable word counts.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counter: Counter[str] = Counter()
    for d in corpus:
        for turn in d.turns:
            counter.update(turn.question)
    kept = {
        w: c
        for w, c in counter.items()
        if c >= min_count and w not in SPECIAL_TOKENS
    }
    ordered = sorted(kept, key=lambda w: (-kept[w], w))
    return Vocabulary(words=list(SPECIAL_TOKENS) + ordered, counts=kept, min_count=min_count)


def write_vocabulary(path: str | Path, vocab: Vocabulary) -> None:
    """JSON-lines of {"word","count","id"}; specials first by construction."""
    with open(path, "w", encoding="utf-8") as f:
        for i, w in enumerate(vocab.words):
            f.write(json.dumps({"word": w, "count": vocab.counts.get(w, 0), "id": i}) + "\n")


def read_vocabulary(path: str | Path, min_count: int = 3) -> Vocabulary:
    words: list[str] = []
    counts: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                word, count, idx = rec["word"], rec["count"], rec["id"]
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed vocabulary record: {exc}") from exc
            if idx != len(words):
                raise ValueError(f"{path}:{lineno}: non-dense id {idx}")
            words.append(word)
            if word not in SPECIAL_TOKENS:
                counts[word] = count
    return Vocabulary(words=words, counts=counts, min_count=min_count)
