import numpy as np
import pytest

from conftest import make_dialogue
from guessmix import lang


class TestTokenize:
    def test_basic_question(self):
        assert lang.tokenize("Is it a cat?") == ["is", "it", "a", "cat", "?"]

    def test_empty(self):
        assert lang.tokenize("") == []

    def test_lowercase_and_spaced_punctuation(self):
        assert lang.tokenize("is it the RED car ?") == ["is", "it", "the", "red", "car", "?"]

    def test_leading_and_trailing_punctuation(self):
        assert lang.tokenize('"red," he said.') == ['"', "red", ",", '"', "he", "said", "."]

    def test_stability(self):
        rng = np.random.default_rng(0)
        pieces = ["Is", "it", "RED?", "the,", '"car"', "...", "a", "cat!"]
        for _ in range(200):
            text = " ".join(rng.choice(pieces, size=rng.integers(0, 8)))
            once = lang.tokenize(text)
            assert lang.tokenize(lang.detokenize(once)) == once


class TestGrammar:
    def test_realize_color(self):
        sem = lang.QuestionSemantics(lang.KIND_COLOR, "red")
        assert lang.realize(sem, 0) == ["is", "it", "red", "?"]

    def test_realize_category(self):
        sem = lang.QuestionSemantics(lang.KIND_CATEGORY, "cat")
        assert lang.realize(sem, 1) == ["is", "the", "object", "a", "cat", "?"]

    def test_parse_color(self):
        assert lang.parse_question(["is", "it", "red", "?"]) == \
            lang.QuestionSemantics(lang.KIND_COLOR, "red")

    def test_parse_category(self):
        assert lang.parse_question(["is", "it", "a", "cat", "?"]) == \
            lang.QuestionSemantics(lang.KIND_CATEGORY, "cat")

    def test_parse_garbage(self):
        assert lang.parse_question(["cat", "cat", "cat", "?"]) is None
        assert lang.parse_question([]) is None
        assert lang.parse_question(["is", "it", "blorp", "?"]) is None

    def test_round_trip_full_cross_product(self):
        for sem in lang.all_semantics():
            for tpl in lang.TEMPLATES[sem.kind]:
                tokens = lang.realize(sem, tpl.template_id)
                assert lang.parse_question(tokens) == sem, (sem, tpl)

    def test_every_kind_has_enough_templates(self):
        for kind, templates in lang.TEMPLATES.items():
            assert len(templates) >= 3
            for tpl in templates:
                assert tpl.pattern[-1] == "?"
                assert sum(1 for t in tpl.pattern if t == lang.SLOT) == 1

    def test_unknown_template_id(self):
        sem = lang.QuestionSemantics(lang.KIND_SIZE, "small")
        with pytest.raises(ValueError):
            lang.realize(sem, 99)

    def test_invalid_semantics_rejected(self):
        with pytest.raises(ValueError):
            lang.QuestionSemantics(lang.KIND_COLOR, "cat")
        with pytest.raises(ValueError):
            lang.QuestionSemantics("shape", "round")


class TestVocabulary:
    def test_threshold(self):
        corpus = [make_dialogue(["cat cat", "cat dog"], game_id=0),
                  make_dialogue(["dog bird"], game_id=1)]
        vocab = lang.build_vocabulary(corpus, min_count=3)
        assert "cat" in vocab.words
        assert "dog" not in vocab.words
        assert "bird" not in vocab.words

    def test_min_count_one_keeps_everything(self):
        corpus = [make_dialogue(["ball tree phone", "cup"])]
        vocab = lang.build_vocabulary(corpus, min_count=1)
        assert set(vocab.learnable_words) == {"ball", "tree", "phone", "cup"}

    def test_empty_corpus_specials_only(self):
        vocab = lang.build_vocabulary([], min_count=3)
        assert vocab.words == list(lang.SPECIAL_TOKENS)
        assert vocab.voc_size == 0

    def test_shuffle_invariance(self, small_teacher_corpus):
        vocab = lang.build_vocabulary(small_teacher_corpus, min_count=3)
        shuffled = list(small_teacher_corpus)
        np.random.default_rng(1).shuffle(shuffled)
        assert lang.build_vocabulary(shuffled, min_count=3) == vocab

    def test_counts_meet_threshold_and_ordering(self, small_teacher_corpus):
        vocab = lang.build_vocabulary(small_teacher_corpus, min_count=3)
        counts = [vocab.counts[w] for w in vocab.learnable_words]
        assert all(c >= 3 for c in counts)
        assert counts == sorted(counts, reverse=True)

    def test_voc_size_matches_brute_force(self, small_teacher_corpus):
        vocab = lang.build_vocabulary(small_teacher_corpus, min_count=3)
        # independent recount, no Counter
        freqs: dict[str, int] = {}
        for d in small_teacher_corpus:
            for t in d.turns:
                for tok in t.question:
                    freqs[tok] = freqs.get(tok, 0) + 1
        expected = sorted(w for w, c in freqs.items() if c >= 3)
        assert sorted(vocab.learnable_words) == expected

    def test_ids_dense_and_specials_first(self, small_teacher_corpus):
        vocab = lang.build_vocabulary(small_teacher_corpus, min_count=3)
        assert [vocab.token_id(w) for w in vocab.words] == list(range(len(vocab)))
        assert vocab.words[:5] == list(lang.SPECIAL_TOKENS)
        assert vocab.token_id("never-seen-word") == vocab.unk_id

    def test_answers_do_not_count(self):
        corpus = [make_dialogue(["cat cat cat"], answers=["yes"])]
        vocab = lang.build_vocabulary(corpus, min_count=1)
        assert vocab.learnable_words == ["cat"]

    def test_jsonl_round_trip(self, small_teacher_corpus, tmp_path):
        vocab = lang.build_vocabulary(small_teacher_corpus, min_count=3)
        path = tmp_path / "vocab.jsonl"
        lang.write_vocabulary(path, vocab)
        assert lang.read_vocabulary(path, min_count=3) == vocab

    def test_specials_are_mandatory(self):
        with pytest.raises(ValueError):
            lang.Vocabulary(words=["just", "words"], counts={}, min_count=1)

    def test_bad_min_count_rejected(self):
        with pytest.raises(ValueError):
            lang.build_vocabulary([], min_count=0)
