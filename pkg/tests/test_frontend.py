"""Lexicon G2P: exact-word lookup, per-character fallback, failure modes."""

import pytest

from paraspeech.errors import FrontendError
from paraspeech.frontend import Lexicon


@pytest.fixture(scope="module")
def toy_lexicon(tmp_path_factory):
    from paraspeech.toydata import write_lexicon

    path = tmp_path_factory.mktemp("lex") / "lexicon.txt"
    write_lexicon(path)
    return Lexicon.load(path)


class TestLookup:
    def test_exact_word(self, toy_lexicon):
        assert toy_lexicon.phonemize_word("sato") == ["s", "aa", "t", "oo"]

    def test_case_fallback(self, toy_lexicon):
        assert toy_lexicon.phonemize_word("Sato") == ["s", "aa", "t", "oo"]

    def test_per_character_fallback(self, toy_lexicon):
        # "tak" is not a lexicon word; each letter is
        assert toy_lexicon.phonemize_word("tak") == ["t", "aa", "k"]

    def test_unknown_character_raises(self, toy_lexicon):
        with pytest.raises(FrontendError, match="zap"):
            toy_lexicon.phonemize_word("zap")


class TestSentences:
    def test_words_joined_without_padding(self, toy_lexicon):
        assert toy_lexicon.phonemize_words("sato kife") == [
            "s", "aa", "t", "oo", "k", "ii", "f", "ee",
        ]

    def test_sentence_wrapped_in_silence(self, toy_lexicon):
        assert toy_lexicon.phonemize_sentence("sato") == ["pau", "s", "aa", "t", "oo", "pau"]

    def test_empty_text_gives_no_phonemes(self, toy_lexicon):
        assert toy_lexicon.phonemize_sentence("") == []
        assert toy_lexicon.phonemize_words("   ") == []

    def test_punctuation_stripped(self, toy_lexicon):
        assert toy_lexicon.phonemize_words("sato, kife!") == toy_lexicon.phonemize_words(
            "sato kife"
        )


class TestParsing:
    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("# header\n\nfoo f oo\n")
        assert Lexicon.load(path).phonemize_word("foo") == ["f", "oo"]

    def test_entry_without_pronunciation_rejected(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("foo\n")
        with pytest.raises(FrontendError, match="foo"):
            Lexicon.load(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FrontendError):
            Lexicon.load(tmp_path / "absent.txt")

    def test_custom_silence_symbol(self):
        lex = Lexicon({"hi": ["h", "ii"]}, silence_symbol="sil")
        assert lex.phonemize_sentence("hi") == ["sil", "h", "ii", "sil"]
