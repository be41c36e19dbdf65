"""Text frontend: grapheme-to-phoneme via a pluggable lexicon table.

A lexicon maps whole words to phoneme strings, with a per-character fallback
for words it has never seen; anything still unresolved raises FrontendError.
Sentences are wrapped in a silence symbol to match how aligned corpora mark
utterance boundaries.
"""

from .errors import FrontendError

SILENCE = "pau"
_STRIP_CHARS = ".,!?;:\"'()[]"


class Lexicon:
    def __init__(self, entries: dict, silence_symbol: str = SILENCE):
        self.entries = {word: list(phs) for word, phs in entries.items()}
        self.silence_symbol = silence_symbol

    @classmethod
    def load(cls, path, silence_symbol: str = SILENCE) -> "Lexicon":
        """Parse `word ph ph ...` lines (blank lines and # comments skipped)."""
        entries = {}
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    parts = line.split()
                    if len(parts) < 2:
                        raise FrontendError(f"{path}:{lineno}: no pronunciation for {parts[0]!r}")
                    entries[parts[0]] = parts[1:]
        except OSError as exc:
            raise FrontendError(f"cannot read lexicon {path}: {exc}") from exc
        return cls(entries, silence_symbol)

    def phonemize_word(self, word: str) -> list:
        """Exact lookup, then lowercase, then per-character fallback."""
        for key in (word, word.lower()):
            if key in self.entries:
                return list(self.entries[key])
        phonemes = []
        for ch in word.lower():
            if ch not in self.entries:
                raise FrontendError(f"no pronunciation for {word!r} (character {ch!r} unknown)")
            phonemes.extend(self.entries[ch])
        return phonemes

    def phonemize_words(self, text: str) -> list:
        """Phonemes for the words of `text`, no silence padding (empty → [])."""
        phonemes = []
        for token in text.split():
            token = token.strip(_STRIP_CHARS)
            if token:
                phonemes.extend(self.phonemize_word(token))
        return phonemes

    def phonemize_sentence(self, text: str) -> list:
        """Word phonemes wrapped in the silence symbol; empty text → []."""
        body = self.phonemize_words(text)
        if not body:
            return []
        return [self.silence_symbol] + body + [self.silence_symbol]
