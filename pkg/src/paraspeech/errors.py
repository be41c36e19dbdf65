"""Exception types shared across the package."""


class ParaspeechError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(ParaspeechError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidConfig(ParaspeechError, ValueError):
    """A configuration value is out of range or inconsistent."""


class IngestError(ParaspeechError):
    """A corpus file is missing or unreadable."""

    def __init__(self, path, message=""):
        self.path = str(path)
        super().__init__(f"{message or 'ingest failed'}: {self.path}")


class AlignmentError(ParaspeechError):
    """An utterance's alignment is inconsistent with its audio."""

    def __init__(self, utterance_id, message=""):
        self.utterance_id = utterance_id
        super().__init__(f"{utterance_id}: {message or 'alignment inconsistent'}")


class EmbedderError(ParaspeechError):
    """The sentence-pair embedder failed."""


class InvalidRequest(ParaspeechError, ValueError):
    """A synthesis request is missing mode-required inputs."""


class FrontendError(ParaspeechError):
    """Text could not be converted to phonemes."""


class EditError(ParaspeechError):
    """A speech-edit request does not map onto the base utterance."""


class NumericalError(ParaspeechError):
    """A non-finite value was produced where finite math is required."""
