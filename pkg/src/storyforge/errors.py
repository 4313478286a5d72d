"""Exception types shared across the engine."""


class StoryforgeError(Exception):
    """Base class for all engine errors."""


class InvalidConfigError(StoryforgeError):
    """A configuration value violates its invariants."""


class WrongPhaseError(StoryforgeError):
    """Operation attempted in a phase that does not allow it."""


class EmptyInputError(StoryforgeError):
    """Player text is empty after trimming."""


class InputTooLongError(StoryforgeError):
    """Player text exceeds the configured character cap."""


class ProviderFailure(StoryforgeError):
    """A provider could not produce a usable reply (after retries)."""


class TimeoutFailure(ProviderFailure):
    """A provider exceeded its deadline."""


class ParseFailure(StoryforgeError):
    """No usable structured reply could be extracted; signals a repair retry."""


class EmptyHistoryError(StoryforgeError):
    """Scene summary requested before any story exists."""


class EmptySummaryError(StoryforgeError):
    """Image prompt requested from an empty summary."""


class BadCellError(StoryforgeError):
    """Pixelizer cell size out of range for the image."""


class BadPaletteError(StoryforgeError):
    """Pixelizer palette size below 1."""


class DimensionMismatchError(StoryforgeError):
    """Compositing inputs differ in shape."""


class WeaponNotOwnedError(StoryforgeError):
    """Battle action used a weapon kind outside the arsenal."""


class WeaponAlreadyUsedError(StoryforgeError):
    """Battle action reused a spent weapon."""


class BattleOverError(StoryforgeError):
    """Battle action after the outcome was decided."""


class StorageError(StoryforgeError):
    """Persistence layer failure."""


class SequenceGapError(StorageError):
    """Transcript append with a sequence number that does not follow the last."""


class CorruptTranscriptError(StorageError):
    """Transcript cannot be replayed; carries the first bad sequence number."""

    def __init__(self, message: str, seq: int | None = None):
        super().__init__(message)
        self.seq = seq


class BindFailure(StoryforgeError):
    """Service could not bind its listen address."""
