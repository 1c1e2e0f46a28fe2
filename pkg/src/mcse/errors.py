"""Shared exception types."""


class EnhancementError(Exception):
    """Base class for all pipeline errors."""


class AudioIOError(EnhancementError):
    """Unreadable, inconsistent, or unwritable audio data."""


class ClippingError(AudioIOError):
    """Samples exceed full scale for the requested integer encoding."""


class NoUsableChannelsError(EnhancementError):
    """Every channel was flagged as failed."""


class ShapeMismatchError(EnhancementError):
    """Inconsistent channel/frame/bin dimensions between operands."""
