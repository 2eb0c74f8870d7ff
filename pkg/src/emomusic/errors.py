"""Shared exception base so the CLI can map failures to exit codes."""


class EmoMusicError(Exception):
    """Base class for all data/contract errors raised by this package."""
