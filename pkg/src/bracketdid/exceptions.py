class BracketError(Exception):
    """Base class for all errors raised by bracketdid."""


class DataFormatError(BracketError):
    """Malformed input file or inconsistent panel structure."""


class EstimationError(BracketError):
    """A quantity cannot be estimated from the data at hand (e.g. an empty cell)."""


class BootstrapError(BracketError):
    """The bootstrap could not produce the requested number of usable replicates."""
