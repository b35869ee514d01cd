"""Exception hierarchy shared across the package.

Everything raised on purpose derives from RescuescanError so the CLI can
catch one type, clean up partial outputs, and emit a single parsable line.
"""


class RescuescanError(Exception):
    """Base class for every failure this package raises deliberately."""


class NonCanonicalResidue(RescuescanError):
    """A residue letter outside the 20-letter canonical alphabet."""


class EmptySequence(RescuescanError):
    """An operation that needs at least one residue got none."""


class PositionOutOfRange(RescuescanError):
    """A 1-based position falls outside the sequence."""


class ReferenceMismatch(RescuescanError):
    """The stated wild-type residue (or row) disagrees with the sequence."""


class ParseError(RescuescanError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentWidthMismatch(ParseError):
    """An aligned row whose width differs from the first row's."""


class MissingReference(RescuescanError):
    """The configured reference row id is absent from the alignment."""


class EmptyTrace(RescuescanError):
    """No CA atoms found for the requested chain."""


class TraceOutOfRange(RescuescanError):
    """A residue number in the coordinate trace exceeds the sequence length."""


class ScorerFailed(RescuescanError):
    """An external scorer process exited nonzero."""


class IncompleteResponse(RescuescanError):
    """A scorer response is missing one or more requested sequence ids."""


class LengthMismatch(RescuescanError):
    """Paired inputs whose lengths must agree do not."""


class ConstantInput(RescuescanError):
    """A correlation was requested on a constant vector."""


class DegenerateLabels(RescuescanError):
    """A ranking metric was given labels that are all one class."""


class InsufficientData(RescuescanError):
    """Fewer observations than the statistic is defined for."""


class EmptyGroup(RescuescanError):
    """A group comparison received an empty group."""
