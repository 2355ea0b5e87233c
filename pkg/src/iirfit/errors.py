"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 2, data errors
(malformed files, bad configs) exit 3, numeric failures exit 4.
"""


class IirfitError(Exception):
    """Base class for all toolkit errors."""


class DataError(IirfitError):
    """Malformed or inconsistent input data (files, configs, shapes)."""


class NumericError(IirfitError):
    """Numeric failure during computation."""


class GridMismatchError(DataError):
    """Two responses were combined but live on different frequency grids."""


class DegenerateResponseError(NumericError):
    """A filter's response is non-finite on the evaluation grid.

    Carries ``section`` (index of the offending second-order section)
    when known, so callers can resample or reinitialize just that root.
    """

    def __init__(self, message: str, section: int | None = None):
        super().__init__(message)
        self.section = section


class EigensolverError(NumericError):
    """The eigenvalue iteration failed to converge; callers resample."""


class NonFiniteLossError(NumericError):
    """Training produced a non-finite loss; message carries the batch seed."""


class WavFormatError(DataError):
    """RIFF/WAVE parse failure; message names the byte offset."""


class CheckpointError(DataError):
    """Checkpoint file is malformed, truncated, or fails its checksum."""
