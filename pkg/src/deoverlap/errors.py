"""Exception hierarchy shared by all deoverlap modules.

Every error carries a stable machine-readable ``code`` so the CLI can emit
one parseable line per failure.
"""


class DeoverlapError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InvalidInputError(DeoverlapError, ValueError):
    """An argument violates a documented precondition."""

    code = "invalid-input"


class DimensionMismatchError(InvalidInputError):
    """Two rasters that must share a shape do not."""

    code = "dimension-mismatch"


class UndefinedMetricError(DeoverlapError, ValueError):
    """A metric is undefined for the given inputs (e.g. IoU of two empty masks)."""

    code = "undefined-metric"


class CorruptDataError(DeoverlapError, ValueError):
    """Persisted data fails an integrity check (e.g. RLE run sum mismatch)."""

    code = "corrupt-data"


class ManifestSchemaError(CorruptDataError):
    """A manifest JSON document violates the schema; message names the JSON path."""

    code = "schema"


class PlacementError(DeoverlapError, RuntimeError):
    """No admissible placement offset was found within the attempt budget."""

    code = "placement-failure"


class GenerationError(DeoverlapError, RuntimeError):
    """Synthetic sample generation failed after repeated placement restarts."""

    code = "generation-failure"
