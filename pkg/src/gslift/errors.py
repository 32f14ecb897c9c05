"""Exception taxonomy shared by every gslift module.

All failures raised on bad user input derive from :class:`InputError` so the
CLI can map them to exit code 1; anything else that escapes is treated as an
internal fault (exit code 2).
"""


class GsliftError(Exception):
    """Base class for all gslift exceptions."""


class InputError(GsliftError):
    """Invalid user-supplied data, file, or argument."""


class PlyParseError(InputError):
    """A PLY header or payload could not be parsed."""


class PlySchemaError(InputError):
    """A PLY file parsed but does not describe a Gaussian field."""


class FormatError(InputError):
    """A binary or image file is not in the expected format."""


class TruncationError(FormatError):
    """A binary payload ended before the declared element count."""


class SchemaError(InputError):
    """A structured document is missing fields or has bad field types."""


class DataError(InputError):
    """Values inside an otherwise well-formed file are invalid."""


class GeometryError(InputError):
    """A camera or spatial quantity violates a geometric requirement."""


class IntegrityError(InputError):
    """Cross-referenced records disagree (labels, parent maps, counts)."""


class IndexingError(InputError):
    """An id or index points outside the valid range."""


class PreconditionError(InputError):
    """An operation was called with arguments violating its contract."""
