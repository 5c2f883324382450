"""Exception hierarchy shared across the toolkit."""


class StreetElevError(Exception):
    """Base class for all toolkit errors."""


# --- depthmap codec ---

class MalformedEncoding(StreetElevError):
    """Input text is not valid base64url, or the byte stream is not valid zlib."""


class HeaderMismatch(StreetElevError):
    """Depthmap header is inconsistent with itself or with the payload length."""


class InvalidPlaneIndex(StreetElevError):
    """A pixel references a plane index outside the plane table."""


# --- geometry ---

class CoincidentPoints(StreetElevError):
    """Two geographic points are too close for a bearing to be defined."""


class RowOutOfRange(StreetElevError):
    """Pixel row outside the panorama."""


class PitchOutOfRange(StreetElevError):
    """Pitch angle outside the representable (-90, 90] range."""


# --- mask extraction ---

class EmptyInstance(StreetElevError):
    """Door instance contains no pixels."""


class NoRoadsideFeature(StreetElevError):
    """Window contains no road, grass, or dirt pixels to anchor a roadside."""


class MaskSchemaError(StreetElevError):
    """Mask file or sidecar violates the documented layout."""


# --- estimation ---

class EstimationFailed(StreetElevError):
    """No pixel in the trace produced a usable elevation sample."""


class KindMismatch(StreetElevError):
    """Estimate pair passed to the height-difference calculation has wrong kinds."""


# --- ingestion ---

class ParseError(StreetElevError):
    """House table row failed to parse.  Carries the 1-based row number."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NoVisibleDoor(StreetElevError):
    """No candidate bundle shows a door inside the house window."""


class HttpError(StreetElevError):
    """Remote fetch failed with a non-success status."""


class IncompleteBundle(StreetElevError):
    """A fetched bundle is missing a required asset (tile, metadata, depthmap)."""


# --- synthetic scenes ---

class DegenerateScene(StreetElevError):
    """Scene places the camera inside or on a surface."""


# --- reporting ---

class NoTruth(StreetElevError):
    """No evaluation row carries a ground-truth value."""


class TooFewRows(StreetElevError):
    """Not enough rows for the requested statistic."""


class DegenerateGroups(StreetElevError):
    """All values identical; rank test undefined."""


class DegeneratePairs(StreetElevError):
    """Paired differences have zero variance; t statistic undefined."""
