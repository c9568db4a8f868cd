"""Exception hierarchy shared across the package.

Every error raised by vectraj code derives from VectrajError so callers
(and the CLI exit-code mapping) can catch one base class.
"""


class VectrajError(Exception):
    pass


# --- scene / file format ---

class MalformedRecord(VectrajError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)


class NonMonotoneTrack(VectrajError):
    pass


class EmptyScene(VectrajError):
    pass


class InsufficientHistory(VectrajError):
    pass


class FrameMismatch(VectrajError):
    pass


# --- autodiff ---

class ShapeMismatch(VectrajError):
    pass


class EmptyReduction(VectrajError):
    pass


class NotScalarLoss(VectrajError):
    pass


# --- encoder / heads ---

class EmptyPolyline(VectrajError):
    pass


class IndexOutOfRange(VectrajError):
    pass


# --- targets / losses / metrics ---

class NoCenterlines(VectrajError):
    pass


class LengthMismatch(VectrajError):
    pass


class DegeneratePolygon(VectrajError):
    pass


# --- trainer / cli ---

class CorruptCheckpoint(VectrajError):
    pass


class ConfigInvalid(VectrajError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FileError(VectrajError):
    pass
