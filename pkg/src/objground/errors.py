"""Exception hierarchy shared by every module."""


class ObjGroundError(ValueError):
    """Base class for all library errors."""


class GeometryError(ObjGroundError):
    """Box geometry is undefined (e.g. IoU of two zero-area boxes)."""


class EmptyMaskError(ObjGroundError):
    pass


class DimensionError(ObjGroundError):
    pass


class DegenerateCloudError(ObjGroundError):
    pass


class InsufficientPointsError(ObjGroundError):
    pass


class EmptyCloudError(ObjGroundError):
    pass


class InvalidAnthropometryError(ObjGroundError):
    pass


class OutOfBoundsError(ObjGroundError):
    pass


class UndefinedCosineError(ObjGroundError):
    pass


class NoCandidatesError(ObjGroundError):
    pass


class MissingDepthError(ObjGroundError):
    pass


class ConfigurationError(ObjGroundError):
    pass


class SizeGuardError(ObjGroundError):
    pass


class MergeFailureError(ObjGroundError):
    pass


class ValidationError(ObjGroundError):
    """Input file failed validation; carries the offending location."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
