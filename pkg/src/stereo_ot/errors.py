"""Exception hierarchy shared by all submodules."""


class StereoOTError(Exception):
    """Base class for every error raised by :mod:`stereo_ot`."""


class GeometryError(StereoOTError, ValueError):
    pass


class BehindCamera(GeometryError):
    """A point projects with non-positive depth."""


class DegenerateRig(GeometryError):
    """The two focal points coincide or a camera matrix is invalid."""


class ParallelRays(GeometryError):
    """Back-projected rays are parallel; no unique closest-point pair."""


class DegenerateEpipole(GeometryError):
    """The epipole lies at infinity for the requested camera."""


class BehindCameraWarning(UserWarning):
    """A triangulated midpoint is not in front of both cameras."""


class TransportError(StereoOTError, ValueError):
    pass


class InfeasibleMarginals(TransportError):
    pass


class InfeasibleMass(TransportError):
    pass


class ShapeMismatch(StereoOTError, ValueError):
    pass


class EmptyCloud(StereoOTError, ValueError):
    pass


class RejectionBudgetExceeded(StereoOTError, RuntimeError):
    pass


class ParseError(StereoOTError, ValueError):
    """Malformed input file; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(where + message)


class ValidationError(StereoOTError, ValueError):
    pass


class CalibrationError(StereoOTError, ValueError):
    pass
