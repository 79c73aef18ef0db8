"""Exception types shared across the library."""


class FacewarpError(Exception):
    """Base class for all library-specific errors."""


class DegenerateDepth(FacewarpError):
    """A point lies on (or numerically too close to) the camera plane.

    Carries the index of the first offending point so callers can skip or
    report the exact input.
    """

    def __init__(self, index: int, denom: float):
        self.index = int(index)
        self.denom = float(denom)
        super().__init__(
            f"point {self.index} has |m3.p| = {abs(self.denom):.3e} "
            "below the depth threshold; projection is undefined"
        )


class SingularSystem(FacewarpError):
    """The TPS interpolation system is numerically singular.

    Typically caused by coplanar or duplicate control points.
    """


class SingularA(FacewarpError):
    """The left 3x3 block of the projection matrix is not invertible."""


class SchemeMismatch(FacewarpError):
    """Landmark scheme of the input does not match the mesh's scheme."""


class NoLandmarks(FacewarpError):
    """No landmarks were selected for evaluation (e.g. none visible)."""


class MeshFormatError(FacewarpError):
    """Mesh file could not be parsed or failed validation.

    ``line`` is the 1-based line number when the problem is tied to a
    specific line, else None.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDiverged(FacewarpError):
    """Loss exploded past the divergence threshold for several epochs."""
