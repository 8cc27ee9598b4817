"""Exception types and the not-identified sentinel."""


class MomentSensError(ValueError):
    """Base class for numerical failures raised by this package."""


class SingularBread(MomentSensError):
    """``G'WG`` is numerically singular; the parameters are not identified."""


class SingularS(MomentSensError):
    """The moment covariance cannot be inverted."""


class NotOveridentified(MomentSensError):
    """A drop-one measure was requested for a model with ``J <= P``."""


class NonFinite(MomentSensError):
    """A moment evaluation produced inf or nan."""


class DegenerateMoment(MomentSensError):
    """A moment has zero variance."""


class NoImprovement(MomentSensError):
    """The optimizer ended above the criterion value at the start point."""


class OmegaNotPD(MomentSensError):
    """The taste-shock covariance matrix is not positive definite."""


class ShapeMismatch(MomentSensError):
    """Two tables (or matrices) that should line up do not."""


class _NotIdentifiedType:
    """Singleton returned by drop-one measures when the reduced model loses rank."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_IDENTIFIED"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_NotIdentifiedType, ())


NOT_IDENTIFIED = _NotIdentifiedType()
