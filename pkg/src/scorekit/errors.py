"""Exception hierarchy shared by all scorekit modules."""

from __future__ import annotations


class ScorekitError(Exception):
    """Base class for every error raised by scorekit."""

    module = "scorekit"


class ValidationError(ScorekitError, ValueError):
    module = "core"


class LengthMismatch(ValidationError):
    pass


class NonPositiveWeight(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class UnknownModel(ScorekitError, KeyError):
    module = "core"

    def __str__(self) -> str:
        # KeyError quotes its message otherwise
        return Exception.__str__(self)


class DomainViolation(ScorekitError, ValueError):
    """A (prediction, observation) pair lies outside a score's domain.

    Attributes
    ----------
    family : str
        Name of the score family (or ``"tweedie_power"`` for grid checks).
    z, y : float or None
        The offending prediction and observation.
    bound : str
        Human readable description of the bound that failed.
    index : int or None
        Row index of the first offending row when evaluating arrays.
    model : str or None
        Prediction column the offending value came from, when known.
    """

    module = "scoring"

    def __init__(self, family, z=None, y=None, bound="", index=None, model=None):
        self.family = family
        self.z = z
        self.y = y
        self.bound = bound
        self.index = index
        self.model = model
        msg = f"{family}: domain violation ({bound})"
        if z is not None or y is not None:
            msg += f" at z={z!r}, y={y!r}"
        if index is not None:
            msg += f" in row {index}"
        if model is not None:
            msg += f" of model {model!r}"
        super().__init__(msg)

    def at_row(self, index: int) -> "DomainViolation":
        return DomainViolation(self.family, self.z, self.y, self.bound, index, self.model)

    def for_model(self, model: str) -> "DomainViolation":
        return DomainViolation(self.family, self.z, self.y, self.bound, self.index, model)


class InvalidInterval(ScorekitError, ValueError):
    module = "scoring"


class DegenerateVariance(ScorekitError, ValueError):
    module = "stats"


class SingularCovariance(ScorekitError, ValueError):
    module = "identification"


class NonNumericFeature(ScorekitError, ValueError):
    module = "identification"


class EmptySubsample(ScorekitError, ValueError):
    module = "identification"


class ZeroReferenceScore(ScorekitError, ValueError):
    module = "comparison"


class EmptyGrid(ScorekitError, ValueError):
    module = "comparison"


class SingleClassSample(ScorekitError, ValueError):
    module = "classification"


class SingularDesign(ScorekitError, ValueError):
    module = "simulation"


class NoConvergence(ScorekitError, RuntimeError):
    module = "simulation"


class MissingColumn(ScorekitError, KeyError):
    module = "data_io"

    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(ScorekitError, ValueError):
    module = "data_io"

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} in column {column!r} of data row {row}")


class EmptyStratum(ScorekitError, ValueError):
    module = "data_io"


class GroupLargerThanPartition(ScorekitError, ValueError):
    module = "data_io"
