"""Exception hierarchy shared by every mlaco module."""


class MlacoError(Exception):
    """Base class for all toolkit errors."""


class InvalidInstanceError(MlacoError):
    pass


class InfeasibleInstanceError(InvalidInstanceError):
    """The start->end edge alone exceeds the budget, so no route exists."""


class ParseError(MlacoError):
    """Malformed instance file. Carries the offending line number and field."""

    def __init__(self, message, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MalformedHeaderError(ParseError):
    pass


class NonNumericFieldError(ParseError):
    pass


class InfeasibleStartEndError(ParseError, InfeasibleInstanceError):
    pass


class InvalidRouteError(MlacoError):
    pass


class DegenerateSamplesError(MlacoError):
    """All sampled objectives are equal, so correlations are undefined."""


class EmptyTrainingSetError(MlacoError):
    pass


class DegenerateLabelsError(MlacoError):
    pass


class DivergenceError(MlacoError):
    pass


class ConfigError(MlacoError):
    pass


class InvalidObjectiveError(MlacoError):
    pass
