"""Exception hierarchy shared by every estimator and loader."""


class SpatHedonicError(Exception):
    """Base class for all package errors."""


class DataError(SpatHedonicError):
    """Problems with input data: columns, parsing, domains."""


class MissingColumnError(DataError, KeyError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column: {column!r}")

    def __str__(self):
        return self.args[0]


class ParseError(DataError):
    def __init__(self, row, column, token):
        self.row, self.column, self.token = row, column, token
        super().__init__(f"row {row}, column {column!r}: cannot parse {token!r}")


class EmptyDatasetError(DataError):
    pass


class DomainError(DataError, ValueError):
    """Value outside the domain of a transform (e.g. log of a non-positive number)."""


class ZeroVarianceError(DataError, ValueError):
    pass


class EstimationError(SpatHedonicError):
    """Numerical or identification failure inside an estimator."""


class RankDeficiencyError(EstimationError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"collinear columns: {', '.join(self.columns)}")


class InsufficientObservationsError(EstimationError):
    pass


class IdentificationError(EstimationError):
    pass


class SeparationError(EstimationError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"perfect separation detected on {column!r}")


class ConvergenceError(EstimationError):
    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class InfeasibleError(EstimationError, ValueError):
    pass


class ConfigError(SpatHedonicError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CoincidentPointsError(DataError, ValueError):
    def __init__(self, pairs):
        self.pairs = [tuple(int(v) for v in p) for p in pairs]
        shown = ", ".join(f"({i}, {j})" for i, j in self.pairs[:10])
        more = "" if len(self.pairs) <= 10 else f" and {len(self.pairs) - 10} more"
        super().__init__(f"coincident observations: {shown}{more}")
