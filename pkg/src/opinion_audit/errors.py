"""Exception hierarchy. Anything derived from DataError maps to CLI exit code 2."""


class AuditError(Exception):
    """Base class for errors raised by opinion_audit."""


class DataError(AuditError):
    """Input data is malformed or violates a dataset invariant."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class SchemaError(DataError):
    """A parsed record breaks a schema rule (duplicate pair, dangling reference, unknown label)."""


class TrainingError(AuditError):
    """Model fitting could not proceed (absent class, non-finite loss)."""


class EvaluationError(AuditError):
    """An evaluation quantity is undefined for the given inputs."""
