"""Exception types shared across the package."""


class AuxselError(Exception):
    """Base class for all package errors."""


class DomainError(AuxselError, ValueError):
    """An argument lies outside the operation's domain."""


class ConfigError(AuxselError):
    pass


class StateError(AuxselError):
    """Operation invoked on a state that does not allow it."""


class CapabilityError(AuxselError):
    pass


class EnvironmentFailure(AuxselError):
    """A reward source could not answer an evaluation request."""


class ReplayExhausted(EnvironmentFailure):
    def __init__(self, label: str, split: int):
        super().__init__(f"no replay record for set {label} at split {split}")
        self.label = label
        self.split = split


class MissingEntry(EnvironmentFailure):
    pass


class ParseError(AuxselError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class ValidationError(AuxselError):
    pass


class IncompleteStage1(AuxselError):
    pass
