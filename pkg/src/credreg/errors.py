"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`CredregError`.
The CLI maps :class:`InputError` subclasses to exit code 2 and
:class:`RuntimeFailure` subclasses to exit code 3.
"""

from __future__ import annotations


class CredregError(Exception):
    pass


class InputError(CredregError):
    """Bad input data or configuration."""


class RuntimeFailure(CredregError):
    """A numerical routine failed on otherwise valid input."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RangeError(ParseError):
    pass


def _id_list(ids: list, limit: int = 10) -> str:
    shown = ", ".join(ids[:limit])
    return shown if len(ids) <= limit else f"{shown}, ... ({len(ids)} in total)"


class DuplicateIdError(InputError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"duplicate account id(s): {_id_list(self.ids)}")


class MissingProfileError(InputError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"no profile for account id(s): {_id_list(self.ids)}")


class MissingScoresError(InputError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"no Botometer scores for account id(s): {_id_list(self.ids)}")


class EmptyViewError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class TemporalError(InputError):
    pass


class ConfigError(InputError):
    pass


class FeatureSetMismatch(InputError, TypeError):
    pass


class PairingError(InputError):
    pass


class NotPositiveDefiniteError(RuntimeFailure):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {pivot})")


class ConvergenceError(RuntimeFailure):
    def __init__(self, message: str, worst_violation: float):
        self.worst_violation = worst_violation
        super().__init__(f"{message} (worst KKT violation {worst_violation:.3g})")


def annotate(exc: CredregError, context: str) -> CredregError:
    """Prefix ``context`` to the message of ``exc`` in place and return it."""
    exc.args = (f"{context}: {exc}",)
    exc.context = (context,) + getattr(exc, "context", ())
    return exc
