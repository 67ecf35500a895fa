"""Exception hierarchy.  The CLI maps each family to an exit code."""


class RigorError(Exception):
    """Base class for all library diagnostics."""

    exit_code = 3

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_json(self) -> dict:
        out = {"error": type(self).__name__, "message": str(self)}
        out.update({k: _plain(v) for k, v in self.details.items()})
        return out


class ConfigError(RigorError):
    exit_code = 2


class NumericRefusal(RigorError):
    """A computation refused to produce a result it could not certify."""

    exit_code = 3


class ContractViolation(NumericRefusal):
    """Caller-supplied data broke a stated precondition."""


class ResourceLimit(RigorError):
    exit_code = 4


def _plain(v):
    from fractions import Fraction

    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return repr(v)
