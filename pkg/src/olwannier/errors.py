"""Exception hierarchy shared by all stages.

Every error carries an ``code`` used by the command line front-end as the
process exit status and in the machine-readable error report.
"""


class OLWannierError(Exception):
    code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "code": self.code,
            "message": str(self),
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return repr(value)


class DegenerateLatticeError(OLWannierError):
    code = 10


class PotentialError(OLWannierError):
    code = 11


class MeshGeometryError(OLWannierError):
    code = 12


class ConsistencyError(OLWannierError):
    code = 20


class SolverError(OLWannierError):
    code = 21


class CutoffTooSmallError(OLWannierError):
    code = 30


class IllConditionedLogError(OLWannierError):
    code = 31


class StepSizeError(OLWannierError):
    code = 32


class InstabilityError(OLWannierError):
    code = 33


class StageError(OLWannierError):
    code = 34


class AliasingError(OLWannierError):
    code = 40


class ResolutionError(OLWannierError):
    code = 41


class EmptyModelError(OLWannierError):
    code = 42


class ConfigError(OLWannierError):
    code = 2
