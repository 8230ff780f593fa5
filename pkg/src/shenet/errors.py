"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (config 2, data 3, numeric 4).
"""


class ShenetError(Exception):
    pass


class ConfigError(ShenetError, ValueError):
    pass


class DataError(ShenetError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, path, lineno, msg):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


class FormatError(DataError):
    """Corrupt or version-mismatched bank/checkpoint file."""


class ShapeError(ShenetError, ValueError):
    pass


class NumericError(ShenetError, ArithmeticError):
    pass


class GraphError(ShenetError, RuntimeError):
    pass


class UndefinedSimilarityError(ShenetError, ValueError):
    pass


class FrozenBankError(ShenetError, RuntimeError):
    pass


class StateError(ShenetError, RuntimeError):
    pass


class EvaluationError(ShenetError, ValueError):
    pass
