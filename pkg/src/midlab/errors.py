"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not compose."""


class MissingCacheError(RuntimeError):
    """backward() called without a forward cache."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf reached a place where it would poison training."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


class ClassMismatchError(ValueError):
    def __init__(self, message, class_index=None):
        super().__init__(message)
        self.class_index = class_index


class GridMismatchError(ValueError):
    """Two density grids do not share bounds and bins."""


class SolverError(RuntimeError):
    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = iterate


class VerificationError(RuntimeError):
    """A numerical certificate failed; carries the offending probe."""

    def __init__(self, message, probe=None, report=None):
        super().__init__(message)
        self.probe = probe
        self.report = report


class CoverageError(ValueError):
    def __init__(self, message, coverage):
        super().__init__(message)
        self.coverage = coverage


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.bare = message
        self.line = line
        self.key = key


class ExperimentError(RuntimeError):
    """A module error re-raised with the experiment kind and seed attached."""

    def __init__(self, message, kind=None, seed=None):
        super().__init__(message)
        self.kind = kind
        self.seed = seed
