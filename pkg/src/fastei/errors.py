"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, or unusable combination."""


class DivergenceError(RuntimeError):
    """A numerical iteration produced non-finite values.

    Attributes
    ----------
    iteration : int or None
        Inner-loop index at which the divergence was detected.
    step : int or None
        Global training step, when raised from a trainer.
    """

    def __init__(self, message, iteration=None, step=None):
        super().__init__(message)
        self.iteration = iteration
        self.step = step


class SolverError(RuntimeError):
    """An iterative solver failed to converge; carries the final residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IngestionError(RuntimeError):
    """Dataset loading failed; carries the offending paths.

    Attributes
    ----------
    paths : list
        The files or directories that could not be ingested.
    """

    def __init__(self, message, paths=()):
        super().__init__(message)
        self.paths = list(paths)
