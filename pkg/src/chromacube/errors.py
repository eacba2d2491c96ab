"""Exception hierarchy shared across the package.

Everything raised on bad user input derives from :class:`ChromacubeError`
so the CLI can map library failures to a single exit code.
"""


class ChromacubeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(ChromacubeError, ValueError):
    """Array dimensions do not satisfy the operation's contract."""


class ConfigError(ChromacubeError, ValueError):
    """Invalid parameter or configuration value."""


class DivisionHazardError(ChromacubeError, ValueError):
    """A zero denominator would occur (e.g. zero intensity with epsilon=0)."""


class DegenerateDataError(ChromacubeError, ValueError):
    """Input data is degenerate for the requested statistic."""


class OperatorSizeError(ChromacubeError, ValueError):
    """A dense materialization was refused because the operator is too large."""


class DivergenceError(ChromacubeError, RuntimeError):
    """The iterative solver's residual grew past the divergence guard."""


class CubeFormatError(ChromacubeError, ValueError):
    """A cube/PGM/manifest file failed to parse; message carries byte offsets."""
