"""Exception types raised by the library."""


class GridResolutionError(ValueError):
    """A sampling or coverage guard failed for a requested synthesis.

    ``guard`` is ``"coverage"`` or ``"sampling"``.
    """

    def __init__(self, guard, message):
        super().__init__(f"{guard} guard failed: {message}")
        self.guard = guard


class PropagationWindowError(ValueError):
    """The propagated field would not fit inside the computational window."""


class GridMismatchError(ValueError):
    """Two fields do not share a grid, plane or wavelength."""


class DegenerateFieldError(ValueError):
    """The field carries no power."""


class UnsupportedModeError(ValueError):
    """The requested mode has no closed form in this library."""


class PetalDetectionError(RuntimeError):
    """Intensity maxima could not be located on the petal ring."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
