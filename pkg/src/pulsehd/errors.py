"""Exception hierarchy. Every CLI failure maps to one of these."""


class PulseHDError(Exception):
    exit_code = 1


class DomainError(PulseHDError, ValueError):
    """Argument outside the domain of a formula."""

    exit_code = 2


class InconsistentDatasheetError(DomainError):
    """Datasheet numbers imply a quantum efficiency above one."""


class ShapeError(PulseHDError, ValueError):
    exit_code = 3


class ResampleRequiredError(ShapeError):
    """Sample rate is not an integer multiple of the repetition rate."""


class ConfigError(PulseHDError, ValueError):
    exit_code = 4


class ComponentNotFoundError(ConfigError):
    def __init__(self, kind, name, available):
        self.kind = kind
        self.name = name
        self.available = sorted(available)
        super().__init__(
            f"{kind} {name!r} not found in catalog; available: {', '.join(self.available)}"
        )


class CalibrationError(PulseHDError):
    exit_code = 5


class InfeasibleCalibrationError(CalibrationError):
    """The requested clearance cannot be reached before saturation."""


class CorruptFileError(PulseHDError):
    exit_code = 6


class ChannelError(PulseHDError, KeyError):
    exit_code = 7

    def __str__(self):
        return str(self.args[0]) if self.args else "channel error"


class OutputError(PulseHDError):
    """An output file could not be written."""

    exit_code = 8
