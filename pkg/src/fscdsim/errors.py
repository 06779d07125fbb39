"""Exception hierarchy shared by every module."""


class FscdSimError(Exception):
    """Base class for all simulator errors."""


class SchedulingInPast(FscdSimError):
    pass


class SimTimeOverflow(FscdSimError, OverflowError):
    pass


class OutOfRange(FscdSimError, ValueError):
    pass


class ConfigInvalid(FscdSimError, ValueError):
    pass


class LengthMismatch(FscdSimError, ValueError):
    pass


class TooShort(FscdSimError, ValueError):
    pass


class TooFewSamples(FscdSimError, ValueError):
    pass


class UnknownPath(FscdSimError, KeyError):
    pass


class UnreachableAgent(FscdSimError):
    pass


class MalformedFrame(FscdSimError, ValueError):
    pass


class NoAlertInLog(FscdSimError, LookupError):
    pass


class ParseError(FscdSimError, ValueError):
    pass


class ValidationError(FscdSimError, ValueError):
    pass
