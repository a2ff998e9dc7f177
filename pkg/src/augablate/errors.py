"""Exception types raised across the package."""


class AugablateError(Exception):
    pass


class InvalidTransformError(AugablateError, ValueError):
    pass


class InvalidCropError(AugablateError, ValueError):
    pass


class ShapeError(AugablateError, ValueError):
    pass


class StateError(AugablateError, RuntimeError):
    pass


class DegenerateBatchError(AugablateError, ValueError):
    pass


class LabelError(AugablateError, ValueError):
    pass


class ConfigError(AugablateError, ValueError):
    pass


class FormatError(AugablateError, ValueError):
    pass


class SizeError(AugablateError, ValueError):
    pass


class DivergenceError(AugablateError, RuntimeError):
    pass


class UsageError(AugablateError, ValueError):
    pass
