"""Exception types shared across the toolkit."""


class ShapeMismatchError(ValueError):
    """Arrays that must share a shape do not."""


class UnsupportedCapabilityError(RuntimeError):
    """A backend was asked for something it cannot do (gradients, CAM features)."""


class UndefinedMetricError(ValueError):
    """A metric's denominator is empty, so its value is genuinely undefined."""
