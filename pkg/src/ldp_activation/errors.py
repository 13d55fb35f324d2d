"""Exception types shared across the package."""


class LdpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LdpError):
    """Invalid model or experiment configuration (e.g. z_f >= n_M)."""


class DomainError(LdpError):
    """An argument lies outside the mathematical domain of an operation."""


class BelowMeanError(DomainError):
    """Requested threshold slope does not exceed the (conditional) mean.

    The sharp tail approximation is only defined for levels strictly above
    the mean of the total stimulation rate.
    """

    def __init__(self, a: float, mean_slope: float):
        self.a = a
        self.mean_slope = mean_slope
        super().__init__(
            f"threshold slope a={a!r} does not exceed the mean slope "
            f"{mean_slope!r}; the tilted-tail approximation needs a > mean"
        )


class SaturationError(DomainError):
    """Requested threshold slope is at or above the essential supremum.

    ``plateau`` is the largest mean slope numerically reachable by tilting
    (the derivative of the cumulant at the bracket ceiling).
    """

    def __init__(self, a: float, plateau: float, theta_max: float):
        self.a = a
        self.plateau = plateau
        self.theta_max = theta_max
        super().__init__(
            f"threshold slope a={a!r} is not reachable: tilted mean plateaus "
            f"at {plateau!r} (probed up to theta={theta_max!r})"
        )


class DecompositionError(LdpError):
    """Rate decomposition unavailable (e.g. curvature below threshold)."""


class ValidityWarning(UserWarning):
    """An asymptotic formula is being used outside its intended regime."""
