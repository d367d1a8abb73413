"""Exception types shared across the package.

``NumericalError`` subclasses map to CLI exit code 2; ``ConfigError`` maps to 1.
"""


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class KappaTooLarge(NumericalError):
    """kappa >= 1/2, so the strong-monotonicity certificate does not apply."""


class SingularGram(NumericalError):
    """Sampled decisions do not span the decision space (m < d, collinear x)."""


class PreconditionFailed(NumericalError):
    pass


class ERMDiverged(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class BestResponseCycle(NumericalError):
    def __init__(self, length):
        super().__init__(f"best-response dynamics entered a cycle of length {length}")
        self.length = length
