"""Learn-then-optimize solver for games with decision-dependent data.

Modules: ``game`` (sets, projections, monotonicity constants), ``distmap``
(location-scale maps, sampling, W1), ``learn`` (ERM and its bounds), ``market`` (EV
charging price competition), ``solver`` (stochastic gradient play), ``oracle``
(independent reference computations) and ``harness`` (configs and the pipeline).
"""

from .errors import (
    BestResponseCycle,
    ConfigError,
    ERMDiverged,
    KappaTooLarge,
    NonConvergence,
    NumericalError,
    PreconditionFailed,
    SingularGram,
)

__version__ = "0.1.0"

__all__ = [
    "BestResponseCycle",
    "ConfigError",
    "ERMDiverged",
    "KappaTooLarge",
    "NonConvergence",
    "NumericalError",
    "PreconditionFailed",
    "SingularGram",
]
