"""Non-stationary dynamics on sequences of Lorentzian manifolds: splittings, rates and shadowing checks."""

__version__ = "0.1.0"
