"""Heat-conducting anharmonic chain: reduced dynamics, entropy-production
large deviations and fluctuation-symmetry verification tools."""

__version__ = "0.1.0"
