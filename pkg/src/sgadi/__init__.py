"""High-order ADI solver for stochastic volatility option pricing on full and sparse grids."""

__version__ = "0.1.0"
