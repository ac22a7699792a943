"""Supply-chain lockdown propagation: production dynamics, flow decomposition, experiments."""

__version__ = "0.1.0"
