"""Multi-agent model-based RL with shared latent imagination."""

__version__ = "0.1.0"
