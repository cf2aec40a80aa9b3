"""Hybrid quantum-classical GAN with a VQKAN generator on a state-vector simulator."""

__version__ = "0.1.0"
