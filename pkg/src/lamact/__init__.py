"""Dual-domain sparse-view CT reconstruction with learnable (2,1)-norm regularizers and a
convergent linearized alternating minimization solver."""

__version__ = "0.1.0"
