"""Secure multi-receiver SWIPT beamforming: robust minimum-power design via semidefinite relaxation."""

__version__ = "0.1.0"
