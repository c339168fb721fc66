"""Footstep-conditioned biped locomotion with a gated state-space policy encoder."""

__version__ = "0.1.0"
