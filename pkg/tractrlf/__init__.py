"""Desk-scale RL tractography distilled into a return-conditioned transformer."""

__version__ = "0.3.0"
