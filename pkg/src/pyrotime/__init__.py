"""Probabilistic fire arrival-time inference from sparse active-fire detections."""

__version__ = "0.1.0"
