"""Simulation, attack injection and multi-modal anomaly detection for rooftop PV feeders."""

__version__ = "0.1.0"
