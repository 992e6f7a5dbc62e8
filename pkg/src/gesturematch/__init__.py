"""Quantized motion-matching engine for speech-driven gesture synthesis."""

__version__ = "0.1.0"
