"""Disturbance-loudness MOV extraction and MARS-based quality mapping evaluation."""

__version__ = "0.1.0"
