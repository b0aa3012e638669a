"""Exact models of Karn's RTT sampling, the RFC 6298 timeout computation,
token bucket filter channels and Go-Back-N efficiency."""

__version__ = "0.1.0"
