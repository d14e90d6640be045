"""Rare-event point processes for the LSV intermittent map and a random-walk
Z-extension: induced-chain simulation, limit laws, fractional equations."""

__version__ = "0.1.0"
