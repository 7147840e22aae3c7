"""Cooperative null-steering routing for cognitive radio networks: protocol library and simulator."""

__version__ = "0.1.0"
