"""Decentralized non-convex first-order methods, lower-bound instances and a round simulator."""

__version__ = "0.1.0"
