"""Simulation and design tools for a 171Yb3+:YVO4 microwave-to-optical transducer."""

__version__ = "0.1.0"
