"""Surface- and repetition-code memory experiments: circuits, noise, simulation, decoding and analysis."""

__version__ = "0.1.0"
