"""Symbol decision workbench for a simulated radio-over-fiber link."""

__version__ = "0.1.0"
