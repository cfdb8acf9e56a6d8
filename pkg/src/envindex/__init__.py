"""Dollar environmental indices as financial assets."""

__version__ = "0.1.0"
