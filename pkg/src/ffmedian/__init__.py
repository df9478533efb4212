"""Family-free median of three genomes."""

__version__ = "0.1.0"
