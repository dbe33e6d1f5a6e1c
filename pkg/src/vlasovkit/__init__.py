"""Vlasov-scaling toolkit for continuum birth-death and hopping particle systems."""

__version__ = "0.1.0"
