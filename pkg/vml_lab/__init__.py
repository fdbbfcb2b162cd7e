"""Rarefaction-wave hydrodynamic-limit laboratory for the Vlasov-Maxwell-Landau system."""

__version__ = "0.1.0"
