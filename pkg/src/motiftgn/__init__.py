"""Temporal network embedding with motif edge features and bicomponent neighbor aggregation."""

__version__ = "0.1.0"
