"""linklift: batch record linkage and demographically balanced lookalike
targeting, with decile/lift evaluation."""

__version__ = "0.1.0"
