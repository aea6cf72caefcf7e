"""
chemotaxis_fv - Finite-volume simulator and diagnostics for the chemotaxis
system with signal consumption and logistic growth
"""

__version__ = "0.1.0"
