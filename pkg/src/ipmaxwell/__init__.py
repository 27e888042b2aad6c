"""Interior-penalty Lagrange elements for 2D Maxwell problems in heterogeneous media."""
__version__ = "0.1.0"
