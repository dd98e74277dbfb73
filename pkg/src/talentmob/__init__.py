"""Author-panel construction, mobility matching and DID estimation for talent-program studies."""

__version__ = "0.1.0"
