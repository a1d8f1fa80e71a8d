"""citeforge: comparative related-work generation and evaluation toolkit."""

__version__ = "0.1.0"
