"""Toy decoder runtime that drops vision tokens by hidden-state variation."""
__version__ = "0.1.0"
