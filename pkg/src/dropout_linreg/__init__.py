"""Exact dynamics of gradient descent with dropout in linear regression."""

__version__ = "0.1.0"
