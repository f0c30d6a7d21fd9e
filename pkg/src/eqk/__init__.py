"""Toolkit for generating and evaluating web-search queries for factual claims."""

__version__ = "0.1.0"
