"""Audit subjective-label classifiers for unfairness as opinion exclusion."""

__version__ = "0.1.0"
