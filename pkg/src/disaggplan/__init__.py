"""Capacity planning for disaggregated and co-located LLM serving."""

__version__ = "0.1.0"
