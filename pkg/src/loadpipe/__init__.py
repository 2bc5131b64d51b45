"""Automatic load/compute pipelining on a small loop-nest tensor IR."""

__version__ = "0.1.0"
