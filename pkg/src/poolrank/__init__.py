"""Diagnostic harness comparing ranking policies over fixed 8-document evidence pools."""

__version__ = "0.1.0"

POOL_SIZE = 8
