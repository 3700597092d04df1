"""Shared utilities: error hierarchy and serialization."""

from graphon_sis.utils.errors import GraphonSISError

__all__ = ['GraphonSISError']
