"""HTTP service wrapping the matcher and its toolkit."""

from .app import app

__all__ = ["app"]
