"""JSON HTTP service over a loaded corpus directory."""

from .app import create_app

__all__ = ["create_app"]
