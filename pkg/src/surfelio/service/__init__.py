"""HTTP service wrapping the odometry pipeline."""

from .app import app, create_app

__all__ = ["app", "create_app"]
