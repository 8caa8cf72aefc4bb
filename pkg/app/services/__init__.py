"""Simulation services: environment, cluster, controllers, metrics and the harness."""

from app.services.storage import ResultStore

__all__ = ["ResultStore"]
