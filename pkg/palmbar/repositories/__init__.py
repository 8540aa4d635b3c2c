"""Repositories package."""
from palmbar.repositories.artifacts import ArtifactRepository
from palmbar.repositories.base import BaseArtifactRepository
from palmbar.repositories.event_log import EventLogWriter

__all__ = ["ArtifactRepository", "BaseArtifactRepository", "EventLogWriter"]
