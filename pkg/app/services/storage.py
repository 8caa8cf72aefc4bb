"""
Result storage for run artifacts.

Provides safe file writes within an output directory, with path
traversal protection. CSV tables and policy snapshots are written
atomically (temporary file then rename) so a crashed run never leaves a
truncated artifact behind.
"""

from __future__ import annotations

import logging
import os
import tempfile
from pathlib import Path

from app.errors import SlicingError

logger = logging.getLogger(__name__)


class StorageError(SlicingError):
    """Base exception for storage operations."""


class InvalidPathError(StorageError):
    """Raised when a path is invalid or attempts traversal."""


class ResultStore:
    """Artifact store rooted at an output directory.

    Example:
        store = ResultStore(Path("results"))
        path = store.write_text("matrix/summary.csv", table)
    """

    def __init__(self, root: Path) -> None:
        self._root = Path(root).resolve()

    @property
    def root(self) -> Path:
        return self._root

    def get_safe_path(self, filepath: str) -> Path:
        """Validate and return a path within the root.

        Raises:
            InvalidPathError: If the path escapes the root.
        """
        if not filepath:
            return self._root

        try:
            target = (self._root / filepath).resolve()
            if self._root in target.parents or target == self._root:
                return target
            raise InvalidPathError(f"Invalid path: {filepath}")
        except (ValueError, OSError) as e:
            raise InvalidPathError(f"Invalid path: {filepath}") from e

    def _write_atomic(self, filepath: str, payload: bytes) -> Path:
        target = self.get_safe_path(filepath)
        if target.is_dir():
            raise InvalidPathError(f"Path is a directory: {filepath}")
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        logger.info(f"Wrote {filepath} ({len(payload)} bytes)")
        return target

    def write_text(self, filepath: str, content: str) -> Path:
        """Write text (UTF-8, newlines untranslated) and return the absolute path.

        Raises:
            InvalidPathError: If the path is invalid or a directory.
        """
        return self._write_atomic(filepath, content.encode("utf-8"))

    def write_bytes(self, filepath: str, payload: bytes) -> Path:
        """Write binary content and return the absolute path.

        Raises:
            InvalidPathError: If the path is invalid or a directory.
        """
        return self._write_atomic(filepath, payload)
