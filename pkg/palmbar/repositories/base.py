"""
Base repository pattern implementation.
"""
import logging
from pathlib import Path
from typing import List, Union

logger = logging.getLogger(__name__)


class BaseArtifactRepository:
    """Directory-rooted store with basic file operations."""

    def __init__(self, root: Union[str, Path]):
        """
        Initialize repository with its output directory.

        Args:
            root: directory the artifacts are written to; created on first write
        """
        self.root = Path(root)

    def ensure(self) -> Path:
        """Create the output directory if needed."""
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root

    def path(self, name: str) -> Path:
        """Location of an artifact; names may not escape the root."""
        candidate = (self.root / name).resolve()
        if self.root.resolve() not in (candidate, *candidate.parents):
            raise ValueError(f"artifact name {name!r} leaves {self.root}")
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def list(self, pattern: str = "*") -> List[str]:
        """Artifact names under the root, sorted."""
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.glob(pattern) if p.is_file())

    def write_text(self, name: str, text: str) -> Path:
        """Write ``text`` with ``\\n`` line endings and return the path."""
        self.ensure()
        target = self.path(name)
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        logger.debug("wrote %s", target)
        return target

    def read_text(self, name: str) -> str:
        return self.path(name).read_text(encoding="utf-8")

    def remove(self, name: str) -> None:
        """Remove an artifact if it exists."""
        self.path(name).unlink(missing_ok=True)
