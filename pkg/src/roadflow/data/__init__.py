"""Bundled scenario files."""

from importlib import resources
from pathlib import Path


def scenario_path(name: str = "paper53") -> Path:
    """Filesystem path of a bundled scenario (without .json suffix)."""
    path = resources.files(__name__) / f"{name}.json"
    return Path(str(path))


def scenario_text(name: str = "paper53") -> str:
    return (resources.files(__name__) / f"{name}.json").read_text("utf-8")
