"""Default fixtures shipped with archevolve."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

METAMODEL = "automotive.ammeta"
CURRENT_MODEL = "current_config.ammodel"
RULES = "supervised_parking.amocl"
CATALOG = "parking_catalog.json"
REFERENCE_REQUIREMENTS = "supervised_parking_requirements.txt"


def path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(str(resources.files(__name__) / name))


def read(name: str) -> str:
    return path(name).read_text(encoding="utf-8")
