"""Shipped desk-scale case fixtures."""

from importlib import resources
from pathlib import Path


def case_path(name: str) -> Path:
    """Filesystem path of a shipped fixture, e.g. case_path('case3.json')."""
    path = resources.files(__package__) / name
    if not path.is_file():
        available = sorted(p.name for p in resources.files(__package__).iterdir()
                           if p.name.endswith(".json"))
        raise FileNotFoundError(f"no shipped case {name!r}; available: {available}")
    return Path(str(path))
