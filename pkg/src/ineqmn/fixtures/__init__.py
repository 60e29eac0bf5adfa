"""Bundled model files for the worked examples.

``dosage`` and the ``monotone_binary`` pair are complete.  ``de_gap`` and
``swop5`` are slots: their constraint matrices (a 32x6 vertex matrix and a
75834x20 inequality matrix) are not redistributable here and must be placed
as CSV files under ``external/`` next to the fixture, as referenced inside
each JSON file.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

_COMPLETE = ("dosage", "monotone_binary", "monotone_binary_vertices")
_SLOTS = ("de_gap", "swop5")


def available_fixtures() -> tuple[str, ...]:
    """Names of all bundled fixtures (complete ones first)."""
    return _COMPLETE + _SLOTS


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture's JSON file."""
    if name not in available_fixtures():
        raise KeyError(
            f"unknown fixture {name!r}; available: {available_fixtures()}"
        )
    with resources.as_file(
        resources.files(__package__).joinpath(f"{name}.json")
    ) as path:
        return Path(path)


def load_fixture(name: str):
    """Parse a bundled fixture into a ModelSpec."""
    from ..io import parse_model

    return parse_model(fixture_path(name))
