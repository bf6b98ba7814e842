"""Bundled example data."""

from __future__ import annotations

from importlib.resources import as_file, files

from ..io import CsvSchema, load_csv
from ..types import Dataset

FOOTFALL_SCHEMA = CsvSchema(time="time", coords=("x", "y"), features=("footfall",), sensor="sensor")


def footfall_path():
    """Traversable pointing at the bundled footfall CSV."""
    return files(__name__) / "footfall.csv"


def footfall() -> Dataset:
    """Eleven footfall sensors (A to K) over three timesteps.

    The layout keeps I and K side by side, C beside D, and F, G and J
    touching one another, which is what the example's region structure
    needs.
    """
    with as_file(footfall_path()) as p:
        return load_csv(p, FOOTFALL_SCHEMA)
