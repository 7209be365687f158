"""Bundled example configuration: sector map and sub-period declarations."""

from importlib.resources import files
from pathlib import Path


def sector_map_path() -> Path:
    """222-asset example sector map (146 stocks, 49 US ETFs, 27 cryptos)."""
    return Path(str(files(__package__).joinpath("sectors.txt")))


def subperiods_path() -> Path:
    """Default five named sub-periods covering 2019-04-01 to 2023-05-03."""
    return Path(str(files(__package__).joinpath("subperiods.csv")))
