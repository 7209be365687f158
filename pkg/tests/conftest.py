from __future__ import annotations

import numpy as np
import pytest

from herdscan.data import sector_map_path
from herdscan.ingest import read_sector_map

import generators


@pytest.fixture(scope="session")
def bundled_sector_map():
    return read_sector_map(sector_map_path())


@pytest.fixture(scope="session")
def big_panel(bundled_sector_map):
    """222 assets x 13000 bars using the bundled ticker universe."""
    metas = list(bundled_sector_map.values())
    return generators.random_walk_panel(7, len(metas), 13_000, metas=metas)


@pytest.fixture(scope="session")
def big_csv_dir(big_panel, tmp_path_factory):
    """The big panel written out as one CSV per asset."""
    root = tmp_path_factory.mktemp("bars")
    stamps = [str(t).replace("T", " ")[:16] for t in big_panel.grid]
    for row, meta in enumerate(big_panel.assets):
        prices = big_panel.prices[row]
        lines = [f"{ts},{price:.6f}" for ts, price in zip(stamps, prices)]
        (root / f"{meta.ticker}.csv").write_text("\n".join(lines) + "\n")
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(0)
