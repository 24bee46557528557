"""Build the seven-series observable panel from raw FRED-format files."""
import tempfile
from pathlib import Path

import numpy as np

from swlab.data import FRED_IDS, fixture_dir, ingest
from swlab.statespace import read_panel_csv, write_panel_csv

# the shipped fixture has the same layout as downloaded FRED csv files
print("series:", FRED_IDS)
print((fixture_dir() / "FEDFUNDS.csv").read_text().splitlines()[:3])

panel = ingest(fixture_dir())
print(len(panel), "quarters from", panel.dates[0], "to", panel.dates[-1])
print("columns:", panel.names)
print("sample means:", np.round(panel.values.mean(axis=0), 3))

# the interest rate is the quarterly average funds rate divided by four
print("first rate observations:", panel.values[:4, 6])

# hours under the alternative per-capita convention differ by a level shift
alt = ingest(fixture_dir(), hours="per-capita")
print("per-capita minus default hours (first rows):", np.round(alt.values[:3, 5] - panel.values[:3, 5], 3))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "panel.csv"
    write_panel_csv(panel, path)
    back = read_panel_csv(path)
    print("csv round trip exact:", np.array_equal(back.values, panel.values))

# a real snapshot is fetched with `swlab fetch --out-dir DIR` (needs FRED_API_KEY)
