"""FRED series to the seven-column observable panel.

Nine raw series are read from one CSV each (FRED's download format), monthly
series are averaged to quarters, and the panel is built as::

    pop_t  = CNP16OV_t / CNP16OV_2012Q3          emp_t = CE16OV_t / CE16OV_2012Q3
    y_t    = 100 ln(GDPC1_t / pop_t)
    c_t    = 100 ln(PCEC_t / GDPDEF_t / pop_t)
    i_t    = 100 ln(FPI_t / GDPDEF_t / pop_t)
    l_t    = 100 ln(PRS85006023_t / emp_t / pop_t)
    pi_t   = 100 ln(GDPDEF_t / GDPDEF_{t-1})
    w_t    = 100 ln(COMPNFB_t / GDPDEF_t)
    r_t    = FEDFUNDS_t / 4

with y, c, i, w entering as first differences. The first quarter of the
window is consumed by differencing.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingInWindowError, NonpositiveError, ParseError, WindowShortError
from .model import OBS_LABELS
from .statespace import TimeSeriesPanel

FRED_IDS = ("GDPC1", "GDPDEF", "PCEC", "FPI", "CE16OV", "FEDFUNDS", "CNP16OV", "PRS85006023", "COMPNFB")
MONTHLY_IDS = ("FEDFUNDS", "CE16OV", "CNP16OV")
LOG_IDS = tuple(i for i in FRED_IDS if i != "FEDFUNDS")
NORMALIZATION_QUARTER = (2012, 3)
DEFAULT_WINDOW = ((1956, 1), (2018, 4))
MISSING = "."


def parse_quarter(text: str) -> tuple[int, int]:
    """``"1956Q1"`` or an ISO date -> ``(year, quarter)``."""
    text = text.strip()
    try:
        if "Q" in text.upper():
            y, q = text.upper().split("Q")
            out = int(y), int(q)
        else:
            d = dt.date.fromisoformat(text)
            out = d.year, (d.month - 1) // 3 + 1
    except ValueError as exc:
        raise ParseError(f"cannot parse quarter {text!r}") from exc
    if not 1 <= out[1] <= 4:
        raise ParseError(f"cannot parse quarter {text!r}")
    return out


def quarter_label(q: tuple[int, int]) -> str:
    return f"{q[0]}Q{q[1]}"


def quarter_start(q: tuple[int, int]) -> str:
    return dt.date(q[0], 3 * (q[1] - 1) + 1, 1).isoformat()


def _qindex(q):
    return 4 * q[0] + q[1] - 1


@dataclass(frozen=True)
class RawSeries:
    """One FRED series at quarterly frequency; missing quarters are NaN."""

    fred_id: str
    quarters: tuple
    values: np.ndarray

    def __post_init__(self):
        idx = [_qindex(q) for q in self.quarters]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParseError(f"{self.fred_id}: dates are not strictly increasing")
        if len(self.values) != len(self.quarters):
            raise ParseError(f"{self.fred_id}: dates and values differ in length")

    def slice(self, start, stop) -> np.ndarray:
        """Values for quarters ``start..stop`` inclusive; raises if not covered."""
        pos = {q: i for i, q in enumerate(self.quarters)}
        i0, i1 = pos.get(tuple(start)), pos.get(tuple(stop))
        if i0 is None or i1 is None or i1 - i0 != _qindex(stop) - _qindex(start):
            raise WindowShortError(f"{self.fred_id} does not cover {quarter_label(start)}..{quarter_label(stop)}")
        return self.values[i0:i1 + 1]

    def at(self, q) -> float:
        return float(self.slice(q, q)[0])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) != 2 or header[0].upper() not in ("DATE", "OBSERVATION_DATE"):
        raise ParseError(f"{path}: expected header DATE,<ID> but got {','.join(header)}")
    return header[1], rows[1:]


def load_fred_csv(path, fred_id: str | None = None, window=None) -> RawSeries:
    """Read a FRED CSV and return quarterly values.

    Parameters
    ----------
    path : path-like
        Two columns, ``DATE,<ID>`` (or ``observation_date,<ID>`` or
        ``DATE,VALUE``); ``.`` marks a missing observation.
    fred_id : str, optional
        Overrides the id taken from the header (required for ``VALUE``).
    window : pair of quarters, optional
        If given, missing or (for logged series) nonpositive values inside
        it raise.

    Monthly rows are averaged within each quarter; a quarter with any
    missing month is missing.
    """
    col, rows = _read_rows(path)
    sid = fred_id or col
    if sid.upper() == "VALUE":
        sid = Path(path).stem.upper()
    dates, vals = [], []
    for r in rows:
        if len(r) != 2:
            raise ParseError(f"{path}: malformed row {r!r}")
        try:
            d = dt.date.fromisoformat(r[0].strip())
        except ValueError as exc:
            raise ParseError(f"{path}: bad date {r[0]!r}") from exc
        v = r[1].strip()
        if v == MISSING or v == "":
            x = math.nan
        else:
            try:
                x = float(v)
            except ValueError as exc:
                raise ParseError(f"{path}: bad value {v!r}") from exc
        dates.append(d)
        vals.append(x)
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ParseError(f"{path}: dates are not strictly increasing")

    quarters, qvals = [], []
    if all(d.month in (1, 4, 7, 10) and d.day == 1 for d in dates) and _spacing(dates) == 3:
        quarters = [(d.year, (d.month - 1) // 3 + 1) for d in dates]
        qvals = vals
    else:
        if _spacing(dates) != 1:
            raise ParseError(f"{path}: rows are neither monthly nor quarterly")
        groups: dict = {}
        for d, x in zip(dates, vals):
            groups.setdefault((d.year, (d.month - 1) // 3 + 1), []).append(x)
        for q, xs in groups.items():
            quarters.append(q)
            qvals.append(math.fsum(xs) / 3.0 if len(xs) == 3 else math.nan)
    raw = RawSeries(sid, tuple(quarters), np.array(qvals, dtype=float))
    if window is not None:
        check_window(raw, window)
    return raw


def _spacing(dates) -> int:
    if len(dates) < 2:
        return 3 if dates and dates[0].month in (1, 4, 7, 10) else 1
    steps = {(b.year - a.year) * 12 + b.month - a.month for a, b in zip(dates, dates[1:])}
    return steps.pop() if len(steps) == 1 else -1


def check_window(raw: RawSeries, window) -> np.ndarray:
    start, stop = (tuple(parse_quarter(w)) if isinstance(w, str) else tuple(w) for w in window)
    vals = raw.slice(start, stop)
    if np.isnan(vals).any():
        bad = [quarter_label(q) for q, v in zip(_quarters(start, stop), vals) if math.isnan(v)]
        raise MissingInWindowError(f"{raw.fred_id}: missing values at {', '.join(bad[:5])}")
    if raw.fred_id in LOG_IDS and np.any(vals <= 0):
        raise NonpositiveError(f"{raw.fred_id}: nonpositive values inside the window")
    return vals


def _quarters(start, stop):
    out = []
    q = tuple(start)
    while _qindex(q) <= _qindex(stop):
        out.append(q)
        q = (q[0] + 1, 1) if q[1] == 4 else (q[0], q[1] + 1)
    return out


HOURS_CONVENTIONS = ("appendix", "per-capita")


def build_panel(raw, window=DEFAULT_WINDOW, hours: str = "appendix") -> TimeSeriesPanel:
    """Seven-series panel from the nine raw series.

    Parameters
    ----------
    raw : mapping of FRED id -> RawSeries (or iterable of RawSeries)
    window : (start, stop) quarters, inclusive
        The first quarter only feeds the differences, so a window of N
        quarters yields N - 1 rows.
    hours : {"appendix", "per-capita"}
        ``"appendix"`` applies the hours formula as written above.
        ``"per-capita"`` uses ``100 ln(PRS85006023_t / 100 * emp_t / pop_t)``,
        average hours times the employment rate, which keeps hours near zero
        on real FRED data (the printed formula puts them near 460).

    Raises
    ------
    WindowShortError
        A series does not cover the window or the normalisation quarter, or
        the window has fewer than two quarters.
    MissingInWindowError, NonpositiveError
    """
    if not isinstance(raw, dict):
        raw = {r.fred_id: r for r in raw}
    missing = [i for i in FRED_IDS if i not in raw]
    if missing:
        raise WindowShortError(f"missing series: {', '.join(missing)}")
    start, stop = (tuple(parse_quarter(w)) if isinstance(w, str) else tuple(w) for w in window)
    if _qindex(stop) - _qindex(start) < 1:
        raise WindowShortError("window must span at least two quarters")
    s = {i: check_window(raw[i], (start, stop)) for i in FRED_IDS}
    pop_ref = raw["CNP16OV"].at(NORMALIZATION_QUARTER)
    emp_ref = raw["CE16OV"].at(NORMALIZATION_QUARTER)
    if not (pop_ref > 0 and emp_ref > 0):
        raise NonpositiveError("normalisation quarter values must be positive")

    pop = s["CNP16OV"] / pop_ref
    emp = s["CE16OV"] / emp_ref
    defl = s["GDPDEF"]
    y = 100.0 * np.log(s["GDPC1"] / pop)
    c = 100.0 * np.log(s["PCEC"] / defl / pop)
    i = 100.0 * np.log(s["FPI"] / defl / pop)
    if hours == "appendix":
        l = 100.0 * np.log(s["PRS85006023"] / emp / pop)
    elif hours == "per-capita":
        l = 100.0 * np.log(s["PRS85006023"] / 100.0 * emp / pop)
    else:
        raise ValueError(f"hours must be one of {HOURS_CONVENTIONS}")
    pi = 100.0 * np.log(defl[1:] / defl[:-1])
    w = 100.0 * np.log(s["COMPNFB"] / defl)
    r = s["FEDFUNDS"] / 4.0

    values = np.column_stack([np.diff(y), np.diff(c), np.diff(i), np.diff(w), pi, l[1:], r[1:]])
    dates = tuple(quarter_start(q) for q in _quarters(start, stop)[1:])
    return TimeSeriesPanel(OBS_LABELS, values, dates)


def load_fred_dir(directory, window=DEFAULT_WINDOW) -> dict:
    """Load ``<ID>.csv`` for each of the nine series from ``directory``."""
    directory = Path(directory)
    out = {}
    for sid in FRED_IDS:
        path = directory / f"{sid}.csv"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found")
        out[sid] = load_fred_csv(path, fred_id=sid)
    return out


def ingest(directory, window=DEFAULT_WINDOW, hours: str = "appendix") -> TimeSeriesPanel:
    return build_panel(load_fred_dir(directory), window, hours)


FRED_API = "https://api.stlouisfed.org/fred/series/observations"


def fetch_fred(out_dir, ids=FRED_IDS, api_key: str | None = None, opener=urllib.request.urlopen) -> list:
    """Download the series as ``<ID>.csv`` files through the FRED web API.

    The key comes from ``api_key`` or the ``FRED_API_KEY`` environment
    variable. Returns the written paths.
    """
    key = api_key or os.environ.get("FRED_API_KEY")
    if not key:
        raise ValueError("set FRED_API_KEY to download from FRED")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for sid in ids:
        query = urllib.parse.urlencode({"series_id": sid, "api_key": key, "file_type": "json"})
        with opener(f"{FRED_API}?{query}") as resp:
            doc = json.loads(resp.read().decode("utf-8"))
        path = out_dir / f"{sid}.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["DATE", sid])
            for obs in doc["observations"]:
                wr.writerow([obs["date"], obs["value"]])
        written.append(path)
    return written


# --------------------------------------------------------------------------- synthetic fixture

def fixture_dir() -> Path:
    """Directory of the shipped synthetic FRED-format CSVs (1950Q1-2018Q4)."""
    from importlib import resources

    return Path(str(resources.files("swlab") / "resources" / "fred_fixture"))


def _months(q0, q1):
    out = []
    for y, q in _quarters(q0, q1):
        out.extend(dt.date(y, 3 * (q - 1) + m, 1) for m in (1, 2, 3))
    return out


def write_synthetic_fixture(out_dir, theta=None, seed: int = 19560101, first=(1950, 1), last=(2018, 4)) -> Path:
    """Write nine FRED-format CSVs whose panel is a draw from the model.

    Observables are simulated at ``theta`` (default: the tabulated posterior
    mode) and converted back to levels with the inverse of the panel
    transforms. Values are rounded as FRED prints them, so the ingested
    panel matches the draw to about 1e-3. PCEC has a missing marker in the
    first quarter (outside the default window) and FEDFUNDS starts in July
    1954, as the real series does.
    """
    from . import params
    from .model import solve
    from .statespace import simulate

    theta = params.posterior_mode() if theta is None else np.asarray(theta, float)
    ss, _, _ = solve(theta)
    if ss is None:
        raise ValueError("model has no unique stable solution at theta")
    qs = _quarters(first, last)
    n = len(qs)
    obs = simulate(ss, n, burn_in=1000, seed=seed).values
    rng = np.random.default_rng(seed + 1)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    months = _months(first, last)
    t = np.arange(len(months))
    pop_m = np.round(103000.0 * np.exp(0.0011 * t + 0.0004 * rng.standard_normal(t.size).cumsum() * 0.1), 0)
    emp_m = np.round(0.58 * pop_m * np.exp(0.01 * np.sin(t / 30.0)), 0)
    ff_q = 4.0 * obs[:, 6]
    ff_m = np.round(np.repeat(ff_q, 3) + np.tile([-0.05, 0.0, 0.05], n), 2)

    def qmean(x):
        return np.array([math.fsum(x[3 * k:3 * k + 3]) / 3.0 for k in range(n)])

    iq = qs.index(NORMALIZATION_QUARTER)
    pop = qmean(pop_m) / qmean(pop_m)[iq]
    emp = qmean(emp_m) / qmean(emp_m)[iq]
    cum = np.cumsum(obs[:, :4], axis=0)  # log levels of y, c, i, w (x100) up to a constant
    logp = np.cumsum(obs[:, 4]) / 100.0
    logp += math.log(100.0) - logp[iq]
    defl = np.exp(logp)
    gdp = pop * np.exp((cum[:, 0] - cum[iq, 0]) / 100.0) * 16000.0
    pcec = defl / 100.0 * pop * np.exp((cum[:, 1] - cum[iq, 1]) / 100.0) * 11000.0
    fpi = defl / 100.0 * pop * np.exp((cum[:, 2] - cum[iq, 2]) / 100.0) * 2700.0
    comp = defl * np.exp((cum[:, 3] - cum[iq, 3]) / 100.0)
    prs = emp * pop * np.exp(obs[:, 5] / 100.0)

    qdates = [quarter_start(q) for q in qs]
    quarterly = {
        "GDPC1": (gdp, 3), "GDPDEF": (defl, 3), "PCEC": (pcec, 3), "FPI": (fpi, 3),
        "PRS85006023": (prs, 7), "COMPNFB": (comp, 3),
    }
    header_col = {"GDPC1": "DATE", "GDPDEF": "observation_date", "PCEC": "DATE", "FPI": "observation_date",
                  "PRS85006023": "DATE", "COMPNFB": "observation_date", "CE16OV": "DATE",
                  "CNP16OV": "observation_date", "FEDFUNDS": "DATE"}

    def write(sid, dates, values, digits, missing_at=()):
        with open(out_dir / f"{sid}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([header_col[sid], sid])
            for k, (d, v) in enumerate(zip(dates, values)):
                w.writerow([d, MISSING if k in missing_at else f"{v:.{digits}f}"])

    for sid, (vals, digits) in quarterly.items():
        write(sid, qdates, vals, digits, missing_at=(0,) if sid == "PCEC" else ())
    mdates = [m.isoformat() for m in months]
    write("CNP16OV", mdates, pop_m, 0)
    write("CE16OV", mdates, emp_m, 0)
    k0 = mdates.index("1954-07-01")
    write("FEDFUNDS", mdates[k0:], ff_m[k0:], 2)
    return out_dir
