"""Panel data model and the delimited-text schema it round-trips through.

One row per firm-period.  Output prices, quantities, productivity and the
ex-post shock are optional on disk: an external "revenue-only" file carries
inputs, input prices, revenue and target revenue shares, mirroring the
observability split that motivates the whole exercise (revenue observed,
prices and quantities not).

Floats are written with shortest round-trip formatting so that a write/read
cycle reproduces the in-memory panel bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "PanelFormatError",
    "FirmPeriod",
    "Panel",
    "COLUMNS",
    "OPTIONAL_COLUMNS",
    "read_panel_csv",
    "write_panel_csv",
]

COLUMNS = [
    "firm_id",
    "t",
    "K",
    "L",
    "M",
    "pL",
    "pM",
    "pK",
    "omega",
    "eps",
    "Q",
    "P",
    "R",
    "sL_star",
    "sM_star",
]

OPTIONAL_COLUMNS = {"omega", "eps", "Q", "P"}

# Columns that must be strictly positive when present.
_POSITIVE_COLUMNS = {"K", "L", "M", "pL", "pM", "pK", "Q", "P", "R", "sL_star", "sM_star"}

_INT_COLUMNS = {"firm_id", "t"}


class PanelFormatError(ValueError):
    """Raised when a panel file or in-memory panel violates the schema."""


@dataclass(frozen=True)
class FirmPeriod:
    """One firm-time observation.

    Qstar is planned output Q / exp(eps); the target revenue share of a
    flexible input V is pV*V divided by target revenue P * Qstar * cal_e,
    i.e. the share of ex-ante expected revenue spent on that input.  pK is
    carried as an observable but enters no equation.
    """

    firm_id: int
    t: int
    K: float
    L: float
    M: float
    pL: float
    pM: float
    pK: float
    omega: Optional[float]
    eps: Optional[float]
    Q: Optional[float]
    P: Optional[float]
    R: float
    sL_star: float
    sM_star: float

    @property
    def Qstar(self) -> Optional[float]:
        if self.Q is None or self.eps is None:
            return None
        return self.Q / np.exp(self.eps)


@dataclass
class Panel:
    """Column-oriented firm panel, sorted by (firm_id, t)."""

    data: dict
    config: object = None
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        cols = self.data
        missing = [c for c in COLUMNS if c not in cols and c not in OPTIONAL_COLUMNS]
        if missing:
            raise PanelFormatError(f"panel missing required columns: {missing}")
        lengths = {len(np.asarray(v)) for v in cols.values() if v is not None}
        if len(lengths) > 1:
            raise PanelFormatError(f"panel columns have unequal lengths: {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        self._n = n
        if n == 0:
            return
        fid = np.asarray(cols["firm_id"])
        t = np.asarray(cols["t"])
        order = np.lexsort((t, fid))
        if not np.array_equal(order, np.arange(n)):
            for c, v in cols.items():
                if v is not None:
                    cols[c] = np.asarray(v)[order]
            fid, t = cols["firm_id"], cols["t"]
        same_firm = fid[1:] == fid[:-1]
        if np.any(same_firm & (t[1:] == t[:-1])):
            raise PanelFormatError("duplicate (firm_id, t) rows")
        for c in _POSITIVE_COLUMNS:
            v = cols.get(c)
            if v is not None and (not np.all(np.isfinite(v)) or np.any(np.asarray(v) <= 0.0)):
                raise PanelFormatError(f"column {c} must be finite and strictly positive")
        for c in ("omega", "eps"):
            v = cols.get(c)
            if v is not None and not np.all(np.isfinite(v)):
                raise PanelFormatError(f"column {c} must be finite")

    def __len__(self) -> int:
        return self._n

    def col(self, name: str) -> Optional[np.ndarray]:
        return self.data.get(name)

    def has(self, name: str) -> bool:
        return self.data.get(name) is not None

    @property
    def qstar(self) -> np.ndarray:
        """Planned output Q / exp(eps); requires the Q and eps columns."""
        if not (self.has("Q") and self.has("eps")):
            raise PanelFormatError("Qstar requires the Q and eps columns")
        return self.data["Q"] / np.exp(self.data["eps"])

    @property
    def rstar(self) -> np.ndarray:
        """Planned revenue P * Qstar = R / exp(eps)."""
        if not self.has("eps"):
            raise PanelFormatError("Rstar requires the eps column")
        return self.data["R"] / np.exp(self.data["eps"])

    def row(self, i: int) -> FirmPeriod:
        d = self.data

        def get(c):
            v = d.get(c)
            return None if v is None else v[i]

        return FirmPeriod(
            firm_id=int(d["firm_id"][i]),
            t=int(d["t"][i]),
            K=float(d["K"][i]),
            L=float(d["L"][i]),
            M=float(d["M"][i]),
            pL=float(d["pL"][i]),
            pM=float(d["pM"][i]),
            pK=float(d["pK"][i]),
            omega=get("omega"),
            eps=get("eps"),
            Q=get("Q"),
            P=get("P"),
            R=float(d["R"][i]),
            sL_star=float(d["sL_star"][i]),
            sM_star=float(d["sM_star"][i]),
        )

    def lag_index(self):
        """Row indices (current, previous) for consecutive periods within a firm."""
        fid = self.data["firm_id"]
        t = self.data["t"]
        cur = np.arange(1, self._n)
        ok = (fid[cur] == fid[cur - 1]) & (t[cur] == t[cur - 1] + 1)
        cur = cur[ok]
        return cur, cur - 1


def _format_value(col: str, value) -> str:
    if col in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_panel_csv(panel: Panel, path) -> None:
    present = [c for c in COLUMNS if panel.has(c)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(present)
        for i in range(len(panel)):
            writer.writerow([_format_value(c, panel.data[c][i]) for c in present])


def read_panel_csv(path) -> Panel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file, expected a header row")
        unknown = [c for c in header if c not in COLUMNS]
        if unknown:
            raise PanelFormatError(f"{path}: unknown columns {unknown}")
        missing = [c for c in COLUMNS if c not in header and c not in OPTIONAL_COLUMNS]
        if missing:
            raise PanelFormatError(f"{path}: missing required columns {missing}")
        raw = {c: [] for c in header}
        for lineno, rowvals in enumerate(reader, start=2):
            if not rowvals:
                continue
            if len(rowvals) != len(header):
                raise PanelFormatError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(rowvals)}"
                )
            for c, v in zip(header, rowvals):
                try:
                    raw[c].append(int(v) if c in _INT_COLUMNS else float(v))
                except ValueError:
                    raise PanelFormatError(f"{path}: line {lineno}: field {c}={v!r} is not numeric")
    data = {}
    for c in COLUMNS:
        if c in raw:
            dtype = np.int64 if c in _INT_COLUMNS else float
            data[c] = np.asarray(raw[c], dtype=dtype)
        elif c in OPTIONAL_COLUMNS:
            data[c] = None
    try:
        return Panel(data=data)
    except PanelFormatError as exc:
        raise PanelFormatError(f"{path}: {exc}") from exc
