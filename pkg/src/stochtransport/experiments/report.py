"""Experiment reports: verdicts plus named tabular series."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float
    tolerance: str
    n_samples: int
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={_fmt(self.value)} tolerance={self.tolerance} samples={self.n_samples}" + (
            f" ({self.detail})" if self.detail else "")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Series:
    """Columns of equal length, written in the given order."""

    name: str
    columns: Dict[str, list]

    def to_csv(self):
        cols = list(self.columns)
        n = {len(v) for v in self.columns.values()}
        if len(n) > 1:
            raise ValueError(f"series {self.name!r} has ragged columns")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(self.columns[c] for c in cols)):
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip form
    return str(v)


def _versions():
    import numpy
    import scipy

    from .. import __version__

    return {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
            "stochtransport": __version__}


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    series: List[Series] = field(default_factory=list)
    verdicts: List[Verdict] = field(default_factory=list)
    scalars: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def add_series(self, name, **columns):
        self.series.append(Series(name, {k: [_plain(x) for x in v] for k, v in columns.items()}))

    def verdict(self, name, passed, value, tolerance, n_samples, detail=""):
        v = Verdict(name, bool(passed), _plain(value), str(tolerance), int(n_samples), detail)
        self.verdicts.append(v)
        return v

    def get_series(self, name):
        for s in self.series:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "config": self.config,
            "verdicts": [vars(v) for v in self.verdicts],
            "scalars": {k: _plain(v) for k, v in sorted(self.scalars.items())},
            "series": [s.name + ".csv" for s in self.series],
            "notes": list(self.notes),
            "wall_clock_seconds": self.wall_clock,
            "versions": _versions(),
        }

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for s in self.series:
            path = os.path.join(out_dir, f"{self.experiment}__{s.name}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(s.to_csv())
            paths.append(path)
        path = os.path.join(out_dir, f"{self.experiment}__report.json")
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        paths.append(path)
        return paths

    def summary(self):
        return "\n".join(v.line() for v in self.verdicts)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    return x


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not serialisable: {type(o)}")
