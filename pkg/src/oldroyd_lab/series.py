"""Time-stamped norm series and their CSV form (header ``t,label1,label2,...``)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class NormSeries:
    labels: list[str] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def append(self, t: float, values: dict[str, float]) -> None:
        if not self.labels:
            self.labels = list(values)
        elif list(values) != self.labels:
            raise ValueError(f"labels {list(values)} do not match series labels {self.labels}")
        if self.times and not t > self.times[-1]:
            raise ValueError(f"times must be strictly increasing ({t} after {self.times[-1]})")
        row = [float(values[k]) for k in self.labels]
        bad = [k for k, v in zip(self.labels, row) if not math.isfinite(v) or v < 0]
        if bad:
            raise ValueError(f"non-finite or negative values for {bad} at t={t}")
        self.times.append(float(t))
        self.rows.append(row)

    def column(self, label: str) -> np.ndarray:
        try:
            i = self.labels.index(label)
        except ValueError:
            raise KeyError(f"no series labelled {label!r}; have {self.labels}") from None
        return np.array([r[i] for r in self.rows])

    def t(self) -> np.ndarray:
        return np.array(self.times)

    def __contains__(self, label):
        return label in self.labels

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + self.labels)
        for t, row in zip(self.times, self.rows):
            w.writerow([fmt_float(t)] + [fmt_float(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "NormSeries":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("CSV header must start with 't'")
        s = cls(labels=header[1:])
        for row in reader:
            if not row:
                continue
            s.append(float(row[0]), dict(zip(s.labels, map(float, row[1:]))))
        return s
