"""Monthly multivariate panels: CSV IO and a synthetic TVP-VAR generator."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import months
from .errors import ConfigError, DataError

__all__ = ["TimeSeriesPanel", "load_panel", "save_panel", "SynthSpec", "synth_generate"]


@dataclass
class TimeSeriesPanel:
    dates: list
    values: np.ndarray
    names: list
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.dates = [months.to_label(months.to_index(d)) for d in self.dates]
        if self.values.shape != (len(self.dates), len(self.names)):
            raise DataError(f"values shape {self.values.shape} does not match "
                            f"{len(self.dates)} dates x {len(self.names)} series")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate series names")
        if not np.all(np.isfinite(self.values)):
            raise DataError("panel contains non-finite values")
        idx = [months.to_index(d) for d in self.dates]
        for a, b, d in zip(idx, idx[1:], self.dates[1:]):
            if b == a:
                raise DataError(f"duplicate date {d}")
            if b < a:
                raise DataError(f"dates not increasing at {d}")
            if b != a + 1:
                raise DataError(f"gap in dates: {months.to_label(a + 1)} missing before {d}")

    @property
    def T(self):
        return len(self.dates)

    @property
    def q(self):
        return len(self.names)

    def index_of(self, date):
        i = months.to_index(date) - months.to_index(self.dates[0])
        if not 0 <= i < self.T:
            raise DataError(f"date {date} outside panel {self.dates[0]}..{self.dates[-1]}")
        return i

    def window(self, start, end):
        i, j = self.index_of(start), self.index_of(end)
        return TimeSeriesPanel(self.dates[i:j + 1], self.values[i:j + 1], list(self.names),
                               dict(self.transforms))


def load_panel(path, transforms=None):
    """Read ``date,<name1>,...`` CSV into a validated panel."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read panel {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0].strip() != "date" or len(header) < 2:
            raise DataError(f"{path}: header must be 'date,<name1>,...'")
        names = [h.strip() for h in header[1:]]
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                months.to_index(row[0])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell in {row[1:]}") from None
            dates.append(row[0].strip())
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return TimeSeriesPanel(dates, np.array(rows), names, dict(transforms or {}))


def save_panel(panel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.names])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([d, *(repr(float(v)) for v in row)])


@dataclass
class SynthSpec:
    """TVP-VAR(1) data generator.

    ``y_t = c + A_t y_{t-1} + e_t``, ``A_t = A0 (1 + amp sin(2 pi t / period))``,
    ``e_t ~ N(0, diag(noise_sd^2))``, started at the stationary mean of A0.
    """

    n_series: int = 2
    start: str = "1986-01"
    n_obs: int = 360
    A0: np.ndarray = None
    intercept: np.ndarray = None
    noise_sd: np.ndarray = None
    amp: float = 0.2
    period: float = 120.0
    names: list = None

    def resolve(self):
        q = self.n_series
        A0 = np.asarray(self.A0 if self.A0 is not None else 0.6 * np.eye(q) + 0.1 * (1 - np.eye(q)) / max(q - 1, 1),
                        dtype=float)
        c = np.broadcast_to(np.asarray(self.intercept if self.intercept is not None else 0.5, dtype=float), (q,))
        sd = np.broadcast_to(np.asarray(self.noise_sd if self.noise_sd is not None else 0.3, dtype=float), (q,))
        names = list(self.names) if self.names is not None else [f"y{r + 1}" for r in range(q)]
        if A0.shape != (q, q) or len(names) != q:
            raise ConfigError("synthetic spec dimensions disagree with n_series")
        if self.n_obs < 2:
            raise ConfigError("synthetic panel needs at least two observations")
        if np.any(sd < 0):
            raise ConfigError("noise_sd must be nonnegative")
        return A0, np.array(c), np.array(sd), names


def synth_generate(spec, seed):
    """Reproducible panel from :class:`SynthSpec`; raises on an unstable DGP."""
    A0, c, sd, names = spec.resolve()
    q, T = spec.n_series, spec.n_obs
    t = np.arange(T)
    mod = 1.0 + spec.amp * np.sin(2.0 * np.pi * t / spec.period)
    rho = float(np.max(np.abs(np.linalg.eigvals(A0)))) * float(np.max(np.abs(mod)))
    if rho >= 1.0:
        raise ConfigError(f"unstable DGP: max spectral radius of A_t is {rho:.4f} >= 1")
    rng = np.random.default_rng(seed)
    Y = np.empty((T, q))
    prev = np.linalg.solve(np.eye(q) - A0, c)
    noise = rng.standard_normal((T, q)) * sd
    for i in range(T):
        prev = c + mod[i] * (A0 @ prev) + noise[i]
        Y[i] = prev
    if not np.all(np.isfinite(Y)):
        raise DataError(f"synthetic paths diverged (spectral radius {rho:.4f})")
    first = months.to_index(spec.start)
    return TimeSeriesPanel([months.to_label(first + i) for i in range(T)], Y, names)
