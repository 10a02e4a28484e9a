"""Per-iteration metrics rows, their CSV files and the curve export.

A metrics file is::

    # manifest-sha256: <hex digest of the run's output-affecting config>
    seed,iteration,eval_env_return,mean_surrogate_return,sigma_r,disc_loss
    0,0,-123.5,...

Rows are appended and flushed one at a time, so every prefix of the file
parses. Wall-clock time is nondeterministic and goes to a sidecar
``timing.csv`` instead, keeping metrics files byte-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ParseError

METRIC_COLUMNS = ("seed", "iteration", "eval_env_return", "mean_surrogate_return", "sigma_r", "disc_loss")
VALUE_COLUMNS = METRIC_COLUMNS[2:]


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    iteration: int
    eval_env_return: float
    mean_surrogate_return: float
    sigma_r: float
    disc_loss: float
    wall_clock_s: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(getattr(self, c)) for c in VALUE_COLUMNS)

    def csv_line(self) -> str:
        vals = [str(self.seed), str(self.iteration)]
        vals += [format(getattr(self, c), ".17g") for c in VALUE_COLUMNS]
        return ",".join(vals)


class MetricsWriter:
    def __init__(self, path, digest: str = "", timing_path=None):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self._timing = Path(timing_path).open("w") if timing_path else None
        if digest:
            self._fh.write(f"# manifest-sha256: {digest}\n")
        self._fh.write(",".join(METRIC_COLUMNS) + "\n")
        self._fh.flush()
        if self._timing:
            self._timing.write("seed,iteration,wall_clock_s\n")
        self._last = None

    def __call__(self, row: MetricsRow):
        key = (row.seed, row.iteration)
        if self._last is not None and key <= self._last:
            raise InvalidArgument(f"metrics rows out of order: {key} after {self._last}")
        self._last = key
        self._fh.write(row.csv_line() + "\n")
        self._fh.flush()
        if self._timing:
            self._timing.write(f"{row.seed},{row.iteration},{row.wall_clock_s:.6f}\n")
            self._timing.flush()

    def close(self):
        self._fh.close()
        if self._timing:
            self._timing.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[MetricsRow]:
    """Parse a metrics file; an incomplete trailing line (crashed run) is dropped."""
    text = Path(path).read_text()
    lines = text.split("\n")
    complete = lines[:-1]   # the final element is '' for a fully written file
    rows = []
    header = None
    for line in complete:
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if tuple(header) != METRIC_COLUMNS:
                raise ParseError(f"{path}: unexpected header {line!r}")
            continue
        parts = line.split(",")
        if len(parts) != len(METRIC_COLUMNS):
            raise ParseError(f"{path}: malformed row {line!r}")
        try:
            rows.append(MetricsRow(int(parts[0]), int(parts[1]), *(float(x) for x in parts[2:])))
        except ValueError:
            raise ParseError(f"{path}: malformed row {line!r}") from None
    return rows


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian filter along axis 0 with edge-replicating boundaries."""
    from scipy.ndimage import gaussian_filter1d

    values = np.asarray(values, dtype=float)
    if sigma <= 0:
        return values.copy()
    return gaussian_filter1d(values, sigma, axis=0, mode="nearest")


def merge_series(paths) -> tuple[np.ndarray, dict]:
    """Stack per-seed metrics files on a shared iteration grid.

    Returns (iterations, {column: array of shape (n_files, n_iterations)}).
    """
    if not paths:
        raise InvalidArgument("need at least one metrics file")
    series = [(str(p), read_metrics(p)) for p in paths]
    grid = [r.iteration for r in series[0][1]]
    bad = [p for p, rows in series if [r.iteration for r in rows] != grid]
    if bad:
        raise InvalidArgument(f"iteration grids differ from {series[0][0]}: {', '.join(bad)}")
    cols = {c: np.array([[getattr(r, c) for r in rows] for _, rows in series]) for c in VALUE_COLUMNS}
    return np.array(grid), cols


def export_curves(paths, out_path, sigma: float = 5.0) -> None:
    """Write per-iteration mean and population std across seeds.

    Both curves are then smoothed by a Gaussian of ``sigma`` iterations
    (sigma=0 leaves them untouched).
    """
    iters, cols = merge_series(paths)
    header = ["iteration"]
    table = [iters.astype(float)]
    for c in VALUE_COLUMNS:
        header += [f"{c}_mean", f"{c}_std"]
        table += [gaussian_smooth(cols[c].mean(axis=0), sigma),
                  gaussian_smooth(cols[c].std(axis=0), sigma)]
    with Path(out_path).open("w") as fh:
        fh.write(f"# smoothing_sigma={sigma:g} n_series={len(paths)}\n")
        fh.write(",".join(header) + "\n")
        for k in range(len(iters)):
            vals = [str(int(iters[k]))] + [format(col[k], ".17g") for col in table[1:]]
            fh.write(",".join(vals) + "\n")
