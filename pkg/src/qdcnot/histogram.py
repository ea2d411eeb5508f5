"""Coincidence histograms and the start-stop correlator that fills them."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

PAIR_CHUNK = 100_000


@dataclass(frozen=True)
class CorrelationHistogram:
    """Counts of pairwise delays ``t_b - t_a`` in bins ``[k w, (k+1) w)``.

    Bin edges sit on multiples of the bin width, so a window whose half-width
    is a multiple of it covers whole bins exactly.
    """

    bin_width: float  # ps
    centers: np.ndarray  # ps
    counts: np.ndarray
    input_state: str = ""
    output_pair: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        if len(self.centers) != len(self.counts):
            raise ValueError("centers and counts differ in length")
        if np.any(np.asarray(self.counts) < 0):
            raise ValueError("negative counts")

    @classmethod
    def empty(cls, bin_width: float, span_ps: float, **labels) -> "CorrelationHistogram":
        k = int(np.floor(span_ps / bin_width + 1e-9))
        centers = (np.arange(-k, k) + 0.5) * float(bin_width)
        return cls(float(bin_width), centers, np.zeros(len(centers), dtype=np.int64), **labels)

    @property
    def span(self) -> tuple[float, float]:
        half = 0.5 * self.bin_width
        return float(self.centers[0] - half), float(self.centers[-1] + half)

    @property
    def total(self) -> float:
        return float(np.sum(self.counts))

    def __add__(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        if self.bin_width != other.bin_width or not np.array_equal(self.centers, other.centers):
            raise ValueError("histograms have different binning")
        return replace(self, counts=self.counts + other.counts)

    def window_mask(self, lo: float, hi: float) -> np.ndarray:
        """Bins lying entirely inside ``[lo, hi]``."""
        eps = 1e-6 * self.bin_width
        half = 0.5 * self.bin_width
        return (self.centers - half >= lo - eps) & (self.centers + half <= hi + eps)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center_ps", "counts"])
            integer = np.issubdtype(np.asarray(self.counts).dtype, np.integer)
            for c, n in zip(self.centers, self.counts):
                w.writerow([f"{c:g}", int(n) if integer else f"{n:.10g}"])

    @classmethod
    def from_csv(cls, path, **labels) -> "CorrelationHistogram":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        centers, counts = data[:, 0], data[:, 1]
        if np.all(counts == np.round(counts)):
            counts = counts.astype(np.int64)
        if len(centers) < 2:
            raise ValueError(f"{path}: need at least two bins")
        widths = np.diff(centers)
        if not np.allclose(widths, widths[0]):
            raise ValueError(f"{path}: bins are not uniform")
        if "input_state" not in labels and "output_pair" not in labels:
            labels = _labels_from_name(Path(path).stem)
        return cls(float(widths[0]), centers, counts, **labels)


def _labels_from_name(stem: str) -> dict:
    # files written by the CLI are named hist_<input>_<output>.csv
    parts = stem.split("_")
    if len(parts) == 3 and parts[0] == "hist":
        return {"input_state": parts[1], "output_pair": parts[2]}
    return {}


def correlate(
    stream_a: np.ndarray, stream_b: np.ndarray, bin_width: float, span_ns: float, **labels
) -> CorrelationHistogram:
    """Histogram every delay ``t_b - t_a`` within ``+-span_ns`` (start-multi-stop)."""
    hist = CorrelationHistogram.empty(bin_width, span_ns * 1e3, **labels)
    a = np.asarray(stream_a, dtype=np.int64)
    b = np.asarray(stream_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return hist
    if np.any(np.diff(a) < 0) or np.any(np.diff(b) < 0):
        raise ValueError("time-tag streams must be sorted")
    k = len(hist.centers) // 2
    reach = k * bin_width
    counts = np.zeros(len(hist.centers), dtype=np.int64)
    lo_all = np.searchsorted(b, a - reach, side="left")
    hi_all = np.searchsorted(b, a + reach, side="right")
    for start in range(0, a.size, PAIR_CHUNK):
        sl = slice(start, start + PAIR_CHUNK)
        lo, hi, ta = lo_all[sl], hi_all[sl], a[sl]
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        idx = np.repeat(lo, n) + offsets
        delays = b[idx] - np.repeat(ta, n)
        bins = np.floor(delays / bin_width).astype(np.int64) + k
        ok = (bins >= 0) & (bins < counts.size)
        counts += np.bincount(bins[ok], minlength=counts.size)
    return replace(hist, counts=counts)
