"""Change-point detection for piecewise-linear signals.

A univariate series is modelled as straight-line segments plus Gaussian
noise.  Candidate breaks are scored with a generalised likelihood-ratio
statistic (residual improvement of a two-segment fit over a single line,
in noise-variance units) and localised by scanning many random intervals,
always certifying a break with the narrowest interval that clears the
threshold.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Interval",
    "ChangePoint",
    "NotConfig",
    "estimate_sigma",
    "fit_linear_rss",
    "glr_statistic",
    "best_split",
    "auto_threshold",
    "detect_not",
]

logger = logging.getLogger(__name__)

#: smallest admissible noise scale; estimates below it are floored
SIGMA_FLOOR = 1e-8

#: residual gains below this fraction of the window's energy are round-off
_GAIN_GATE = 1e-11


@dataclass(frozen=True)
class Interval:
    """Index window of a series: rows [start, end) in 0-based positions.

    The same integer pair reads as the time interval (start, end] on the
    1-based time axis used by the linear fits.
    """

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid interval [{self.start}, {self.end})")

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ChangePoint:
    """A certified break: first index of the right-hand segment.

    ``interval`` is the window that certified it and ``glr`` the statistic
    value there.  ``dimension`` records which output channel the break was
    found in when detection runs per channel.
    """

    index: int
    interval: Interval
    glr: float
    dimension: int = 0

    def __post_init__(self):
        if not (self.interval.start + 2 <= self.index <= self.interval.end - 2):
            raise ValueError(
                f"index {self.index} leaves fewer than two points on one side "
                f"of [{self.interval.start}, {self.interval.end})"
            )
        if self.glr < 0:
            raise ValueError(f"glr must be >= 0, got {self.glr}")
        if self.dimension < 0:
            raise ValueError(f"dimension must be >= 0, got {self.dimension}")


@dataclass(frozen=True)
class NotConfig:
    """Settings for :func:`detect_not`.

    Parameters
    ----------
    num_intervals : int
        Random intervals drawn per series.
    threshold : float or "auto"
        Certification threshold for the statistic; "auto" resolves through
        :func:`auto_threshold` from the series length.
    min_segment_length : int
        Narrowest interval considered, >= 5.
    rng_seed : int
        Seed for the interval sampler.
    """

    num_intervals: int = 600
    threshold: float | str = "auto"
    min_segment_length: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_intervals < 1:
            raise ValueError(f"num_intervals must be >= 1, got {self.num_intervals}")
        if isinstance(self.threshold, str):
            if self.threshold != "auto":
                raise ValueError(f"threshold must be a number or 'auto', got {self.threshold!r}")
        elif not (float(self.threshold) > 0):
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.min_segment_length < 5:
            raise ValueError(
                f"min_segment_length must be >= 5, got {self.min_segment_length}"
            )
        if self.rng_seed < 0:
            raise ValueError(f"rng_seed must be >= 0, got {self.rng_seed}")

    def resolve_threshold(self, n: int) -> float:
        if isinstance(self.threshold, str):
            return auto_threshold(n)
        return float(self.threshold)


def _check_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"series must be 1-D, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")
    return y


def estimate_sigma(series) -> float:
    """Noise scale from second differences, robust to piecewise-linear trend.

    Second-differencing removes any straight-line component and leaves a
    combination of noise terms with variance 6 sigma^2, so the median
    absolute deviation of the differenced series, rescaled by 1.4826 for
    Gaussian consistency, is divided by sqrt(6).  Estimates below
    ``SIGMA_FLOOR`` are floored with a warning: downstream statistics
    divide by sigma^2 and a zero estimate would make them infinite.
    """
    y = _check_series(series)
    if y.size < 3:
        raise ValueError(f"need at least 3 points to estimate sigma, got {y.size}")
    d2 = np.diff(y, n=2)
    mad = np.median(np.abs(d2 - np.median(d2)))
    sigma = float(mad * 1.4826 / math.sqrt(6.0))
    if sigma < SIGMA_FLOOR:
        warnings.warn(
            f"noise estimate {sigma:.3g} below floor {SIGMA_FLOOR:.0e}; "
            "series is (near-)noiseless, flooring sigma",
            stacklevel=2,
        )
        sigma = SIGMA_FLOOR
    return sigma


class _SegmentStats:
    """O(1) least-squares residuals for any window of one series.

    Prefix sums over the series allow the residual sum of squares of a
    straight-line fit on rows [a, b) to be evaluated in closed form.  The
    time axis is centred per window before solving, which keeps the
    normal equations well conditioned far from the origin; the slope is
    unchanged and the intercept is mapped back to absolute coordinates.
    """

    def __init__(self, y: np.ndarray):
        n = y.size
        # time axis is 1-based: row at position i carries time i+1, so a
        # window [a, b) spans times a+1 .. b and intercepts refer to time 0
        t = np.arange(1, n + 1, dtype=float)
        zero = np.zeros(1)
        self.c_y = np.concatenate([zero, np.cumsum(y)])
        self.c_ty = np.concatenate([zero, np.cumsum(t * y)])
        self.c_yy = np.concatenate([zero, np.cumsum(y * y)])
        self.n = n

    def fit(self, a, b):
        """Centred-slope fit on [a, b); vectorised over array endpoints.

        Returns (slope, mean_t, mean_y, rss).  Windows of width 1 get a
        zero slope and zero residual.
        """
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        m = (b - a).astype(float)
        s_y = self.c_y[b] - self.c_y[a]
        s_ty = self.c_ty[b] - self.c_ty[a]
        s_yy = self.c_yy[b] - self.c_yy[a]
        t_bar = (a + b + 1) / 2.0
        y_bar = s_y / m
        # centred cross moments; sum of squared centred integers is exact
        sty_c = s_ty - t_bar * s_y
        stt_c = m * (m * m - 1.0) / 12.0
        syy_c = s_yy - s_y * y_bar
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(m >= 2, sty_c / np.where(stt_c > 0, stt_c, 1.0), 0.0)
        rss = np.maximum(syy_c - slope * sty_c, 0.0)
        rss = np.where(m >= 2, rss, 0.0)
        return slope, t_bar, y_bar, rss

    def rss(self, a, b):
        return self.fit(a, b)[3]


def _local_fit(y, start, end):
    """Two-pass centred least squares on rows [start, end).

    Working on the extracted window with centred local times keeps the
    residual accurate relative to the window's own scale, which the
    global prefix sums cannot guarantee deep into a long series.
    Returns (intercept_at_time_zero, slope, rss).
    """
    seg = y[start:end]
    m = seg.size
    t_loc = np.arange(1.0, m + 1.0)
    y_bar = seg.mean()
    yc = seg - y_bar
    tc = t_loc - (m + 1.0) / 2.0
    stt = m * (m * m - 1.0) / 12.0
    sty = float(tc @ yc)
    slope = sty / stt if m >= 2 and stt > 0 else 0.0
    rss = max(float(yc @ yc) - slope * sty, 0.0)
    # absolute time of local step t is start + t
    intercept = y_bar - slope * (m + 1.0) / 2.0 - slope * start
    return float(intercept), float(slope), rss


def fit_linear_rss(series, start, end):
    """Least-squares line on rows [start, end) of a series.

    The regression time axis is 1-based (row at position i has time i+1),
    so the returned intercept is the line's value one step before the
    first series row.

    Returns
    -------
    (intercept, slope, rss) : tuple of float
    """
    y = _check_series(series)
    if not (0 <= start < end <= y.size):
        raise ValueError(f"window [{start}, {end}) out of range for {y.size} rows")
    if end - start < 2:
        raise ValueError("need at least 2 points to fit a line")
    return _local_fit(y, start, end)


def glr_statistic(series, start, end, split, sigma) -> float:
    """Residual improvement of splitting [start, end) at ``split``.

    The split index is the first row of the right-hand segment and must
    leave at least two rows on each side.  The improvement is measured in
    units of sigma^2; tiny negatives from round-off are clamped to zero.
    """
    y = _check_series(series)
    if not (0 <= start < end <= y.size):
        raise ValueError(f"window [{start}, {end}) out of range for {y.size} rows")
    if not (start + 2 <= split <= end - 2):
        raise ValueError(
            f"split {split} must lie in [{start + 2}, {end - 2}] "
            f"to leave two points per side"
        )
    if not (sigma > 0):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    seg = y[start:end]
    gain = (
        _local_fit(y, start, end)[2]
        - _local_fit(y, start, split)[2]
        - _local_fit(y, split, end)[2]
    )
    # gains at or below double-precision resolution of the window energy are
    # round-off, exactly like the negatives clamped below
    if gain <= _GAIN_GATE * (float(seg @ seg) + 1.0):
        gain = 0.0
    return max(gain, 0.0) / (sigma * sigma)


def best_split(series, start, end, sigma):
    """Highest-scoring split of [start, end); ties go to the smallest index.

    Returns
    -------
    (split, glr) : tuple of (int, float)
    """
    y = _check_series(series)
    if not (0 <= start < end <= y.size):
        raise ValueError(f"window [{start}, {end}) out of range for {y.size} rows")
    if end - start < 5:
        raise ValueError(
            f"window [{start}, {end}) too short to split: need at least 5 rows"
        )
    if not (sigma > 0):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    stats = _SegmentStats(y)
    return _best_split(stats, start, end, sigma)


def _best_split(stats, start, end, sigma):
    cands = np.arange(start + 2, end - 1)
    total = stats.rss(np.array([start]), np.array([end]))[0]
    gains = total - stats.rss(np.full_like(cands, start), cands) - stats.rss(cands, np.full_like(cands, end))
    gate = _GAIN_GATE * (float(stats.c_yy[end] - stats.c_yy[start]) + 1.0)
    gains = np.where(gains > gate, gains, 0.0)
    k = int(np.argmax(gains))  # first occurrence wins ties
    return int(cands[k]), float(gains[k]) / (sigma * sigma)


def auto_threshold(n: int, scale: float = 1.3) -> float:
    """Length-adaptive certification threshold, 2 * scale^2 * log(n).

    The statistic is a residual-gain ratio, i.e. on the squared scale of a
    Gaussian maximum, so the classic sqrt(2 log n) universal level for the
    signal scale turns into 2 log n here; ``scale`` adds headroom against
    the multiplicity of scanned intervals and splits.  Calibrated so pure
    noise of length 10^4 scanned with 1000 intervals yields no detection
    in at least 95 of 100 runs.
    """
    if n < 2:
        raise ValueError(f"series length must be >= 2, got {n}")
    return 2.0 * scale * scale * math.log(n)


def _sample_intervals(rng, n, min_len, count):
    """``count`` random windows [s, e) with e - s >= min_len, rejection-sampled."""
    out_s = []
    out_e = []
    got = 0
    while got < count:
        draw = max(64, 2 * (count - got))
        a = rng.integers(0, n + 1, size=draw)
        b = rng.integers(0, n + 1, size=draw)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        ok = hi - lo >= min_len
        lo, hi = lo[ok], hi[ok]
        take = min(count - got, lo.size)
        out_s.append(lo[:take])
        out_e.append(hi[:take])
        got += take
    return np.concatenate(out_s), np.concatenate(out_e)


def detect_not(series, config: NotConfig, dimension: int = 0):
    """Localise breaks of a piecewise-linear signal by random-interval scan.

    Every sampled interval is scored at its best split; intervals whose
    statistic clears the threshold become certificates.  Breaks are then
    accepted narrowest-certificate-first (ties: higher statistic, then
    smaller index).  Each acceptance retires every certificate whose row
    window contains the accepted index, and every certificate whose split
    lies within ``min_segment_length`` of it (segments that short are
    inadmissible), so one physical break cannot be reported twice.

    Returns
    -------
    list of ChangePoint, sorted by index.
    """
    y = _check_series(series)
    n = y.size
    if n < 2 * config.min_segment_length:
        raise ValueError(
            f"series of length {n} too short: need at least "
            f"{2 * config.min_segment_length} rows"
        )
    sigma = estimate_sigma(y)
    zeta = config.resolve_threshold(n)
    rng = np.random.default_rng(config.rng_seed)
    starts, ends = _sample_intervals(
        rng, n, config.min_segment_length, config.num_intervals
    )
    stats = _SegmentStats(y)
    certs = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        if e - s < 4:
            continue
        c, g = _best_split(stats, s, e, sigma)
        if g > zeta:
            certs.append((e - s, -g, c, s, e))
    logger.debug(
        "detect_not: %d/%d intervals certified at threshold %.3f",
        len(certs), config.num_intervals, zeta,
    )
    accepted = []
    certs.sort()
    min_gap = config.min_segment_length
    while certs:
        width, neg_g, c, s, e = certs[0]
        accepted.append(ChangePoint(c, Interval(s, e), -neg_g, dimension))
        # retire certificates explained by the accepted break: those whose row
        # window contains it, plus those whose split sits closer than one
        # admissible segment (two breaks that near violate min_segment_length)
        certs = [
            cert
            for cert in certs
            if not (cert[3] <= c < cert[4]) and abs(cert[2] - c) >= min_gap
        ]
    accepted.sort(key=lambda cp: cp.index)
    # defensive: identical indices cannot survive the retirement loop
    dedup = []
    for cp in accepted:
        if not dedup or cp.index != dedup[-1].index:
            dedup.append(cp)
    return dedup
