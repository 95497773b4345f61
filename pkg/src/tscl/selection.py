"""Cross-channel selection of replay representatives.

Change points are detected per output channel, pooled, and thinned: when
two candidates from different channels sit within the proximity distance,
the own channel's data decides whether the foreign point adds anything.
Splitting the common window at the own index versus the foreign index
gives two likelihood-ratio values; if swapping the split costs less than
a threshold, the foreign point is redundant and dropped.  Surviving
indices become replay windows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .changepoint import NotConfig, detect_not, estimate_sigma, glr_statistic
from .core import MemoryBuffer, tde_window

__all__ = [
    "RepresentativeCandidate",
    "SelectionConfig",
    "select_per_dimension",
    "concatenate_candidates",
    "glr_difference",
    "proximal_filter",
    "proximal_filter_audit",
    "build_representatives",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RepresentativeCandidate:
    """A pooled change-point candidate.

    ``source_dim`` is the output channel whose detection produced it and
    ``glr_own`` the statistic it scored there.
    """

    index: int
    source_dim: int
    glr_own: float

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"index must be >= 0, got {self.index}")
        if self.source_dim < 0:
            raise ValueError(f"source_dim must be >= 0, got {self.source_dim}")
        if self.glr_own < 0:
            raise ValueError(f"glr_own must be >= 0, got {self.glr_own}")


@dataclass(frozen=True)
class SelectionConfig:
    """Settings for the selection pipeline.

    ``d_multi`` is the proximity distance in samples: candidates closer
    than d_multi/2 from different channels compete.  It must be at least
    twice the detector's minimum segment length so the comparison window
    can hold two linear fits on either side.
    """

    d_multi: int = 20
    glr_diff_threshold: float = 2.0
    not_config: NotConfig = field(default_factory=NotConfig)

    def __post_init__(self):
        if self.d_multi < 2 * self.not_config.min_segment_length:
            raise ValueError(
                f"d_multi {self.d_multi} must be >= twice the minimum segment "
                f"length ({2 * self.not_config.min_segment_length})"
            )
        if not (self.glr_diff_threshold >= 0):
            raise ValueError(
                f"glr_diff_threshold must be >= 0, got {self.glr_diff_threshold}"
            )


def select_per_dimension(dataset, config: SelectionConfig):
    """Run change-point detection on every output channel independently.

    Returns a list of q lists; list i holds channel i's points tagged
    ``dimension = i``.  Every channel uses the same detector settings and
    seed, so identical channels yield identical lists.
    """
    per_dim = []
    for i in range(dataset.q):
        try:
            per_dim.append(detect_not(dataset.outputs[:, i], config.not_config, dimension=i))
        except ValueError as exc:
            raise ValueError(f"output dimension {i}: {exc}") from exc
    return per_dim


def concatenate_candidates(per_dim) -> list:
    """Pool per-channel change points, collapsing duplicate indices.

    A duplicated index keeps the entry with the largest glr (ties: the
    smaller channel), so provenance always names the strongest detection.
    """
    best: dict[int, RepresentativeCandidate] = {}
    for points in per_dim:
        for cp in points:
            cand = RepresentativeCandidate(cp.index, cp.dimension, cp.glr)
            held = best.get(cp.index)
            if (
                held is None
                or cand.glr_own > held.glr_own
                or (cand.glr_own == held.glr_own and cand.source_dim < held.source_dim)
            ):
                best[cp.index] = cand
    return [best[i] for i in sorted(best)]


def _window_glr_pair(column, start, end, k, g, sigma):
    own = glr_statistic(column, start, end, k, sigma)
    foreign = glr_statistic(column, start, end, g, sigma)
    return own - foreign


def glr_difference(dataset, k: int, g: int, dim: int, d_multi: int, sigma=None) -> float:
    """Cost of splitting at the foreign index instead of the own one.

    Both likelihood-ratio statistics are evaluated on output channel
    ``dim`` over the common symmetric window spanning d_multi/2 beyond
    the two indices; the result is (value at k) - (value at g) and may be
    negative when the foreign index is the better split.

    ``sigma`` overrides the channel's estimated noise scale (used by the
    filter to avoid re-estimating per pair).
    """
    if not (0 <= dim < dataset.q):
        raise ValueError(f"dim {dim} out of range for {dataset.q} output channels")
    half = d_multi // 2
    if abs(k - g) > half:
        raise ValueError(
            f"indices {k} and {g} are farther apart than d_multi/2 = {half}"
        )
    lo, hi = min(k, g), max(k, g)
    start, end = lo - half, hi + half
    if start < 0 or end > dataset.n:
        raise ValueError(
            f"window [{start}, {end}) exits the series (n={dataset.n}); "
            "shrink the window or move the indices inward"
        )
    if k == g:
        return 0.0
    column = dataset.outputs[:, dim]
    if sigma is None:
        sigma = estimate_sigma(column)
    return _window_glr_pair(column, start, end, k, g, sigma)


def _feasible_half(n, lo, hi, half, min_segment_length):
    """Largest symmetric margin that keeps the window in range, or None.

    The shrunk window must still hold two admissible fits (total length
    at least twice the minimum segment) and leave two rows outside each
    split, else the comparison is skipped.
    """
    h = min(half, lo, n - hi)
    if h < 2 or (hi - lo) + 2 * h < 2 * min_segment_length:
        return None
    return h


def proximal_filter_audit(dataset, candidates, config: SelectionConfig):
    """Run the proximity filter and keep the per-candidate evidence.

    Returns (survivors, audit) where audit maps each input candidate to a
    (kept, e_value) pair; e_value is the comparison that removed it, or
    None for candidates never tested or never removed.
    """
    cands = sorted(candidates, key=lambda c: (c.index, c.source_dim))
    half = config.d_multi // 2
    min_seg = config.not_config.min_segment_length
    n = dataset.n
    alive = [True] * len(cands)
    removed_e: list = [None] * len(cands)
    sigmas: dict[int, float] = {}
    # ascending (own index, foreign index); survivorship re-checked so a
    # removed point can neither remove nor shield anyone afterwards
    pairs = [
        (a, b)
        for a in range(len(cands))
        for b in range(len(cands))
        if a != b
        and cands[a].source_dim != cands[b].source_dim
        and abs(cands[a].index - cands[b].index) <= half
    ]
    pairs.sort(key=lambda ab: (cands[ab[0]].index, cands[ab[1]].index))
    for a, b in pairs:
        if not (alive[a] and alive[b]):
            continue
        own, foreign = cands[a], cands[b]
        lo, hi = min(own.index, foreign.index), max(own.index, foreign.index)
        h = _feasible_half(n, lo, hi, half, min_seg)
        if h is None:
            continue
        dim = own.source_dim
        if dim not in sigmas:
            sigmas[dim] = estimate_sigma(dataset.outputs[:, dim])
        e = _window_glr_pair(
            dataset.outputs[:, dim], lo - h, hi + h, own.index, foreign.index, sigmas[dim]
        )
        if e < config.glr_diff_threshold:
            alive[b] = False
            removed_e[b] = e
    survivors = [c for c, ok in zip(cands, alive) if ok]
    audit = {c: (ok, e) for c, ok, e in zip(cands, alive, removed_e)}
    return survivors, audit


def proximal_filter(dataset, candidates, config: SelectionConfig) -> list:
    """Drop pooled candidates whose information another channel's point carries.

    For every proximal pair from different channels, the own channel's
    data is split at each index in turn; if moving the split to the
    foreign index costs less than ``glr_diff_threshold``, the foreign
    candidate is removed.  Points with no proximal partner are always
    kept, and the result is a subset of the input in index order.
    """
    return proximal_filter_audit(dataset, candidates, config)[0]


def build_representatives(dataset, config: SelectionConfig, d: int) -> MemoryBuffer:
    """Full selection pipeline ending in a replay buffer.

    Detect per channel, pool, filter, then materialise each surviving
    index into a teacher-forced window of depth ``d``.  Indices below
    ``d`` have no complete window and are dropped (logged).
    """
    if dataset.n <= d + config.d_multi:
        raise ValueError(
            f"dataset length {dataset.n} too short for depth {d} plus "
            f"proximity distance {config.d_multi}"
        )
    survivors = proximal_filter(
        dataset, concatenate_candidates(select_per_dimension(dataset, config)), config
    )
    usable = [c for c in survivors if c.index >= d]
    if len(usable) < len(survivors):
        logger.info(
            "build_representatives: dropped %d candidate(s) with index < d=%d",
            len(survivors) - len(usable),
            d,
        )
    buffer = MemoryBuffer()
    buffer.add(tde_window(dataset, c.index, d) for c in usable)
    return buffer
