"""Shared containers for multivariate time-series learning.

Everything downstream (change-point detection, memory selection, training,
conformal calibration) works on the three structures defined here: an
immutable dataset of aligned input/output rows, a time-delay-embedding
window, and a replay memory holding such windows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeSeriesDataset",
    "TdeWindow",
    "MemoryBuffer",
    "Scaler",
    "tde_window",
    "all_windows",
    "empirical_risk",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
]


def _as_float_matrix(a, name):
    out = np.array(a, dtype=float, copy=True)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Aligned input/output recordings sampled on a fixed grid.

    Parameters
    ----------
    inputs : ndarray, shape (n, p)
        Exogenous channels, one row per time step.
    outputs : ndarray, shape (n, q)
        Target channels, aligned row-for-row with ``inputs``.
    sample_period : float
        Seconds between consecutive rows, > 0.
    domain_id : str
        Label of the operating condition the recording came from.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    sample_period: float
    domain_id: str

    def __post_init__(self):
        object.__setattr__(self, "inputs", _as_float_matrix(self.inputs, "inputs"))
        object.__setattr__(self, "outputs", _as_float_matrix(self.outputs, "outputs"))
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError(
                "inputs and outputs must cover the same rows: "
                f"{self.inputs.shape[0]} != {self.outputs.shape[0]}"
            )
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if self.inputs.shape[1] < 1 or self.outputs.shape[1] < 1:
            raise ValueError("inputs and outputs need at least one channel each")
        if not (isinstance(self.sample_period, (int, float)) and self.sample_period > 0):
            raise ValueError(f"sample_period must be > 0, got {self.sample_period!r}")
        if not isinstance(self.domain_id, str):
            raise ValueError("domain_id must be a string")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    @property
    def q(self) -> int:
        return self.outputs.shape[1]

    def slice(self, start: int, stop: int) -> "TimeSeriesDataset":
        """Rows [start, stop) as a new dataset with the same labels."""
        if not (0 <= start < stop <= self.n):
            raise IndexError(f"slice [{start}, {stop}) out of range for {self.n} rows")
        return TimeSeriesDataset(
            self.inputs[start:stop],
            self.outputs[start:stop],
            self.sample_period,
            self.domain_id,
        )


@dataclass(frozen=True)
class TdeWindow:
    """One supervised sample built by time-delay embedding.

    ``input_block`` holds the d input rows [origin_index - d, origin_index),
    ``decoder_history`` the matching d output rows (recorded truth, or model
    predictions when the window is built for free-running evaluation), and
    ``target`` the output row at ``origin_index`` itself.
    """

    input_block: np.ndarray
    decoder_history: np.ndarray
    target: np.ndarray
    origin_index: int
    domain_id: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "input_block", _as_float_matrix(self.input_block, "input_block")
        )
        object.__setattr__(
            self,
            "decoder_history",
            _as_float_matrix(self.decoder_history, "decoder_history"),
        )
        tgt = np.array(self.target, dtype=float, copy=True)
        if tgt.ndim != 1:
            raise ValueError(f"target must be 1-D, got shape {tgt.shape}")
        if not np.all(np.isfinite(tgt)):
            raise ValueError("target contains non-finite values")
        tgt.setflags(write=False)
        object.__setattr__(self, "target", tgt)
        if self.input_block.shape[0] != self.decoder_history.shape[0]:
            raise ValueError("input_block and decoder_history must share the depth d")
        if self.input_block.shape[0] < 1:
            raise ValueError("window depth d must be >= 1")
        if self.decoder_history.shape[1] != self.target.shape[0]:
            raise ValueError("decoder_history and target must share the output width")
        if self.origin_index < self.input_block.shape[0]:
            raise ValueError(
                f"origin_index {self.origin_index} cannot precede window depth "
                f"{self.input_block.shape[0]}"
            )

    @property
    def depth(self) -> int:
        return self.input_block.shape[0]

    def to_dict(self) -> dict:
        return {
            "input_block": self.input_block.tolist(),
            "decoder_history": self.decoder_history.tolist(),
            "target": self.target.tolist(),
            "origin_index": int(self.origin_index),
            "domain_id": self.domain_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TdeWindow":
        return cls(
            np.asarray(d["input_block"], dtype=float),
            np.asarray(d["decoder_history"], dtype=float),
            np.asarray(d["target"], dtype=float),
            int(d["origin_index"]),
            str(d.get("domain_id", "")),
        )


def tde_window(dataset, index, d, predictions=None) -> TdeWindow:
    """Build the window that predicts ``dataset.outputs[index]``.

    Parameters
    ----------
    dataset : TimeSeriesDataset
    index : int
        Row being predicted; must satisfy d <= index <= n - 1.
    d : int
        Embedding depth (rows of history), >= 1.
    predictions : ndarray, shape (n, q), optional
        Alternative source for the decoder history rows.  When given, the
        history is read from this array instead of the recorded outputs;
        the target always comes from the recorded outputs.

    Returns
    -------
    TdeWindow
    """
    if d < 1:
        raise ValueError(f"embedding depth d must be >= 1, got {d}")
    if not (d <= index <= dataset.n - 1):
        raise IndexError(
            f"index {index} out of range [{d}, {dataset.n - 1}] for depth {d} "
            f"and {dataset.n} rows"
        )
    if predictions is None:
        history = dataset.outputs[index - d : index]
    else:
        predictions = np.asarray(predictions, dtype=float)
        if predictions.shape != dataset.outputs.shape:
            raise ValueError(
                f"predictions shape {predictions.shape} must match outputs "
                f"shape {dataset.outputs.shape}"
            )
        history = predictions[index - d : index]
    return TdeWindow(
        input_block=dataset.inputs[index - d : index],
        decoder_history=history,
        target=dataset.outputs[index],
        origin_index=index,
        domain_id=dataset.domain_id,
    )


def all_windows(dataset, d, predictions=None) -> list:
    """Teacher-forced windows for every admissible index d .. n-1."""
    return [tde_window(dataset, i, d, predictions) for i in range(d, dataset.n)]


def empirical_risk(model, windows) -> float:
    """Mean squared prediction error over a collection of windows.

    Per-window loss is the squared l2 distance between the model prediction
    and the target across all output channels; the risk is its mean.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("empirical_risk needs at least one window")
    preds = np.asarray(model.predict_batch(windows), dtype=float)
    targets = np.stack([w.target for w in windows])
    if preds.shape != targets.shape:
        raise ValueError(
            f"model returned shape {preds.shape}, expected {targets.shape}"
        )
    return float(np.mean(np.sum((preds - targets) ** 2, axis=1)))


class MemoryBuffer:
    """Ordered store of replay windows, optionally capacity-bounded.

    When an ``add`` overflows ``capacity``, the buffer keeps an evenly
    spaced subsample (by storage order) of exactly ``capacity`` entries,
    so landmarks from every region and domain survive proportionally.
    The thinning is deterministic.
    """

    def __init__(self, entries=None, capacity=None):
        if capacity is not None and capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self._entries: list[TdeWindow] = []
        if entries:
            self.add(entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple:
        return tuple(self._entries)

    def add(self, windows) -> None:
        for w in windows:
            if not isinstance(w, TdeWindow):
                raise TypeError(f"MemoryBuffer stores TdeWindow, got {type(w).__name__}")
            self._entries.append(w)
        if self.capacity is not None and len(self._entries) > self.capacity:
            if self.capacity == 0:
                self._entries = []
            else:
                keep = np.round(
                    np.linspace(0, len(self._entries) - 1, self.capacity)
                ).astype(int)
                self._entries = [self._entries[i] for i in keep]

    def domains(self) -> list:
        seen = []
        for w in self._entries:
            if w.domain_id not in seen:
                seen.append(w.domain_id)
        return seen

    def sample(self, rng, size) -> list:
        """Uniform draw without replacement; the whole buffer if size >= len."""
        if size >= len(self._entries):
            return list(self._entries)
        idx = rng.choice(len(self._entries), size=size, replace=False)
        return [self._entries[i] for i in sorted(idx)]

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "entries": [w.to_dict() for w in self._entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryBuffer":
        buf = cls(capacity=d.get("capacity"))
        buf.add(TdeWindow.from_dict(e) for e in d.get("entries", []))
        return buf


@dataclass(frozen=True)
class Scaler:
    """Channelwise standardisation fitted on one dataset.

    Standard deviations use ddof=1.  Channels whose deviation is zero (or
    undefined because the dataset has a single row) are flagged degenerate
    and scaled by 1 so the transform stays invertible.
    """

    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray
    degenerate_inputs: np.ndarray = field(default=None)
    degenerate_outputs: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("input_mean", "input_std", "output_mean", "output_std"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name, ref in (
            ("degenerate_inputs", self.input_std),
            ("degenerate_outputs", self.output_std),
        ):
            val = getattr(self, name)
            arr = (
                np.zeros(ref.shape, dtype=bool)
                if val is None
                else np.array(val, dtype=bool, copy=True)
            )
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.input_std <= 0) or np.any(self.output_std <= 0):
            raise ValueError("scaler standard deviations must be > 0")

    def transform_inputs(self, x):
        return (np.asarray(x, dtype=float) - self.input_mean) / self.input_std

    def invert_inputs(self, x):
        return np.asarray(x, dtype=float) * self.input_std + self.input_mean

    def transform_outputs(self, y):
        return (np.asarray(y, dtype=float) - self.output_mean) / self.output_std

    def invert_outputs(self, y):
        return np.asarray(y, dtype=float) * self.output_std + self.output_mean

    def to_dict(self) -> dict:
        return {
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "output_mean": self.output_mean.tolist(),
            "output_std": self.output_std.tolist(),
            "degenerate_inputs": self.degenerate_inputs.tolist(),
            "degenerate_outputs": self.degenerate_outputs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            np.asarray(d["input_mean"], dtype=float),
            np.asarray(d["input_std"], dtype=float),
            np.asarray(d["output_mean"], dtype=float),
            np.asarray(d["output_std"], dtype=float),
            np.asarray(d["degenerate_inputs"], dtype=bool),
            np.asarray(d["degenerate_outputs"], dtype=bool),
        )


def _column_stats(mat, label):
    mean = mat.mean(axis=0)
    std = mat.std(axis=0, ddof=1)
    degenerate = std <= 0
    if np.any(degenerate):
        cols = np.flatnonzero(degenerate).tolist()
        warnings.warn(
            f"{label} channels {cols} have zero variance; scaling them by 1",
            stacklevel=3,
        )
        std = np.where(degenerate, 1.0, std)
    return mean, std, degenerate


def fit_scaler(dataset) -> Scaler:
    """Fit channelwise means and deviations on one dataset; needs n >= 2."""
    if dataset.n < 2:
        raise ValueError(f"need at least 2 rows to fit a scaler, got {dataset.n}")
    im, istd, ideg = _column_stats(dataset.inputs, "input")
    om, ostd, odeg = _column_stats(dataset.outputs, "output")
    return Scaler(im, istd, om, ostd, ideg, odeg)


def apply_scaler(scaler, dataset) -> TimeSeriesDataset:
    """Standardise a dataset channelwise; labels are preserved."""
    return TimeSeriesDataset(
        scaler.transform_inputs(dataset.inputs),
        scaler.transform_outputs(dataset.outputs),
        dataset.sample_period,
        dataset.domain_id,
    )


def invert_scaler(scaler, dataset) -> TimeSeriesDataset:
    """Undo :func:`apply_scaler`."""
    return TimeSeriesDataset(
        scaler.invert_inputs(dataset.inputs),
        scaler.invert_outputs(dataset.outputs),
        dataset.sample_period,
        dataset.domain_id,
    )
