"""Frame-size trace model: ingestion, normalization, aggregation, synthesis.

A trace is a sequence of encoded video frame sizes (bytes) produced by a
quasi-CBR encoder at a nominal bit rate ``rate_bps`` and frame rate ``fps``.
The canonical on-disk format is CSV ``frame_index,timestamp_s,size_bytes``
(header required, UTF-8, ``.`` decimal separator) with an optional JSON
metadata sidecar ``{"content", "rate_bps", "fps", "source"}``.

Sizes are stored as non-negative 64-bit integers; all statistics are
computed in double precision. Normalization divides the frame size in bits
by the expected frame size ``rate_bps / fps``, so a perfectly CBR stream
normalizes to the constant 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import (
    EmptyTraceError,
    MalformedRowError,
    UnstableProcessError,
    WindowTooLargeError,
)

CSV_HEADER = "frame_index,timestamp_s,size_bytes"


@dataclass(frozen=True)
class TraceMeta:
    """Identity and nominal encoding parameters of a trace."""

    content: str
    rate_bps: float
    fps: float
    source: str = "measured"

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ValueError(f"rate_bps must be positive, got {self.rate_bps}")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.source not in ("measured", "synthetic"):
            raise ValueError(f"source must be 'measured' or 'synthetic', got {self.source!r}")

    @property
    def expected_frame_bytes(self) -> float:
        """Mean frame size implied by the nominal rate, in bytes."""
        return self.rate_bps / (8.0 * self.fps)

    @property
    def norm_factor(self) -> float:
        """Multiplier taking frame bytes to dimensionless normalized size."""
        return 8.0 * self.fps / self.rate_bps


class FrameTrace:
    """Timestamped sequence of frame sizes in bytes.

    ``timestamps`` may be omitted, in which case frame t is stamped t/fps.
    Provided timestamps must be strictly increasing with a mean inter-arrival
    within 5% of 1/fps.
    """

    def __init__(self, meta: TraceMeta, sizes, timestamps=None):
        sizes = np.asarray(sizes)
        if sizes.ndim != 1 or sizes.size < 1:
            raise EmptyTraceError("trace must contain at least one frame")
        if np.any(sizes < 0):
            raise ValueError("frame sizes must be non-negative")
        self.meta = meta
        self.sizes = sizes.astype(np.int64)
        self.sizes.setflags(write=False)
        if timestamps is None:
            timestamps = np.arange(1, len(sizes) + 1) / meta.fps
        else:
            timestamps = np.asarray(timestamps, dtype=float)
            if timestamps.shape != self.sizes.shape:
                raise ValueError("timestamps length must match sizes length")
            if len(timestamps) > 1:
                dt = np.diff(timestamps)
                if np.any(dt <= 0):
                    raise ValueError("timestamps must be strictly increasing")
                mean_dt = float(dt.mean())
                if abs(mean_dt - 1.0 / meta.fps) > 0.05 / meta.fps:
                    raise ValueError(
                        f"mean inter-arrival {mean_dt:.6f}s deviates more than 5% "
                        f"from 1/fps = {1.0 / meta.fps:.6f}s"
                    )
        self.timestamps = timestamps
        self.timestamps.setflags(write=False)

    def __len__(self) -> int:
        return len(self.sizes)

    def mean_rate_bps(self) -> float:
        """Average video bit rate over the whole trace."""
        return 8.0 * self.meta.fps * float(self.sizes.mean())


@dataclass(frozen=True)
class NormalizedTrace:
    """Dimensionless trace: frame bits divided by the expected frame size."""

    meta: TraceMeta
    values: np.ndarray

    def to_bytes(self) -> np.ndarray:
        """Invert the normalization (float bytes, exact to within 1 ulp)."""
        return self.values / self.meta.norm_factor

    def __len__(self) -> int:
        return len(self.values)


def normalize(trace: FrameTrace) -> NormalizedTrace:
    """Scale frame sizes by the expected frame size R/phi."""
    values = trace.sizes * trace.meta.norm_factor
    return NormalizedTrace(meta=trace.meta, values=values)


def load_trace(path, meta: TraceMeta) -> FrameTrace:
    """Read a canonical trace CSV.

    Raises :class:`MalformedRowError` (with the offending 1-based line
    number) on unparseable rows or negative sizes, :class:`EmptyTraceError`
    if the file has no data rows.
    """
    path = Path(path)
    sizes: list[int] = []
    stamps: list[float] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise MalformedRowError(1, f"expected header {CSV_HEADER!r}, got {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise MalformedRowError(line_no, f"expected 3 fields, got {len(parts)}")
            try:
                int(parts[0])
                stamp = float(parts[1])
                size = int(parts[2])
            except ValueError as exc:
                raise MalformedRowError(line_no, str(exc)) from None
            if size < 0:
                raise MalformedRowError(line_no, f"negative frame size {size}")
            sizes.append(size)
            stamps.append(stamp)
    if not sizes:
        raise EmptyTraceError(f"no data rows in {path}")
    return FrameTrace(meta, np.array(sizes, dtype=np.int64), np.array(stamps))


def write_trace(trace: FrameTrace, path) -> None:
    """Write the canonical CSV (1-based index, 4-decimal timestamps)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for i, (t, s) in enumerate(zip(trace.timestamps, trace.sizes), start=1):
            fh.write(f"{i},{t:.4f},{s}\n")


def load_meta(path) -> TraceMeta:
    """Read the JSON metadata sidecar."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return TraceMeta(
        content=raw["content"],
        rate_bps=raw["rate_bps"],
        fps=raw["fps"],
        source=raw.get("source", "measured"),
    )


def write_meta(meta: TraceMeta, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "content": meta.content,
                "rate_bps": meta.rate_bps,
                "fps": meta.fps,
                "source": meta.source,
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def moving_average_rate(trace: FrameTrace, window: int) -> np.ndarray:
    """Rectangular moving-average bit rate over ``window`` frames.

    Element k (k = 0..L-window) is ``8*fps/window * sum(sizes[k:k+window])``
    in bits/second. The window sums are computed on 64-bit integers, so the
    result is exact.
    """
    L = len(trace)
    if not 1 <= window <= L:
        raise WindowTooLargeError(f"window {window} outside [1, {L}]")
    csum = np.concatenate(([0], np.cumsum(trace.sizes)))
    sums = csum[window:] - csum[:-window]
    return (8.0 * trace.meta.fps / window) * sums


def _ar_spectral_radius(coeffs: np.ndarray) -> float:
    """Largest |eigenvalue| of the AR companion matrix."""
    p = len(coeffs)
    if p == 0:
        return 0.0
    comp = np.zeros((p, p))
    comp[0, :] = coeffs
    if p > 1:
        comp[1:, :-1] = np.eye(p - 1)
    return float(np.abs(np.linalg.eigvals(comp)).max())


_AR_BURN_IN = 2000


def synthesize_trace(
    meta: TraceMeta,
    length: int,
    ar_coeffs,
    noise_scale_b: float,
    seed: int,
) -> FrameTrace:
    """Generate an AR trace with Laplace innovations around the nominal mean.

    The deviation process follows d(t) = sum_i a_i d(t-i) + eps(t) with
    eps ~ Laplace(0, noise_scale_b); frame sizes are rounded to integer bytes
    and clamped at zero (negligible bias at realistic parameters). Output is
    a pure function of the arguments, and a prefix of the trace produced by
    the same seed at any longer length.
    """
    if length < 1:
        raise EmptyTraceError("length must be >= 1")
    if noise_scale_b < 0:
        raise ValueError("noise_scale_b must be non-negative")
    coeffs = np.atleast_1d(np.asarray(ar_coeffs, dtype=float))
    radius = _ar_spectral_radius(coeffs)
    if radius >= 1.0:
        raise UnstableProcessError(f"AR spectral radius {radius:.4f} >= 1")
    rng = np.random.default_rng(seed)
    n = length + _AR_BURN_IN
    if noise_scale_b > 0:
        eps = rng.laplace(0.0, noise_scale_b, size=n)
    else:
        eps = np.zeros(n)
    # d(t) - sum a_i d(t-i) = eps(t)  <=>  IIR filter with denominator [1, -a]
    dev = lfilter([1.0], np.concatenate(([1.0], -coeffs)), eps)[_AR_BURN_IN:]
    mean_bytes = meta.expected_frame_bytes
    sizes = np.maximum(np.rint(mean_bytes + dev), 0).astype(np.int64)
    return FrameTrace(replace(meta, source="synthetic"), sizes)


# Two-timescale surrogate profiles for quasi-CBR VR content. Scales are
# relative to the expected frame size; the fast AR(1) with a = 0.22 puts the
# lag-1 autocorrelation of the frame-size difference near -0.39, and the
# slow near-unit-root component keeps the windowed-rate deviation roughly
# flat for windows beyond ~50 frames.
SURROGATE_PROFILES = {
    "arcade": dict(fast_a=0.22, fast_b=0.1152, slow_c=0.9985, slow_sigma=0.0640),
    "puzzle": dict(fast_a=0.18, fast_b=0.1000, slow_c=0.9980, slow_sigma=0.0720),
    "sandbox": dict(fast_a=0.26, fast_b=0.1280, slow_c=0.9988, slow_sigma=0.0560),
    "explorer": dict(fast_a=0.30, fast_b=0.1060, slow_c=0.9975, slow_sigma=0.0800),
}


def surrogate_trace(meta: TraceMeta, length: int, seed: int, profile: str = "arcade") -> FrameTrace:
    """Bundled synthetic stand-in for a measured quasi-CBR VR trace.

    Sum of a fast AR(1) (Laplace innovations, short anti-correlated memory)
    and a slow near-unit-root AR(1) mimicking content drift, around the
    nominal mean frame size. Deterministic in (meta, length, seed, profile).
    """
    if length < 1:
        raise EmptyTraceError("length must be >= 1")
    prof = SURROGATE_PROFILES[profile]
    mean_bytes = meta.expected_frame_bytes
    rng = np.random.default_rng(seed)
    n = length + _AR_BURN_IN
    eps_fast = rng.laplace(0.0, prof["fast_b"] * mean_bytes, size=n)
    sig_slow = prof["slow_sigma"] * mean_bytes * np.sqrt(1.0 - prof["slow_c"] ** 2)
    eps_slow = rng.laplace(0.0, sig_slow / np.sqrt(2.0), size=n)
    fast = lfilter([1.0], [1.0, -prof["fast_a"]], eps_fast)
    slow = lfilter([1.0], [1.0, -prof["slow_c"]], eps_slow)
    dev = (fast + slow)[_AR_BURN_IN:]
    sizes = np.maximum(np.rint(mean_bytes + dev), 0).astype(np.int64)
    return FrameTrace(replace(meta, source="synthetic"), sizes)
