"""Bandwidth-allocation policies for latency-bounded VR slices.

The motion-to-photon budget is split into fixed and worst-case components,
leaving a downlink transmission window

    T_tx = T_max - Delta_u - 2*tau_p - 1/fps - tau_r

per frame. Allocation converts a frame-size quantile (bits) into bandwidth
by dividing by the link's spectral efficiency and T_tx. Four schemes:

* IF - per-user slice, one bandwidth for the whole S-frame interval, sized
  on the quantile of the average frame over the interval;
* IO - per-user slice, per-frame bandwidth from per-lookahead quantiles;
* AF - one shared slice at constant bandwidth, sized on the quantile of the
  sum of the users' efficiency-weighted average frames;
* AO - one shared slice with per-frame bandwidth.

Queued bits from previous intervals enter every formula (spread across the
interval for the FDMA variants, flushed in the first frame for OFDMA),
which keeps the queues stable. All quantile inputs are clamped at zero
before use. Internally everything is bits, Hz, and seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleBudgetError


@dataclass(frozen=True)
class LatencyBudget:
    """Motion-to-photon latency decomposition (all seconds, fps in Hz)."""

    t_max: float
    delta_u: float
    tau_p: float
    tau_r: float
    fps: float

    def __post_init__(self):
        for name in ("t_max", "delta_u", "tau_p", "tau_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.fps > 0:
            raise ValueError("fps must be positive")


def compute_t_tx(budget: LatencyBudget) -> float:
    """Downlink transmission window per frame; raises if the budget is spent
    by the fixed and worst-case components alone."""
    t_tx = (budget.t_max - budget.delta_u - 2.0 * budget.tau_p
            - 1.0 / budget.fps - budget.tau_r)
    if t_tx <= 0:
        raise InfeasibleBudgetError(
            f"latency budget leaves {t_tx * 1e3:.3f} ms for transmission"
        )
    return t_tx


def allocate_if(eta: float, queue_bits: float, quantile_bits: float,
                interval_frames: int, t_tx: float) -> float:
    """Constant per-user bandwidth (Hz) over the interval."""
    q = max(quantile_bits, 0.0)
    return (q + queue_bits / interval_frames) / (eta * t_tx)


def allocate_io(eta: float, queue_bits: float, per_slot_quantile_bits,
                t_tx: float) -> np.ndarray:
    """Per-frame per-user bandwidth (Hz); queued bits served in slot 1."""
    q = np.maximum(np.asarray(per_slot_quantile_bits, dtype=float), 0.0)
    out = q / (eta * t_tx)
    out[0] += queue_bits / (eta * t_tx)
    return out


def allocate_af(etas: Sequence[float], queue_bits: Sequence[float],
                agg_quantile_hzs: float, interval_frames: int, t_tx: float) -> float:
    """Constant shared-slice bandwidth (Hz).

    ``agg_quantile_hzs`` is a quantile of the efficiency-weighted aggregate
    frame size (units Hz*s, i.e. bits already divided by each user's eta);
    the known queued bits are spread over the interval per user.
    """
    q = max(agg_quantile_hzs, 0.0)
    etas = np.asarray(etas, dtype=float)
    queues = np.asarray(queue_bits, dtype=float)
    return q / t_tx + float(np.sum(queues / etas)) / (interval_frames * t_tx)


def allocate_ao(etas: Sequence[float], queue_bits: Sequence[float],
                per_slot_agg_quantile_hzs, t_tx: float) -> np.ndarray:
    """Per-frame shared-slice bandwidth (Hz); queues flushed in slot 1."""
    q = np.maximum(np.asarray(per_slot_agg_quantile_hzs, dtype=float), 0.0)
    etas = np.asarray(etas, dtype=float)
    queues = np.asarray(queue_bits, dtype=float)
    out = q / t_tx
    out[0] += float(np.sum(queues / etas)) / t_tx
    return out


def check_stability(mean_bandwidth_hz: float, eta: float,
                    mean_frame_bits: float, fps: float) -> bool:
    """Queue stability: served rate strictly above offered rate."""
    return eta * mean_bandwidth_hz > fps * mean_frame_bits
