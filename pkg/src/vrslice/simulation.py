"""Frame-synchronous multi-user slicing simulation.

Users generate one frame per slot (1/fps seconds); all users are
synchronized. Every ``interval_frames`` slots the orchestrator reads each
user's recent frame history, forecasts frame-size distributions with the
fitted location + scale models, and sets bandwidth with the configured
slicing scheme. Service is fluid within a slot: individual slices drain
each user's FIFO at eta * B bits/s, aggregate slices split the slice's
bandwidth-time budget across backlogged users in proportion to their need
(backlog / eta) so every backlog completes at the same fraction.

Queue accounting is done in integer bits (per-slot capacity is floored to
a whole bit), which makes the bits-in = bits-served + backlog balance
exact; completion times use the float service rate, so the sub-bit error
in a latency is below a nanosecond.

Per frame, two latencies are recorded: the downlink time (completion since
arrival at the base station) and the full motion-to-photon latency, which
adds the fixed propagation/rendering terms plus per-frame draws of the
motion sampling delay U(0, delta_u) and the frame generation delay
U(0, 1/fps). Randomness is derived from the scenario seed through
``numpy.random.SeedSequence(seed).spawn(M + 1)``: child 0 is reserved for
the orchestrator, child 1 + i drives user i's latency draws.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    PredictorMissingError,
    TraceExhaustedError,
    VrsliceError,
)
from .laplace import (
    ScaleModel,
    aggregate_distribution,
    fit_scale_model,
    mixture_quantile,
)
from .regression import (
    LinearModel,
    PredictionSpec,
    _design_at,
    build_design,
    design_t_range,
    fit_ols,
    fit_scoped,
    predict,
)
from .slicing import (
    LatencyBudget,
    allocate_af,
    allocate_ao,
    allocate_if,
    allocate_io,
    compute_t_tx,
)
from .traces import FrameTrace, TraceMeta, load_meta, load_trace, normalize

SCHEMES = ("IF", "IO", "AF", "AO")


@dataclass(frozen=True)
class FramePredictor:
    """Location + scale model pair for one (horizon, lookahead) setting,
    with memoryless fallbacks for warm-up."""

    location: LinearModel
    scale: ScaleModel
    fallback_location: LinearModel
    fallback_scale: ScaleModel


class PredictorBank:
    """Fitted forecasters keyed by (horizon, lookahead)."""

    def __init__(self, models: dict, n_memory: int, scope: str):
        self.models = models
        self.n_memory = n_memory
        self.scope = scope

    def forecast(self, history_bytes: np.ndarray, meta: TraceMeta,
                 horizon: int, lookahead: int):
        """Predicted (location, scale) of the target in bytes.

        ``history_bytes`` holds the most recent frames first; if fewer than
        n_memory frames are available the memoryless fallback serves the
        prediction.
        """
        key = (horizon, lookahead)
        if key not in self.models:
            raise PredictorMissingError(f"no predictor fitted for (T, tau) = {key}")
        fp = self.models[key]
        if len(history_bytes) >= self.n_memory:
            h = np.asarray(history_bytes[: self.n_memory], dtype=float)
            mu = predict(fp.location, h, meta)
            b = fp.scale.predict_bytes(h, meta)
        else:
            mu = predict(fp.fallback_location, np.empty(0), meta)
            b = fp.fallback_scale.predict_bytes(np.empty(0), meta)
        return mu, b


def _fit_scale_scoped(traces: Sequence[FrameTrace], model: LinearModel,
                      spec: PredictionSpec) -> ScaleModel:
    """|residual| regression stacked over the training traces."""
    xs, ys = [], []
    for trace in traces:
        nt = normalize(trace)
        X, y = build_design(nt, spec)
        w_norm = np.abs(y - X @ model.theta)
        xs.append(X)
        ys.append(w_norm)
    fitted = fit_ols(np.vstack(xs), np.concatenate(ys))
    return ScaleModel(theta_abs=fitted.theta, spec=spec)


def fit_predictor_bank(traces: Sequence[FrameTrace], interval_frames: int,
                       n_memory: int = 6, scope: str = "GM") -> PredictorBank:
    """Fit every forecaster a slicing scheme may need for this interval.

    Interval-average models (horizon = S, lookahead = 1) serve the FDMA
    schemes; per-slot models (horizon = 1, lookahead = 1..S) serve OFDMA.
    Location models are least squares; scales come from the |w| regression.
    """
    traces = list(traces)
    ntraces = [normalize(t) for t in traces]
    keys = {(interval_frames, 1)} | {(1, ell) for ell in range(1, interval_frames + 1)}
    models = {}
    for horizon, lookahead in sorted(keys):
        spec = PredictionSpec(n_memory=n_memory, horizon=horizon, lookahead=lookahead)
        loc = fit_scoped(ntraces, spec, scope)
        scale = _fit_scale_scoped(traces, loc, spec)
        spec0 = PredictionSpec(n_memory=0, horizon=horizon, lookahead=lookahead)
        loc0 = fit_scoped(ntraces, spec0, scope)
        scale0 = _fit_scale_scoped(traces, loc0, spec0)
        models[(horizon, lookahead)] = FramePredictor(
            location=loc, scale=scale, fallback_location=loc0, fallback_scale=scale0
        )
    return PredictorBank(models=models, n_memory=n_memory, scope=scope)


@dataclass(frozen=True)
class UserLink:
    """One VR client: downlink spectral efficiency plus its traffic trace."""

    user_id: int
    eta: float
    trace: FrameTrace
    offset_frames: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.offset_frames < 0:
            raise ValueError("offset_frames must be non-negative")


@dataclass(frozen=True)
class Scenario:
    users: tuple
    budget: LatencyBudget
    scheme: str
    interval_frames: int
    p_s: float
    seed: int
    duration_frames: int
    predictors: PredictorBank
    cluster_tol: float = 0.01
    fixed_bandwidth_hz: Optional[float] = None  # debug override, bypasses prediction

    def __post_init__(self):
        if self.scheme not in SCHEMES and self.scheme != "FIXED":
            raise ValueError(f"scheme must be one of {SCHEMES} or FIXED")
        if self.scheme == "FIXED" and self.fixed_bandwidth_hz is None:
            raise ValueError("FIXED scheme requires fixed_bandwidth_hz")
        if not 0.0 < self.p_s < 1.0:
            raise ValueError("p_s must be in (0, 1)")
        if self.interval_frames < 1:
            raise ValueError("interval_frames must be >= 1")
        if self.duration_frames < self.interval_frames:
            raise ValueError("duration_frames must cover at least one interval")


@dataclass
class SimResult:
    """Outcome of one simulation run.

    Frame-level arrays cover completed frames, ordered by (slot, user).
    ``interval_user_bw`` holds the per-user time-averaged allocated
    bandwidth for individual slicing and the served-share attribution for
    aggregate slicing; ``interval_total_bw`` is the whole-slice (or summed)
    allocation. The conservation triplet is exact in integer bits.
    """

    scheme: str
    interval_frames: int
    p_s: float
    seed: int
    n_users: int
    fps: float
    t_tx: float
    frame_user: np.ndarray
    frame_index: np.ndarray
    frame_bits: np.ndarray
    downlink_s: np.ndarray
    mtp_s: np.ndarray
    deadline_met: np.ndarray
    interval_user_bw: np.ndarray
    interval_total_bw: np.ndarray
    bits_in: np.ndarray
    bits_served: np.ndarray
    backlog_bits: np.ndarray

    def user_latencies(self, user_id: int, which: str = "downlink") -> np.ndarray:
        col = self.downlink_s if which == "downlink" else self.mtp_s
        return col[self.frame_user == user_id]

    def mean_bandwidth_per_user(self) -> float:
        return float(self.interval_total_bw.mean()) / self.n_users


def need_based_share(backlog_bits, etas, total_bandwidth_hz: float, slot_s: float):
    """Split a slice's bandwidth-time budget across backlogged users.

    Each user's need is backlog / eta (Hz*s). If the budget covers the
    total need, everyone drains and the idle remainder is returned;
    otherwise shares are proportional to need, so all backlogs complete the
    same fraction. Returns (served_bits per user, idle_hzs).
    """
    backlog = np.asarray(backlog_bits, dtype=float)
    etas = np.asarray(etas, dtype=float)
    if total_bandwidth_hz < 0:
        raise ValueError("total bandwidth must be non-negative")
    need = backlog / etas
    total_need = float(need.sum())
    budget = total_bandwidth_hz * slot_s
    if total_need <= budget:
        return backlog.copy(), budget - total_need
    frac = budget / total_need if total_need > 0 else 0.0
    return backlog * frac, 0.0


class _Queue:
    """Per-user FIFO of partially transmitted frames."""

    __slots__ = ("frames",)

    def __init__(self):
        self.frames = deque()  # entries: [remaining_bits, frame_id, arrival_s, size_bits, mtp_fixed]

    def backlog(self) -> int:
        return sum(f[0] for f in self.frames)

    def push(self, frame_id: int, size_bits: int, arrival_s: float, mtp_fixed: float):
        self.frames.append([size_bits, frame_id, arrival_s, size_bits, mtp_fixed])

    def serve(self, cap_bits: int, rate_bps: float, slot_start: float, completions: list) -> int:
        """Serve up to cap_bits at the given float rate; returns bits served."""
        served = 0
        while self.frames and served < cap_bits:
            fr = self.frames[0]
            take = min(fr[0], cap_bits - served)
            served += take
            fr[0] -= take
            if fr[0] == 0:
                done_t = slot_start + served / rate_bps if rate_bps > 0 else math.inf
                completions.append((fr[1], fr[2], fr[3], done_t, fr[4]))
                self.frames.popleft()
        return served


def run(scenario: Scenario) -> SimResult:
    """Execute the scenario; deterministic in all inputs including seed."""
    users = list(scenario.users)
    m_users = len(users)
    budget = scenario.budget
    fps = budget.fps
    t_tx = compute_t_tx(budget)
    slot = 1.0 / fps
    s_frames = scenario.interval_frames
    n_intervals = scenario.duration_frames // s_frames
    total_frames = n_intervals * s_frames

    for u in users:
        if u.offset_frames + total_frames > len(u.trace):
            raise TraceExhaustedError(
                f"user {u.user_id}: trace has {len(u.trace)} frames, needs "
                f"{u.offset_frames + total_frames}"
            )

    bank = scenario.predictors
    if scenario.scheme != "FIXED":
        needed = [(s_frames, 1)] if scenario.scheme in ("IF", "AF") else \
                 [(1, ell) for ell in range(1, s_frames + 1)]
        for key in needed:
            if key not in bank.models:
                raise PredictorMissingError(f"scenario needs predictor {key}")

    ss = np.random.SeedSequence(scenario.seed)
    children = ss.spawn(m_users + 1)
    user_rng = [np.random.default_rng(children[1 + i]) for i in range(m_users)]

    queues = [_Queue() for _ in range(m_users)]
    bits_in = np.zeros(m_users, dtype=np.int64)
    bits_served = np.zeros(m_users, dtype=np.int64)
    completions: list = [[] for _ in range(m_users)]
    interval_user_bw = np.zeros((n_intervals, m_users))
    interval_total_bw = np.zeros(n_intervals)

    etas = np.array([u.eta for u in users])
    aggregate = scenario.scheme in ("AF", "AO")
    tau_fixed = 2.0 * budget.tau_p + budget.tau_r

    for k in range(n_intervals):
        frame0 = k * s_frames
        queue_bits = np.array([q.backlog() for q in queues], dtype=np.int64)

        # --- orchestration: per-slot bandwidth plan for this interval ---
        if scenario.scheme == "FIXED":
            b_user = np.full((m_users, s_frames), scenario.fixed_bandwidth_hz)
            b_slice = None
        else:
            mu_b = _interval_forecasts(scenario, bank, users, frame0)
            b_user, b_slice = _plan_interval(scenario, etas, queue_bits, mu_b, t_tx)

        if aggregate:
            interval_total_bw[k] = float(np.mean(b_slice))
            served_hzs = np.zeros(m_users)
        else:
            interval_user_bw[k] = b_user.mean(axis=1)
            interval_total_bw[k] = float(b_user.mean(axis=1).sum())

        # --- service slot by slot ---
        for ell in range(s_frames):
            slot_start = (frame0 + ell) * slot
            for i, u in enumerate(users):
                size_bits = int(u.trace.sizes[u.offset_frames + frame0 + ell]) * 8
                mtp_fixed = (tau_fixed
                             + user_rng[i].uniform(0.0, budget.delta_u)
                             + user_rng[i].uniform(0.0, slot))
                queues[i].push(frame0 + ell + 1, size_bits, slot_start, mtp_fixed)
                bits_in[i] += size_bits

            if aggregate:
                backlog = np.array([q.backlog() for q in queues], dtype=np.int64)
                served_f, _ = need_based_share(backlog, etas, b_slice[ell], slot)
                total_need = float(np.sum(backlog / etas))
                budget_hzs = b_slice[ell] * slot
                t_drain = (slot * total_need / budget_hzs) if budget_hzs > 0 else math.inf
                for i in range(m_users):
                    cap = int(math.floor(served_f[i]))
                    if cap <= 0:
                        continue
                    # all backlogs drain at equal fractional rate
                    rate = backlog[i] / t_drain if t_drain > 0 else math.inf
                    got = queues[i].serve(cap, rate, slot_start, completions[i])
                    bits_served[i] += got
                    served_hzs[i] += got / etas[i]
            else:
                for i in range(m_users):
                    rate = etas[i] * b_user[i, ell]
                    cap = int(math.floor(rate * slot))
                    got = queues[i].serve(cap, rate, slot_start, completions[i])
                    bits_served[i] += got

        if aggregate:
            interval_user_bw[k] = served_hzs / (s_frames * slot)

    return _collect_result(scenario, users, completions, bits_in, bits_served,
                           queues, interval_user_bw, interval_total_bw, t_tx)


def _interval_forecasts(scenario: Scenario, bank: PredictorBank, users, frame0: int):
    """(mu, b) in bytes per user per conditioning the scheme needs."""
    s_frames = scenario.interval_frames
    per_user = []
    for u in users:
        pos = u.offset_frames + frame0
        n_avail = min(bank.n_memory, pos)
        history = u.trace.sizes[pos - n_avail : pos][::-1].astype(float)
        if scenario.scheme in ("IF", "AF"):
            per_user.append([bank.forecast(history, u.trace.meta, s_frames, 1)])
        else:
            per_user.append([bank.forecast(history, u.trace.meta, 1, ell)
                             for ell in range(1, s_frames + 1)])
    return per_user


def _plan_interval(scenario: Scenario, etas, queue_bits, mu_b, t_tx: float):
    """Turn forecasts into per-slot bandwidths for the configured scheme."""
    s_frames = scenario.interval_frames
    m_users = len(etas)
    p_s = scenario.p_s
    b_user = np.zeros((m_users, s_frames))
    b_slice = None

    if scenario.scheme == "IF":
        for i in range(m_users):
            mu, b = mu_b[i][0]
            mix = aggregate_distribution([(8.0 * mu, 8.0 * b)])
            quant = mixture_quantile(mix, p_s)
            b_user[i, :] = allocate_if(etas[i], float(queue_bits[i]), quant,
                                       s_frames, t_tx)
    elif scenario.scheme == "IO":
        for i in range(m_users):
            quants = [mixture_quantile(aggregate_distribution([(8.0 * mu, 8.0 * b)]), p_s)
                      for mu, b in mu_b[i]]
            b_user[i, :] = allocate_io(etas[i], float(queue_bits[i]), quants, t_tx)
    elif scenario.scheme == "AF":
        comps = [(8.0 * mu / etas[i], 8.0 * b / etas[i])
                 for i, ((mu, b),) in enumerate(mu_b)]
        quant = mixture_quantile(
            aggregate_distribution(comps, scenario.cluster_tol), p_s)
        b_slice = np.full(s_frames, allocate_af(etas, queue_bits.astype(float),
                                                quant, s_frames, t_tx))
    elif scenario.scheme == "AO":
        quants = []
        for ell in range(s_frames):
            comps = [(8.0 * mu_b[i][ell][0] / etas[i], 8.0 * mu_b[i][ell][1] / etas[i])
                     for i in range(m_users)]
            quants.append(mixture_quantile(
                aggregate_distribution(comps, scenario.cluster_tol), p_s))
        b_slice = allocate_ao(etas, queue_bits.astype(float), quants, t_tx)
    else:
        raise VrsliceError(f"unhandled scheme {scenario.scheme}")
    return b_user, b_slice


def _collect_result(scenario, users, completions, bits_in, bits_served, queues,
                    interval_user_bw, interval_total_bw, t_tx) -> SimResult:
    rows = []
    for i in range(len(users)):
        for frame_id, arrival, size_bits, done_t, mtp_fixed in completions[i]:
            downlink = done_t - arrival
            rows.append((frame_id, i, size_bits, downlink, mtp_fixed + downlink))
    rows.sort(key=lambda r: (r[0], r[1]))
    frame_index = np.array([r[0] for r in rows], dtype=np.int64)
    frame_user = np.array([r[1] for r in rows], dtype=np.int32)
    frame_bits = np.array([r[2] for r in rows], dtype=np.int64)
    downlink_s = np.array([r[3] for r in rows])
    mtp_s = np.array([r[4] for r in rows])
    deadline_met = mtp_s <= scenario.budget.t_max
    backlog = np.array([q.backlog() for q in queues], dtype=np.int64)
    return SimResult(
        scheme=scenario.scheme,
        interval_frames=scenario.interval_frames,
        p_s=scenario.p_s,
        seed=scenario.seed,
        n_users=len(users),
        fps=scenario.budget.fps,
        t_tx=t_tx,
        frame_user=frame_user,
        frame_index=frame_index,
        frame_bits=frame_bits,
        downlink_s=downlink_s,
        mtp_s=mtp_s,
        deadline_met=deadline_met,
        interval_user_bw=interval_user_bw,
        interval_total_bw=interval_total_bw,
        bits_in=bits_in,
        bits_served=bits_served,
        backlog_bits=backlog,
    )


@dataclass(frozen=True)
class KpiSummary:
    """Percentile summary of one run (quantile convention: type 7)."""

    latency_mean_s: float
    latency_median_s: float
    latency_p95_s: float
    latency_p99_s: float
    latency_max_s: float
    mean_user_bandwidth_hz: float
    p95_total_bandwidth_hz: float
    deadline_met_fraction: float
    n_frames: int


def collect_kpis(result: SimResult, which: str = "downlink") -> KpiSummary:
    from .stats import EmpiricalDistribution, empirical_quantile

    lat = result.downlink_s if which == "downlink" else result.mtp_s
    if lat.size == 0:
        nan = float("nan")
        return KpiSummary(nan, nan, nan, nan, nan,
                          result.mean_bandwidth_per_user(),
                          nan, 0.0, 0)
    dist = EmpiricalDistribution.from_samples(lat)
    bw = EmpiricalDistribution.from_samples(result.interval_total_bw)
    return KpiSummary(
        latency_mean_s=float(lat.mean()),
        latency_median_s=empirical_quantile(dist, 0.5),
        latency_p95_s=empirical_quantile(dist, 0.95),
        latency_p99_s=empirical_quantile(dist, 0.99),
        latency_max_s=float(lat.max()),
        mean_user_bandwidth_hz=result.mean_bandwidth_per_user(),
        p95_total_bandwidth_hz=empirical_quantile(bw, 0.95),
        deadline_met_fraction=float(result.deadline_met.mean()),
        n_frames=int(lat.size),
    )


def write_kpi_csvs(result: SimResult, run_id: str, latency_path, bandwidth_path) -> None:
    """Emit the long-format KPI tables (SI units)."""
    with open(latency_path, "w", encoding="utf-8") as fh:
        fh.write("run_id,user,frame,latency_s,deadline_met,downlink_s\n")
        for i in range(result.frame_user.size):
            fh.write(f"{run_id},{result.frame_user[i]},{result.frame_index[i]},"
                     f"{float(result.mtp_s[i])!r},{int(result.deadline_met[i])},"
                     f"{float(result.downlink_s[i])!r}\n")
    with open(bandwidth_path, "w", encoding="utf-8") as fh:
        fh.write("run_id,interval,user,bandwidth_hz\n")
        for k in range(result.interval_total_bw.size):
            for i in range(result.n_users):
                fh.write(f"{run_id},{k},{i},{float(result.interval_user_bw[k, i])!r}\n")
            fh.write(f"{run_id},{k},slice,{float(result.interval_total_bw[k])!r}\n")


def scenario_from_config(cfg: dict, base_dir=".", predictors: Optional[PredictorBank] = None,
                         n_memory: int = 6) -> Scenario:
    """Build a Scenario from the JSON configuration layout.

    Expected keys: ``users`` (list of {trace, rate_bps, eta, offset_frames}),
    ``budget`` ({t_max_s, delta_u_s, tau_p_s, tau_r_s, fps}), ``scheme``,
    ``S``, ``p_s``, ``seed``, ``duration_frames``. Trace metadata comes from
    a same-stem ``.json`` sidecar when present, otherwise from the user
    entry. Unless a fitted bank is passed in, a general-scope bank is fitted
    on the scenario's distinct traces.
    """
    base = Path(base_dir)
    b = cfg["budget"]
    budget = LatencyBudget(t_max=b["t_max_s"], delta_u=b["delta_u_s"],
                           tau_p=b["tau_p_s"], tau_r=b["tau_r_s"], fps=b["fps"])
    users = []
    trace_cache: dict = {}
    for i, entry in enumerate(cfg["users"]):
        tpath = base / entry["trace"]
        if tpath not in trace_cache:
            sidecar = tpath.with_suffix(".json")
            if sidecar.exists():
                meta = load_meta(sidecar)
            else:
                meta = TraceMeta(content=tpath.stem, rate_bps=entry["rate_bps"],
                                 fps=budget.fps)
            trace_cache[tpath] = load_trace(tpath, meta)
        users.append(UserLink(user_id=i, eta=entry["eta"], trace=trace_cache[tpath],
                              offset_frames=entry.get("offset_frames", 0)))
    if predictors is None:
        predictors = fit_predictor_bank(list(trace_cache.values()), cfg["S"],
                                        n_memory=n_memory, scope="GM")
    return Scenario(
        users=tuple(users),
        budget=budget,
        scheme=cfg["scheme"],
        interval_frames=cfg["S"],
        p_s=cfg["p_s"],
        seed=cfg["seed"],
        duration_frames=cfg["duration_frames"],
        predictors=predictors,
        cluster_tol=cfg.get("cluster_tol", 0.01),
    )
