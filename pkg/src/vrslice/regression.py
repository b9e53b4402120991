"""Linear frame-size prediction.

A predictor estimates the average size of the ``horizon`` frames starting
``lookahead`` frames ahead, as an affine function of the last ``n_memory``
observed sizes:

    F_hat(t) = theta_0 + sum_{j=1..N} theta_j * F(t - j + 1)

Models are fitted and stored on normalized traces (frame bits over expected
frame size), so a single weight vector serves any combination of nominal
rate and frame rate; byte-domain weights are recovered by scaling with the
expected frame size.

Frame indices follow the trace convention t = 1..L. A design row exists for
every t where both the N-frame history and the full prediction target lie
inside the trace, i.e. t = N .. L - lookahead - horizon + 1 (t = 0 is legal
for memoryless models).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    HistoryLengthError,
    NoConvergenceError,
    OutOfRangeError,
    RankDeficientError,
    ScopeMismatchError,
    TraceTooShortError,
)
from .traces import FrameTrace, NormalizedTrace, TraceMeta, normalize

SCOPES = ("CRM", "CM", "GM")


@dataclass(frozen=True)
class PredictionSpec:
    """Shape of a prediction problem.

    n_memory  -- number of past frames the model sees (N >= 0)
    horizon   -- number of future frames averaged in the target (T >= 1)
    lookahead -- frames between the last observation and the target (tau >= 1)
    method    -- 'ols' or 'quantile'
    p_s       -- target quantile, required iff method == 'quantile'
    """

    n_memory: int
    horizon: int = 1
    lookahead: int = 1
    method: str = "ols"
    p_s: Optional[float] = None

    def __post_init__(self):
        if self.n_memory < 0:
            raise ValueError("n_memory must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.lookahead < 1:
            raise ValueError("lookahead must be >= 1")
        if self.method not in ("ols", "quantile"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "quantile":
            if self.p_s is None or not 0.0 < self.p_s < 1.0:
                raise ValueError("quantile method requires 0 < p_s < 1")
        elif self.p_s is not None:
            raise ValueError("p_s is only meaningful for the quantile method")


@dataclass(frozen=True)
class LinearModel:
    """Fitted weight vector (normalized units) plus fit metadata."""

    theta: np.ndarray
    spec: PredictionSpec
    scope: str = "CRM"
    fit_loss: float = float("nan")
    trained_on: tuple = ()

    def __post_init__(self):
        if len(self.theta) != self.spec.n_memory + 1:
            raise ValueError("theta length must equal n_memory + 1")
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}")


@dataclass(frozen=True)
class ResidualSeries:
    """Prediction residuals w(t) = target(t + tau) - prediction(t), bytes."""

    w: np.ndarray
    t_index: np.ndarray
    spec: PredictionSpec


def target_average(trace: FrameTrace, t: int, horizon: int) -> float:
    """Mean size (bytes) of frames t .. t+horizon-1 (t is 1-based)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if t < 1 or t + horizon - 1 > len(trace):
        raise OutOfRangeError(f"frames {t}..{t + horizon - 1} outside 1..{len(trace)}")
    return float(trace.sizes[t - 1 : t + horizon - 1].mean())


def design_t_range(length: int, spec: PredictionSpec) -> np.ndarray:
    """The t values that admit a design row, in increasing order."""
    first = spec.n_memory
    last = length - spec.lookahead - spec.horizon + 1
    if length < spec.n_memory + spec.lookahead + spec.horizon:
        raise TraceTooShortError(
            f"trace length {length} < N + tau + T = "
            f"{spec.n_memory + spec.lookahead + spec.horizon}"
        )
    return np.arange(first, last + 1)


def build_design(ntrace: NormalizedTrace, spec: PredictionSpec):
    """Design matrix and target vector on a normalized trace.

    Row for time t: [1, F(t), F(t-1), ..., F(t-N+1)]; target: mean of
    F(t+tau .. t+tau+T-1). Row count is L - N - tau - T + 2.
    """
    v = np.asarray(ntrace.values, dtype=float)
    ts = design_t_range(len(v), spec)
    return _design_at(v, ts, spec.n_memory, spec.lookahead, spec.horizon)


def _design_at(v: np.ndarray, ts: np.ndarray, n_memory: int, lookahead: int, horizon: int):
    X = np.empty((ts.size, n_memory + 1))
    X[:, 0] = 1.0
    for j in range(1, n_memory + 1):
        X[:, j] = v[ts - j]
    if horizon == 1:
        y = v[ts + lookahead - 1]
    else:
        csum = np.concatenate(([0.0], np.cumsum(v)))
        y = (csum[ts + lookahead + horizon - 1] - csum[ts + lookahead - 1]) / horizon
    return X, y


def _lstsq_full_rank(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    if X.shape[0] < X.shape[1]:
        raise RankDeficientError(
            f"{X.shape[0]} rows < {X.shape[1]} columns", cond=float("inf")
        )
    sol, _, rank, svals = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else float("inf")
        raise RankDeficientError("design matrix is rank deficient", cond=cond)
    return sol


def fit_ols(X, y, spec: Optional[PredictionSpec] = None, scope: str = "CRM",
            trained_on: tuple = ()) -> LinearModel:
    """Least-squares fit; raises :class:`RankDeficientError` on collinear X."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = _lstsq_full_rank(X, y)
    if spec is None:
        spec = PredictionSpec(n_memory=X.shape[1] - 1)
    resid = y - X @ theta
    return LinearModel(theta=theta, spec=spec, scope=scope,
                       fit_loss=float(resid @ resid), trained_on=trained_on)


def pinball_loss(u: np.ndarray, p_s: float) -> float:
    """Total tilted absolute loss sum_t u_t * (p_s - 1{u_t < 0})."""
    u = np.asarray(u, dtype=float)
    return float(np.sum(np.where(u >= 0, p_s * u, (p_s - 1.0) * u)))


def _quantile_interior_point(X: np.ndarray, y: np.ndarray, p_s: float,
                             max_iter: int, gap_tol: float) -> np.ndarray:
    """Primal-dual interior-point solve of the pinball-loss program.

    Works on the bounded dual max y'a s.t. X'a = (1-p) X'1, a in [0,1]^n
    (the Frisch-Newton formulation); the multipliers of the equality
    constraint are the regression coefficients. Each Mehrotra
    predictor-corrector step only factors a (N+1) x (N+1) matrix.
    """
    n, k = X.shape
    c = -y
    b = (1.0 - p_s) * X.T.sum(axis=1)
    # strictly interior start; nu is the equality multiplier, theta = -nu
    x = np.full(n, 1.0 - p_s)
    s = 1.0 - x
    nu = -_lstsq_full_rank(X, y)
    r = c - X @ nu
    delta = 0.1 * (1.0 + float(np.mean(np.abs(r))))
    z = np.maximum(r, 0.0) + delta
    w = z - r
    gap = float(z @ x + w @ s)
    scale = float(n * (1.0 + np.mean(np.abs(y))))

    def max_step(v, dv):
        neg = dv < 0
        return min(1.0, float(np.min(-v[neg] / dv[neg])) if neg.any() else 1.0)

    for _ in range(max_iter):
        if gap < gap_tol * scale:
            return -nu
        d = 1.0 / (z / x + w / s)
        r_p = b - X.T @ x
        r_d = c - X @ nu - z + w
        M = np.linalg.cholesky(X.T @ (X * d[:, None]))

        def solve_dnu(extra):
            rhs = r_p + X.T @ (d * (r_d + extra))
            half = np.linalg.solve(M, rhs)
            return np.linalg.solve(M.T, half)

        # affine (predictor) direction: complementarity target 0
        dnu = solve_dnu(z - w)
        dx = d * (X @ dnu - r_d - z + w)
        dz = -z - (z / x) * dx
        dw = -w + (w / s) * dx
        ap = 0.9995 * min(max_step(x, dx), max_step(s, -dx))
        ad = 0.9995 * min(max_step(z, dz), max_step(w, dw))
        gap_aff = float((z + ad * dz) @ (x + ap * dx) + (w + ad * dw) @ (s - ap * dx))
        mu = (gap_aff / gap) ** 3 * gap / (2.0 * n)

        # corrector: centering plus second-order complementarity terms
        comp_x = (mu - dx * dz) / x
        comp_s = (mu + dx * dw) / s
        dnu = solve_dnu(z - w - comp_x + comp_s)
        dx = d * (X @ dnu - r_d - z + w + comp_x - comp_s)
        dz = comp_x - z - (z / x) * dx
        dw = comp_s - w + (w / s) * dx
        ap = 0.9995 * min(max_step(x, dx), max_step(s, -dx))
        ad = 0.9995 * min(max_step(z, dz), max_step(w, dw))

        x = x + ap * dx
        s = s - ap * dx
        z = z + ad * dz
        w = w + ad * dw
        nu = nu + ad * dnu
        gap = float(z @ x + w @ s)
    raise NoConvergenceError("quantile interior-point hit the iteration cap",
                             gap=gap / scale)


def fit_quantile(X, y, p_s: float, spec: Optional[PredictionSpec] = None,
                 scope: str = "CRM", trained_on: tuple = (),
                 max_iter: int = 100, gap_tol: float = 1e-10) -> LinearModel:
    """Quantile regression minimizing the pinball loss.

    Solved to optimality with a primal-dual interior-point method; raises
    :class:`NoConvergenceError` (carrying the final relative duality gap)
    at the iteration cap and :class:`RankDeficientError` on collinear X.
    """
    if not 0.0 < p_s < 1.0:
        raise ValueError(f"p_s must be in (0, 1), got {p_s}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _lstsq_full_rank(X, y)  # surfaces rank problems before the solve
    theta = _quantile_interior_point(X, y, p_s, max_iter, gap_tol)
    if spec is None:
        spec = PredictionSpec(n_memory=X.shape[1] - 1, method="quantile", p_s=p_s)
    loss = pinball_loss(y - X @ theta, p_s)
    return LinearModel(theta=theta, spec=spec, scope=scope,
                       fit_loss=loss, trained_on=trained_on)


def predict(model: LinearModel, history_bytes, meta: TraceMeta) -> float:
    """Denormalized next-target prediction in bytes, clamped at zero.

    ``history_bytes`` holds the last N frame sizes, most recent first.
    """
    n = model.spec.n_memory
    history = np.asarray(history_bytes, dtype=float)
    if history.shape != (n,):
        raise HistoryLengthError(f"expected {n} history frames, got {history.shape}")
    k = meta.norm_factor
    pred_norm = model.theta[0] + float(model.theta[1:] @ (history * k))
    return max(pred_norm, 0.0) / k


def fit_scoped(ntraces: Sequence[NormalizedTrace], spec: PredictionSpec,
               scope: str) -> LinearModel:
    """Fit one model over a trace collection at the requested scope.

    CRM takes exactly one trace, CM a set sharing the same content label,
    GM anything. Designs are stacked per trace, so no row mixes frames from
    two traces.
    """
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    ntraces = list(ntraces)
    if not ntraces:
        raise ScopeMismatchError("at least one trace required")
    if scope == "CRM" and len(ntraces) != 1:
        raise ScopeMismatchError(f"CRM takes exactly 1 trace, got {len(ntraces)}")
    if scope == "CM":
        names = {t.meta.content for t in ntraces}
        if len(names) != 1:
            raise ScopeMismatchError(f"CM requires a single content, got {sorted(names)}")
    blocks = [build_design(t, spec) for t in ntraces]
    X = np.vstack([b[0] for b in blocks])
    y = np.concatenate([b[1] for b in blocks])
    ids = tuple(f"{t.meta.content}@{t.meta.rate_bps:g}bps" for t in ntraces)
    if spec.method == "quantile":
        return fit_quantile(X, y, spec.p_s, spec=spec, scope=scope, trained_on=ids)
    return fit_ols(X, y, spec=spec, scope=scope, trained_on=ids)


def residuals(model: LinearModel, trace: FrameTrace) -> ResidualSeries:
    """Byte-domain residuals of the raw (unclamped) linear prediction."""
    ntrace = normalize(trace)
    X, y = build_design(ntrace, model.spec)
    w_norm = y - X @ model.theta
    ts = design_t_range(len(trace), model.spec)
    return ResidualSeries(w=w_norm / trace.meta.norm_factor, t_index=ts, spec=model.spec)


def residual_std_surface(trace: FrameTrace, n_range, tau_range, horizon: int,
                         method: str = "ols", p_s: Optional[float] = None) -> np.ndarray:
    """In-sample residual std (bytes) per (n_memory, lookahead) cell.

    All cells are fitted on a common set of rows (those valid for the
    largest N and tau in the grid), so nested models are comparable and the
    std is non-increasing in N by construction.
    """
    n_range = list(n_range)
    tau_range = list(tau_range)
    n_max, tau_max = max(n_range), max(tau_range)
    v = normalize(trace).values
    first = n_max
    last = len(v) - tau_max - horizon + 1
    if last < first:
        raise TraceTooShortError("trace too short for the requested grid")
    ts = np.arange(first, last + 1)
    out = np.empty((len(n_range), len(tau_range)))
    scale = 1.0 / trace.meta.norm_factor
    for j, tau in enumerate(tau_range):
        X_full, y = _design_at(v, ts, n_max, tau, horizon)
        for i, n in enumerate(n_range):
            X = X_full[:, : n + 1]
            if method == "quantile":
                model_theta = fit_quantile(X, y, p_s).theta
            else:
                model_theta = fit_ols(X, y).theta
            out[i, j] = float(np.std(y - X @ model_theta)) * scale
    return out


def model_to_dict(model: LinearModel) -> dict:
    spec = model.spec
    return {
        "theta": [float(x) for x in model.theta],
        "spec": {
            "n_memory": spec.n_memory,
            "horizon": spec.horizon,
            "lookahead": spec.lookahead,
            "method": spec.method,
            "p_s": spec.p_s,
        },
        "scope": model.scope,
        "trained_on": list(model.trained_on),
    }


def model_from_dict(raw: dict) -> LinearModel:
    spec = PredictionSpec(
        n_memory=raw["spec"]["n_memory"],
        horizon=raw["spec"]["horizon"],
        lookahead=raw["spec"]["lookahead"],
        method=raw["spec"]["method"],
        p_s=raw["spec"]["p_s"],
    )
    return LinearModel(
        theta=np.asarray(raw["theta"], dtype=float),
        spec=spec,
        scope=raw["scope"],
        trained_on=tuple(raw["trained_on"]),
    )


def save_model(model: LinearModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> LinearModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
