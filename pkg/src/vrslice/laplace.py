"""Laplace residual model and sums of independent Laplace variables.

Prediction residuals of quasi-CBR frame sizes are well described by a
Laplace(mu, b) distribution; the scale b is itself predictable from recent
frame sizes by regressing |w| on the same history window. The aggregate
bandwidth demand of several users is a weighted sum of independent Laplace
variables, whose density has a closed form obtained by partial-fraction
expansion of the product of the component transforms 1/(1 - beta^2 s^2):

* all scales distinct: a signed mixture of ordinary Laplace densities with
  weights gamma_m = prod_{n != m} beta_m^2 / (beta_m^2 - beta_n^2);
* repeated (clustered) scales: generalized components of order k, i.e. the
  k-fold self-convolution of Laplace(0, beta), with weights obtained from
  the derivatives of the remaining factors at the pole (residue method).

Signed weights always sum to 1. Near-equal scales make the distinct-pole
weights blow up, so inputs are clustered to a relative tolerance first and
close scales are averaged into a repeated pole.

The quantile function used for provisioning is the standard Laplace form

    Q(p) = mu + b*ln(2p)        for p <= 1/2
    Q(p) = mu - b*ln(2 - 2p)    for p >  1/2

which increases with p (an expression that applies ln(min(2p, 2-2p))
uniformly would decrease above the median and cannot serve as an upper
provisioning quantile).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateSampleError,
    IllConditionedMixtureError,
)
from .regression import (
    LinearModel,
    PredictionSpec,
    ResidualSeries,
    _design_at,
    fit_ols,
)
from .traces import NormalizedTrace, TraceMeta

# Normalized lower clamp for predicted scales: 1e-6 of the expected frame
# size, preventing zero-width quantiles on quiet history windows.
B_MIN_NORM = 1e-6


@dataclass(frozen=True)
class LaplaceParams:
    """Location (mu) and scale (b > 0); variance is 2 b^2."""

    mu: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"scale must be positive, got {self.b}")


def fit_laplace_mle(samples, fix_mu_zero: bool = False) -> LaplaceParams:
    """Maximum-likelihood Laplace fit.

    mu_hat is the sample median (or exactly 0 when ``fix_mu_zero`` is set,
    appropriate for unbiased regression residuals); b_hat is the mean
    absolute deviation from mu_hat.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    mu = 0.0 if fix_mu_zero else float(np.median(x))
    b = float(np.mean(np.abs(x - mu)))
    if b == 0.0:
        raise DegenerateSampleError("all samples equal; scale is zero")
    return LaplaceParams(mu=mu, b=b)


def laplace_quantile(params: LaplaceParams, p: float) -> float:
    """Inverse CDF of Laplace(mu, b), increasing in p."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if p <= 0.5:
        return params.mu + params.b * math.log(2.0 * p)
    return params.mu - params.b * math.log(2.0 - 2.0 * p)


def laplace_loglik(samples, params: LaplaceParams) -> float:
    x = np.asarray(samples, dtype=float)
    return float(-x.size * math.log(2.0 * params.b) - np.sum(np.abs(x - params.mu)) / params.b)


@dataclass(frozen=True)
class ScaleModel:
    """Linear predictor of the residual Laplace scale from recent frames.

    Weights are in normalized units (same layout as the location model);
    predictions are clamped below at ``B_MIN_NORM`` of the expected frame
    size.
    """

    theta_abs: np.ndarray
    spec: PredictionSpec

    def predict_norm(self, history_norm: np.ndarray) -> float:
        b = self.theta_abs[0] + float(self.theta_abs[1:] @ history_norm)
        return max(b, B_MIN_NORM)

    def predict_bytes(self, history_bytes, meta: TraceMeta) -> float:
        k = meta.norm_factor
        history = np.asarray(history_bytes, dtype=float) * k
        return self.predict_norm(history) / k


def fit_scale_model(residual_series: ResidualSeries, ntrace: NormalizedTrace,
                    spec: PredictionSpec) -> ScaleModel:
    """OLS of |w| (normalized) on the same history window as the predictor.

    For Laplace residuals E|w| = b, so the fit estimates the conditional
    scale directly.
    """
    v = np.asarray(ntrace.values, dtype=float)
    ts = residual_series.t_index
    X, _ = _design_at(v, ts, spec.n_memory, spec.lookahead, spec.horizon)
    abs_w_norm = np.abs(residual_series.w) * ntrace.meta.norm_factor
    model = fit_ols(X, abs_w_norm)
    return ScaleModel(theta_abs=model.theta, spec=spec)


# --- aggregate distribution of weighted Laplace sums ---


@dataclass(frozen=True)
class MixtureComponent:
    beta: float
    gamma: float
    order: int


@dataclass(frozen=True)
class LaplaceMixture:
    """Signed mixture representing a sum of independent Laplace variables.

    ``alpha_total`` is the sum of component locations (the center of
    symmetry); each component is the ``order``-fold self-convolution of
    Laplace(0, beta) weighted by the signed coefficient ``gamma``.
    """

    alpha_total: float
    components: tuple

    @property
    def total_order(self) -> int:
        return sum(c.order for c in self.components)

    @property
    def max_beta(self) -> float:
        return max(c.beta for c in self.components)

    def pdf(self, x):
        return mixture_pdf(self, x)

    def cdf(self, x):
        return mixture_cdf(self, x)

    def quantile(self, p: float) -> float:
        return mixture_quantile(self, p)


def _cluster_scales(betas: np.ndarray, cluster_tol: float):
    """Group near-equal scales; returns (unique betas, multiplicities).

    Scales are sorted and merged single-linkage whenever the relative gap to
    the running cluster mean is below ``cluster_tol``; merged scales are
    averaged.
    """
    order = np.argsort(betas)
    clusters: list[list[float]] = []
    for b in betas[order]:
        if clusters:
            mean = sum(clusters[-1]) / len(clusters[-1])
            if abs(b - mean) / mean < cluster_tol:
                clusters[-1].append(b)
                continue
        clusters.append([b])
    uniq = np.array([sum(c) / len(c) for c in clusters])
    mult = np.array([len(c) for c in clusters], dtype=int)
    return uniq, mult


def _residue_weights(uniq: np.ndarray, mult: np.ndarray) -> list:
    """Partial-fraction coefficients gamma_{h,k} for each cluster.

    For cluster h, the weights are the Taylor coefficients at the pole of
    the product of the remaining factors, computed with the standard
    log-derivative power-series recurrence; with all multiplicities 1 this
    reduces to gamma_m = prod_{n != m} beta_m^2 / (beta_m^2 - beta_n^2).
    """
    out = []
    for h in range(uniq.size):
        p_h = int(mult[h])
        others = np.arange(uniq.size) != h
        # the h-th factor removed; remaining factors as (c_i + d_i w)^{-p_i}
        # in the local variable w = 1 - (beta_h s)^2
        c = 1.0 - (uniq[others] / uniq[h]) ** 2
        d = (uniq[others] / uniq[h]) ** 2
        p_other = mult[others].astype(float)
        # g_0 = prod c_i^{-p_i}; series of d/dw log G has coefficients l_j
        g = np.zeros(p_h)
        g[0] = float(np.prod(c ** (-mult[others])))
        if p_h > 1:
            ell = np.empty(p_h - 1)
            for j in range(p_h - 1):
                ell[j] = float(np.sum(p_other * (-1.0) ** (j + 1) * (d / c) ** (j + 1)))
            for n in range(p_h - 1):
                g[n + 1] = np.dot(ell[: n + 1], g[n::-1]) / (n + 1)
        # gamma_{h,k} multiplies (1 - beta_h^2 s^2)^{-k}; k = p_h - n
        out.append([(k, float(g[p_h - k])) for k in range(1, p_h + 1)])
    return out


def aggregate_distribution(users: Sequence, cluster_tol: float = 1e-6) -> LaplaceMixture:
    """Distribution of sum_m X_m with X_m ~ Laplace(alpha_m, beta_m).

    ``users`` is a sequence of (alpha, beta) pairs (already scaled by
    whatever per-user weighting applies, e.g. inverse spectral efficiency).
    Scales closer than ``cluster_tol`` (relative) are merged into repeated
    poles. Raises :class:`IllConditionedMixtureError` when the resulting
    weights fail the sum-to-one identity, which indicates unmerged
    near-equal scales; retry with a larger tolerance.
    """
    pairs = [(float(a), float(b)) for a, b in users]
    if not pairs:
        raise ValueError("at least one component required")
    betas = np.array([b for _, b in pairs])
    if np.any(betas <= 0):
        raise ValueError("all scales must be positive")
    alpha_total = float(sum(a for a, _ in pairs))
    uniq, mult = _cluster_scales(betas, cluster_tol)
    comps = []
    for h, weights in enumerate(_residue_weights(uniq, mult)):
        for k, gamma in weights:
            comps.append(MixtureComponent(beta=float(uniq[h]), gamma=gamma, order=k))
    mix = LaplaceMixture(alpha_total=alpha_total, components=tuple(comps))
    gamma_sum = sum(c.gamma for c in mix.components)
    if abs(gamma_sum - 1.0) > 1e-9:
        raise IllConditionedMixtureError(
            f"signed weights sum to {gamma_sum!r}, not 1; scales are too close "
            f"to be treated as distinct poles -- increase cluster_tol (now {cluster_tol:g})"
        )
    # a mixture with no negative weight is a convex combination of densities
    # and needs no numerical non-negativity check
    if any(c.gamma < 0 for c in mix.components):
        _check_pdf_nonnegative(mix)
    return mix


def _check_pdf_nonnegative(mix: LaplaceMixture, n_grid: int = 1001) -> None:
    span = 20.0 * mix.max_beta * mix.total_order
    x = np.linspace(mix.alpha_total - span, mix.alpha_total + span, n_grid)
    pdf = mixture_pdf(mix, x)
    peak = float(np.max(pdf))
    if float(np.min(pdf)) < -1e-9 * max(peak, 1e-300):
        raise IllConditionedMixtureError(
            "mixture pdf goes negative on the check grid; increase cluster_tol"
        )


@lru_cache(maxsize=128)
def _component_poly_coeffs(order: int):
    """Polynomial coefficients of the order-k generalized Laplace component.

    The k-fold self-convolution of Laplace(0, beta) decomposes onto
    one-sided gamma kernels with weights A_j = C(2k-j-1, k-j) / 2^(2k-j),
    j = 1..k. Returns (pdf_coeffs, tail_coeffs) for u = |x| / beta:

        pdf(x)  = e^-u / beta * sum_i pdf_coeffs[i] * u^i
        tail(u) = e^-u        * sum_i tail_coeffs[i] * u^i   (mass beyond u)
    """
    A = [math.comb(2 * order - j - 1, order - j) / 2.0 ** (2 * order - j)
         for j in range(1, order + 1)]
    pdf_c = [A[i] / math.factorial(i) for i in range(order)]
    tail_c = [sum(A[i:]) / math.factorial(i) for i in range(order)]
    return np.array(pdf_c), np.array(tail_c)


def _flat_tail_arrays(mix: LaplaceMixture):
    """Per-component arrays for vectorized tail evaluation: (betas, gammas,
    padded tail-coefficient matrix of shape (n_comp, max_order))."""
    n = len(mix.components)
    max_order = max(c.order for c in mix.components)
    betas = np.empty(n)
    gammas = np.empty(n)
    coeffs = np.zeros((n, max_order))
    for i, c in enumerate(mix.components):
        betas[i] = c.beta
        gammas[i] = c.gamma
        coeffs[i, : c.order] = _component_poly_coeffs(c.order)[1]
    return betas, gammas, coeffs


def _signed_tail(x: float, alpha: float, betas, gammas, coeffs) -> float:
    """gamma-weighted tail mass at x (one scalar), Horner over components."""
    u = abs(x - alpha) / betas
    poly = coeffs[:, -1].copy()
    for j in range(coeffs.shape[1] - 2, -1, -1):
        poly *= u
        poly += coeffs[:, j]
    with np.errstate(under="ignore"):
        t = float(np.dot(gammas, np.where(u > 700.0, 0.0, np.exp(-u) * poly)))
    return t


def mixture_pdf(mix: LaplaceMixture, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for comp in mix.components:
        u = np.abs(x - mix.alpha_total) / comp.beta
        pdf_c, _ = _component_poly_coeffs(comp.order)
        poly = np.polynomial.polynomial.polyval(u, pdf_c)
        with np.errstate(under="ignore"):
            out += comp.gamma / comp.beta * np.exp(-u) * poly
    return out if out.ndim else float(out)


def mixture_cdf(mix: LaplaceMixture, x):
    """Closed-form CDF of the signed mixture; monotone from 0 to 1."""
    x = np.asarray(x, dtype=float)
    u_all = x - mix.alpha_total
    tail = np.zeros_like(u_all)
    for comp in mix.components:
        u = np.abs(u_all) / comp.beta
        _, tail_c = _component_poly_coeffs(comp.order)
        poly = np.polynomial.polynomial.polyval(u, tail_c)
        with np.errstate(under="ignore"):
            tail += comp.gamma * np.where(u > 700.0, 0.0, np.exp(-u) * poly)
    cdf = np.where(u_all >= 0, 1.0 - tail, tail)
    cdf = np.clip(cdf, 0.0, 1.0)
    return cdf if cdf.ndim else float(cdf)


def mixture_quantile(mix: LaplaceMixture, p: float) -> float:
    """Inverse CDF by bracketed bisection, |CDF(result) - p| < 1e-9.

    A mixture with a single order-1 component is an ordinary Laplace and is
    inverted in closed form (the bisection limit, reached exactly).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if len(mix.components) == 1 and mix.components[0].order == 1:
        comp = mix.components[0]
        return laplace_quantile(LaplaceParams(mu=mix.alpha_total, b=comp.beta), p)
    betas, gammas, coeffs = _flat_tail_arrays(mix)
    alpha = mix.alpha_total
    half_span = 60.0 * mix.max_beta * mix.total_order
    lo = alpha - half_span
    hi = alpha + half_span
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        t = _signed_tail(mid, alpha, betas, gammas, coeffs)
        c = 1.0 - t if mid >= alpha else t
        if abs(c - p) < 5e-10:
            break
        if c < p:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
    return mid


def mixture_to_dict(mix: LaplaceMixture) -> dict:
    return {
        "alpha_total": mix.alpha_total,
        "components": [
            {"beta": c.beta, "gamma": c.gamma, "order": c.order} for c in mix.components
        ],
    }


def mixture_from_dict(raw: dict) -> LaplaceMixture:
    comps = tuple(
        MixtureComponent(beta=c["beta"], gamma=c["gamma"], order=c["order"])
        for c in raw["components"]
    )
    return LaplaceMixture(alpha_total=raw["alpha_total"], components=comps)


def save_mixture(mix: LaplaceMixture, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mixture_to_dict(mix), fh, indent=2)
        fh.write("\n")


def load_mixture(path) -> LaplaceMixture:
    with open(path, encoding="utf-8") as fh:
        return mixture_from_dict(json.load(fh))
