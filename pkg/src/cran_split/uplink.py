"""Uplink functional-split algebra and optimizers.

Two placements of channel estimation are modeled.  In the conventional
split the RRH forwards quantized pilots and quantized data and the BBU
estimates the channel from the noisy, quantized pilots.  In the alternative
split the RRH estimates the channel locally, compresses the estimate and
the data separately, and the BBU decodes with the quantized estimate.
Everything downstream of the split is captured by three scalars per design:
the estimation error variance, the effective data-phase SNR, and the
variance of the channel estimate the decoder actually sees.

Rates are ergodic log-det rates with the data-phase prelog.  A Monte Carlo
evaluator and a deterministic eigenvalue-density quadrature evaluator are
both provided; optimizers do line searches over the fronthaul split
C_p + C_d = C and the training/data power split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import special

from .optim import line_search_1d

LN2 = math.log(2.0)

CONVENTIONAL = "conventional"
ESTIMATE_AT_RRH = "estimate_at_rrh"
APPROACHES = (CONVENTIONAL, ESTIMATE_AT_RRH)

__all__ = [
    "CONVENTIONAL",
    "ESTIMATE_AT_RRH",
    "APPROACHES",
    "UplinkScenario",
    "UplinkDesign",
    "mmse_error_variance",
    "effective_snr",
    "fronthaul_rate",
    "quantization_from_rate",
    "design_for_split",
    "ergodic_rate_mc",
    "ergodic_rate_exact",
    "optimize_fronthaul_split",
    "optimize_power_split",
    "UplinkNetwork",
    "optimize_network",
    "multi_link_sum_rate",
    "MultiLinkRate",
]


def _check_approach(approach: str):
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")


def _check_field(field: str):
    if field not in ("pilot", "data"):
        raise ValueError(f"unknown fronthaul field {field!r}")


@dataclass(frozen=True)
class UplinkScenario:
    """Single-link uplink problem data.

    ``n_tx`` transmit antennas train over ``t_pilot`` of the ``T`` symbols
    of each coherence block (orthogonal pilots need t_pilot >= n_tx),
    ``alpha`` is the path gain, ``p_avg`` the average transmit power over
    the block, and ``c_total`` the fronthaul capacity to split between the
    pilot and data streams.  Powers are linear here; dB lives at the
    configuration boundary.
    """

    n_tx: int
    n_rx: int
    T: int
    t_pilot: int
    alpha: float
    p_avg: float
    c_total: float

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.t_pilot < self.n_tx:
            raise ValueError("orthogonal training needs t_pilot >= n_tx")
        if self.T <= self.t_pilot:
            raise ValueError("need T > t_pilot to leave data symbols")
        if not (0 < self.alpha and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive and finite")
        if not (self.p_avg > 0 and math.isfinite(self.p_avg)):
            raise ValueError("p_avg must be positive and finite")
        if not (self.c_total > 0 and math.isfinite(self.c_total)):
            raise ValueError("c_total must be positive and finite")

    @property
    def t_data(self) -> int:
        return self.T - self.t_pilot


@dataclass(frozen=True)
class UplinkDesign:
    """One operating point: powers, fronthaul split, quantization noise
    variances, and derived estimation/SNR quantities.

    ``sigma2_est`` is the MMSE estimate variance alpha - sigma2_err.  For
    the estimate-at-RRH split the decoder sees the additionally quantized
    estimate, whose variance ``effective_estimate_variance`` subtracts the
    CSI quantization noise as well.
    """

    approach: str
    p_pilot: float
    p_data: float
    c_pilot: float
    c_data: float
    sigma2_pilot: float
    sigma2_data: float
    sigma2_err: float
    sigma2_est: float
    snr_eff: float
    alpha: float

    def effective_estimate_variance(self) -> float:
        if self.approach == ESTIMATE_AT_RRH:
            return max(0.0, self.sigma2_est - self.sigma2_pilot)
        return self.sigma2_est


def mmse_error_variance(approach: str, alpha: float, n_tx: int, t_pilot: int,
                        p_pilot: float, sigma2_pilot: float = 0.0
                        ) -> tuple[float, float]:
    """Per-antenna MMSE estimation error and estimate variances.

    Conventional estimation happens after pilot quantization, so the pilot
    quantization noise ``sigma2_pilot`` inflates the error; local
    estimation at the RRH sees clean pilots.  ``sigma2_pilot`` may be
    ``inf`` (zero-rate pilot stream), in which case the error saturates at
    ``alpha``.
    """
    _check_approach(approach)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("alpha must be positive and finite")
    if p_pilot < 0 or sigma2_pilot < 0:
        raise ValueError("powers and variances must be nonnegative")
    s = sigma2_pilot if approach == CONVENTIONAL else 0.0
    # observed pilot energy scales with the path gain; written to stay
    # exact as s -> inf: a*t*p/(n*(1+s)) -> 0
    ratio = alpha * t_pilot * p_pilot / (n_tx * (1.0 + s)) \
        if not math.isinf(s) else 0.0
    err = alpha / (1.0 + ratio)
    return err, alpha - err


def effective_snr(approach: str, p_data: float, n_tx: int, sigma2_data: float,
                  sigma2_err: float, sigma2_pilot: float = 0.0) -> float:
    """Post-quantization data SNR per receive antenna.

    The denominator collects thermal noise, data quantization noise, and
    self-interference from imperfect CSI; the estimate-at-RRH split adds
    the CSI quantization noise to the latter.
    """
    _check_approach(approach)
    extra = sigma2_pilot if approach == ESTIMATE_AT_RRH else 0.0
    denom = 1.0 + sigma2_data + p_data * (sigma2_err + extra)
    return p_data / (n_tx * denom)


def fronthaul_rate(approach: str, field: str, scen: UplinkScenario,
                   sigma2: float, power: float,
                   sigma2_err: float | None = None) -> float:
    """Fronthaul rate (bits/s/Hz, averaged over the block) needed to carry
    the given stream at quantization noise variance ``sigma2``.

    The conventional split forwards raw pilot/data observations; the
    estimate-at-RRH split forwards the channel estimate (pilot field, needs
    ``sigma2_err``) and the data observations.  A CSI quantization noise at
    or above the estimate variance needs no fronthaul at all and returns
    0.
    """
    _check_approach(approach)
    _check_field(field)
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if field == "data":
        return (scen.t_data * scen.n_rx / scen.T) * math.log2(
            1.0 + (power * scen.alpha + 1.0) / sigma2)
    if approach == CONVENTIONAL:
        return (scen.t_pilot * scen.n_rx / scen.T) * math.log2(
            1.0 + (power * scen.alpha + 1.0) / sigma2)
    if sigma2_err is None:
        raise ValueError("estimate-at-RRH pilot rate needs sigma2_err")
    arg = (scen.alpha - sigma2_err) / sigma2
    if arg <= 1.0:
        return 0.0
    return (scen.n_rx * scen.n_tx / scen.T) * math.log2(arg)


def quantization_from_rate(approach: str, field: str, scen: UplinkScenario,
                           rate: float, power: float,
                           sigma2_err: float | None = None) -> float:
    """Quantization noise variance achieving the given fronthaul rate;
    exact inverse of ``fronthaul_rate``.  Zero rate returns ``inf`` for the
    observation streams (nothing gets through) and the full estimate
    variance for the CSI stream."""
    _check_approach(approach)
    _check_field(field)
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if field == "data":
        if rate == 0.0:
            return math.inf
        denom = 2.0 ** (rate * scen.T / (scen.t_data * scen.n_rx)) - 1.0
        return (power * scen.alpha + 1.0) / denom
    if approach == CONVENTIONAL:
        if rate == 0.0:
            return math.inf
        denom = 2.0 ** (rate * scen.T / (scen.t_pilot * scen.n_rx)) - 1.0
        return (power * scen.alpha + 1.0) / denom
    if sigma2_err is None:
        raise ValueError("estimate-at-RRH pilot inversion needs sigma2_err")
    return (scen.alpha - sigma2_err) * 2.0 ** (
        -rate * scen.T / (scen.n_rx * scen.n_tx))


def design_for_split(approach: str, scen: UplinkScenario, p_pilot: float,
                     p_data: float, c_pilot: float) -> UplinkDesign:
    """Assemble the full operating point for a pilot/data fronthaul split."""
    _check_approach(approach)
    if not (0.0 <= c_pilot <= scen.c_total):
        raise ValueError("c_pilot outside [0, c_total]")
    c_data = scen.c_total - c_pilot
    if approach == CONVENTIONAL:
        s2p = quantization_from_rate(approach, "pilot", scen, c_pilot, p_pilot)
        s2e, s2h = mmse_error_variance(approach, scen.alpha, scen.n_tx,
                                       scen.t_pilot, p_pilot, s2p)
    else:
        s2e, s2h = mmse_error_variance(approach, scen.alpha, scen.n_tx,
                                       scen.t_pilot, p_pilot)
        s2p = quantization_from_rate(approach, "pilot", scen, c_pilot,
                                     p_pilot, s2e)
    s2d = quantization_from_rate(approach, "data", scen, c_data, p_data)
    rho = effective_snr(approach, p_data, scen.n_tx, s2d, s2e, s2p)
    return UplinkDesign(approach=approach, p_pilot=p_pilot, p_data=p_data,
                        c_pilot=c_pilot, c_data=c_data, sigma2_pilot=s2p,
                        sigma2_data=s2d, sigma2_err=s2e, sigma2_est=s2h,
                        snr_eff=rho, alpha=scen.alpha)


# ---------------------------------------------------------------------------
# Ergodic rate evaluation


def _mc_stacked_rate(std: np.ndarray, gain: float, ue_antennas: Sequence[int],
                     td_frac: float, n_samples: int, rng):
    """Monte Carlo of td_frac * E[log2 det(I + gain * H H^H)] where H has
    independent CN(0, std^2) entries; returns the joint rate, its standard
    error, and a successive-decoding per-UE decomposition over the UE
    column groups (per-sample rates sum exactly to the joint rate)."""
    rng = np.random.default_rng(rng)
    n_r, n_t = std.shape
    g = (rng.standard_normal((n_samples, n_r, n_t))
         + 1j * rng.standard_normal((n_samples, n_r, n_t))) / math.sqrt(2.0)
    h = std[None, :, :] * g
    eye = np.eye(n_r)
    bounds = np.cumsum([0] + [int(x) for x in ue_antennas])
    prev = np.zeros(n_samples)
    per_ue = np.empty((len(ue_antennas), n_samples))
    for k in range(1, len(bounds)):
        hk = h[:, :, :bounds[k]]
        m = eye[None] + gain * np.einsum("src,stc->srt", hk, hk.conj())
        sign, logdet = np.linalg.slogdet(m)
        cur = td_frac * logdet / LN2
        per_ue[k - 1] = cur - prev
        prev = cur
    total = prev
    mean = float(np.mean(total))
    se = float(np.std(total, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    ue_mean = per_ue.mean(axis=1)
    ue_se = per_ue.std(axis=1, ddof=1) / math.sqrt(n_samples) if n_samples > 1 \
        else np.full(len(ue_antennas), math.inf)
    return mean, se, ue_mean, ue_se


def ergodic_rate_mc(snr_eff: float, sigma2_est: float, n_tx: int, n_rx: int,
                    td_frac: float, n_samples: int, rng) -> tuple[float, float]:
    """Monte Carlo ergodic rate (T_d/T) E[log2 det(I + rho Hh Hh^H)] with
    estimate entries CN(0, sigma2_est); returns (mean, standard error)."""
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    std = np.full((n_rx, n_tx), math.sqrt(max(sigma2_est, 0.0)))
    mean, se, _, _ = _mc_stacked_rate(std, snr_eff, [n_tx], td_frac,
                                      n_samples, rng)
    return mean, se


_DENSITY_CACHE: dict = {}


def _density_nodes(m: int, d: int, order: int):
    """Gauss-Legendre nodes on a truncated support with the Wishart
    eigenvalue density (Laguerre-polynomial form) folded into the weights.
    Legendre nodes stay stable at any order, unlike high-order
    Gauss-Laguerre rules whose weights overflow beyond a few hundred
    nodes."""
    key = (m, d, order)
    if key not in _DENSITY_CACHE:
        # density ~ x^(2(m-1)+d) e^-x in the tail; this cut leaves < 1e-18
        cut = 60.0 + 12.0 * (2 * m + d)
        y, w = np.polynomial.legendre.leggauss(order)
        x = 0.5 * cut * (y + 1.0)
        w = 0.5 * cut * w
        phi = np.zeros_like(x)
        for k in range(m):
            lk = special.eval_genlaguerre(k, d, x)
            coef = math.factorial(k) / math.factorial(k + d)
            phi += coef * lk * lk
        _DENSITY_CACHE[key] = (x, w * phi * x ** d * np.exp(-x))
    return _DENSITY_CACHE[key]


def ergodic_rate_exact(snr_eff: float, sigma2_est: float, n_tx: int, n_rx: int,
                       td_frac: float, tol: float = 1e-10) -> float:
    """Deterministic ergodic rate via the eigenvalue density of the Wishart
    matrix Hh Hh^H, integrated under node doubling until two estimates
    agree within ``tol``."""
    s = snr_eff * sigma2_est
    if s <= 0.0:
        return 0.0
    m, d = min(n_rx, n_tx), abs(n_rx - n_tx)
    prev = None
    order = 64
    while order <= 2048:
        x, w = _density_nodes(m, d, order)
        est = td_frac * float(np.dot(w, np.log1p(s * x))) / LN2
        if prev is not None and abs(est - prev) < tol * max(1.0, abs(est)):
            return est
        prev = est
        order *= 2
    return prev


# ---------------------------------------------------------------------------
# Split optimizers


def _design_objective(design: UplinkDesign, scen: UplinkScenario,
                      objective: str) -> float:
    if objective == "snr":
        return design.snr_eff
    if objective == "rate":
        return ergodic_rate_exact(design.snr_eff,
                                  design.effective_estimate_variance(),
                                  scen.n_tx, scen.n_rx,
                                  scen.t_data / scen.T)
    raise ValueError(f"unknown objective {objective!r}")


def optimize_fronthaul_split(approach: str, scen: UplinkScenario,
                             p_pilot: float, p_data: float, *,
                             objective: str = "snr", n_grid: int = 64,
                             tol: float | None = None) -> UplinkDesign:
    """Line search over the pilot fronthaul share C_p in [0, C]:
    coarse grid then golden-section refinement.  The default objective is
    the effective SNR; ``objective='rate'`` maximizes the deterministic
    ergodic rate instead (the estimate variance also moves with C_p)."""
    _check_approach(approach)

    def value(c_p):
        d = design_for_split(approach, scen, p_pilot, p_data, c_p)
        return _design_objective(d, scen, objective)

    c_star, _ = line_search_1d(value, 0.0, scen.c_total, n_grid=n_grid,
                               tol=tol if tol is not None else 1e-6 * scen.c_total)
    return design_for_split(approach, scen, p_pilot, p_data, c_star)


def optimize_power_split(approach: str, scen: UplinkScenario, *,
                         objective: str = "rate", n_grid: int = 48,
                         inner_grid: int = 64,
                         inner_objective: str = "snr") -> UplinkDesign:
    """Joint power and fronthaul split: an outer line search over the pilot
    power (data power follows from the average-power budget), with the
    fronthaul split re-optimized at every candidate.  Returns the best
    joint design; the budget (t_p/T) P_p + (t_d/T) P_d = P holds exactly.
    """
    _check_approach(approach)
    tp_frac = scen.t_pilot / scen.T
    td_frac = scen.t_data / scen.T
    p_hi = scen.p_avg / tp_frac

    def data_power(p_p):
        return (scen.p_avg - tp_frac * p_p) / td_frac

    def value(p_p):
        p_d = data_power(p_p)
        if p_d <= 0.0 or p_p <= 0.0:
            return -math.inf
        d = optimize_fronthaul_split(approach, scen, p_p, p_d,
                                     objective=inner_objective,
                                     n_grid=inner_grid)
        return _design_objective(d, scen, objective)

    lo = 1e-6 * p_hi
    hi = (1.0 - 1e-9) * p_hi
    p_star, _ = line_search_1d(value, lo, hi, n_grid=n_grid,
                               include=(scen.p_avg,))
    return optimize_fronthaul_split(approach, scen, p_star, data_power(p_star),
                                    objective=inner_objective,
                                    n_grid=inner_grid)


# ---------------------------------------------------------------------------
# Multi-link stacking


@dataclass(frozen=True)
class UplinkNetwork:
    """Several UEs heard by several RRHs over the same block structure.
    ``alpha[j, i]`` is the path gain from UE j to RRH i.

    UEs train simultaneously: the pilot block must cover each UE's own
    antenna count (t_pilot >= max antennas per UE), not their total, and
    each RRH sees the superposition of all pilots.
    """

    alpha: np.ndarray
    ue_antennas: tuple
    rrh_antennas: tuple
    T: int
    t_pilot: int

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 2:
            raise ValueError("alpha must be (n_ue, n_rrh)")
        if not np.all((alpha > 0) & np.isfinite(alpha)):
            raise ValueError("path gains must be positive and finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "ue_antennas", tuple(int(x) for x in self.ue_antennas))
        object.__setattr__(self, "rrh_antennas", tuple(int(x) for x in self.rrh_antennas))
        if len(self.ue_antennas) != alpha.shape[0]:
            raise ValueError("ue_antennas length mismatch")
        if len(self.rrh_antennas) != alpha.shape[1]:
            raise ValueError("rrh_antennas length mismatch")
        if self.t_pilot < max(self.ue_antennas):
            raise ValueError("training must cover each UE's antennas")
        if self.T <= self.t_pilot:
            raise ValueError("need T > t_pilot")

    @property
    def n_ue(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_rrh(self) -> int:
        return self.alpha.shape[1]

    @property
    def n_tx_total(self) -> int:
        return sum(self.ue_antennas)


@dataclass(frozen=True)
class RrhDesign:
    """Operating point of one RRH inside a network: shared powers, its
    fronthaul split and quantization variances, plus the per-UE estimation
    quantities the joint decoder needs.

    ``err_var[j]`` is UE j's channel estimation error variance at this RRH,
    ``csi_noise[j]`` the CSI quantization noise its estimate picks up on the
    fronthaul (zero when estimation happens at the BBU), ``est_gain[j]`` the
    variance of the estimate the decoder sees, and ``noise`` the total
    per-receive-antenna equivalent noise of the data field.
    """

    approach: str
    p_pilot: float
    p_data: float
    c_pilot: float
    c_data: float
    sigma2_pilot: float
    sigma2_data: float
    err_var: np.ndarray
    csi_noise: np.ndarray
    est_gain: np.ndarray
    noise: float


def design_rrh_split(approach: str, net: UplinkNetwork, i: int,
                     p_pilot: float, p_data: float, c_pilot: float,
                     c_total: float) -> RrhDesign:
    """Assemble RRH i's operating point for a pilot/data fronthaul split.

    Quantizer source powers are composite: during both phases the RRH
    receives every UE at once, so the observation streams carry
    P * sum_j alpha_j + 1 per sample.  The local-estimation split instead
    compresses only the estimate content of the pilot block — per-UE
    estimate variance scaled down by a common per-entry distortion factor,
    with the entry count min(t_pilot, total tx antennas) * n_rx (the
    estimates of all UEs live in the pilot block's row space).
    """
    _check_approach(approach)
    if not (0.0 <= c_pilot <= c_total):
        raise ValueError("c_pilot outside [0, c_total]")
    n_rx = net.rrh_antennas[i]
    alphas = net.alpha[:, i]
    a_src = float(alphas.sum())
    c_data = c_total - c_pilot
    kd = (net.T - net.t_pilot) * n_rx / net.T
    if c_data <= 0.0:
        s2d = math.inf
    else:
        s2d = (p_data * a_src + 1.0) / (2.0 ** (c_data / kd) - 1.0)
    nt = np.asarray(net.ue_antennas, dtype=float)
    if approach == CONVENTIONAL:
        kp = net.t_pilot * n_rx / net.T
        if c_pilot <= 0.0:
            s2p = math.inf
        else:
            s2p = (p_pilot * a_src + 1.0) / (2.0 ** (c_pilot / kp) - 1.0)
        err = np.array([mmse_error_variance(approach, float(a), int(n),
                                            net.t_pilot, p_pilot, s2p)[0]
                        for a, n in zip(alphas, nt)])
        q = np.zeros(net.n_ue)
        gain = np.maximum(alphas - err, 0.0)
    else:
        kp = min(net.t_pilot, net.n_tx_total) * n_rx / net.T
        err = np.array([mmse_error_variance(approach, float(a), int(n),
                                            net.t_pilot, p_pilot)[0]
                        for a, n in zip(alphas, nt)])
        sh2 = alphas - err
        dist = 2.0 ** (-c_pilot / kp)
        q = sh2 * dist
        gain = sh2 - q
    w = nt / nt.sum()
    if approach == ESTIMATE_AT_RRH:
        s2p = float(np.dot(w, q))
    noise = 1.0 + s2d + p_data * float(np.dot(w, err + q))
    return RrhDesign(approach=approach, p_pilot=p_pilot, p_data=p_data,
                     c_pilot=c_pilot, c_data=c_data, sigma2_pilot=s2p,
                     sigma2_data=s2d, err_var=err, csi_noise=q,
                     est_gain=gain, noise=noise)


def _rrh_objective(d: RrhDesign, net: UplinkNetwork, i: int,
                   objective: str) -> float:
    td_frac = (net.T - net.t_pilot) / net.T
    if not math.isfinite(d.noise):
        return -math.inf
    total = 0.0
    for j, n_t in enumerate(net.ue_antennas):
        rho = d.p_data / (n_t * d.noise)
        if objective == "snr":
            total += rho * float(d.est_gain[j])
        elif objective == "rate":
            total += ergodic_rate_exact(rho, float(d.est_gain[j]), n_t,
                                        net.rrh_antennas[i], td_frac)
        else:
            raise ValueError(f"unknown objective {objective!r}")
    return total


def optimize_network(approach: str, net: UplinkNetwork, p_avg: float,
                     c_total: float, *, objective: str = "rate",
                     n_grid: int = 32, inner_grid: int = 64
                     ) -> tuple[float, float, list]:
    """Shared power split plus per-RRH fronthaul splits.

    Each RRH line-searches its own pilot/data fronthaul share; the common
    (P_p, P_d) pair is then chosen by an outer line search on the summed
    deterministic per-link rates (or SNR-weighted gains with
    ``objective='snr'``).  Returns ``(p_pilot, p_data, designs)``.
    """
    _check_approach(approach)
    tp_frac = net.t_pilot / net.T
    td_frac = (net.T - net.t_pilot) / net.T
    p_hi = p_avg / tp_frac

    def data_power(p_p):
        return (p_avg - tp_frac * p_p) / td_frac

    def designs_for(p_p, p_d):
        out = []
        for i in range(net.n_rrh):
            def value(c_p, i=i):
                d = design_rrh_split(approach, net, i, p_p, p_d, c_p, c_total)
                return _rrh_objective(d, net, i, objective)

            c_star, _ = line_search_1d(value, 0.0, c_total, n_grid=inner_grid,
                                       tol=1e-6 * c_total)
            out.append(design_rrh_split(approach, net, i, p_p, p_d, c_star,
                                        c_total))
        return out

    def value(p_p):
        p_d = data_power(p_p)
        if p_d <= 0.0 or p_p <= 0.0:
            return -math.inf
        return sum(_rrh_objective(d, net, i, objective)
                   for i, d in enumerate(designs_for(p_p, p_d)))

    p_star, _ = line_search_1d(value, 1e-6 * p_hi, (1.0 - 1e-9) * p_hi,
                               n_grid=n_grid, include=(p_avg,))
    p_d = data_power(p_star)
    return p_star, p_d, designs_for(p_star, p_d)


@dataclass(frozen=True)
class MultiLinkRate:
    sum_rate: float
    stderr: float
    ue_rates: np.ndarray
    ue_stderr: np.ndarray


def multi_link_sum_rate(approach: str, net: UplinkNetwork,
                        designs: Sequence[RrhDesign], n_samples: int,
                        rng) -> MultiLinkRate:
    """Joint-decoding ergodic sum rate of all UEs across all RRHs.

    Each RRH contributes its quantized observations, whitened by its own
    equivalent noise; cross-UE interference is carried by the stacked
    estimate matrix and the BBU decodes jointly:
    E log2 det(I + sum_pairs (P_d/N_t,j) gain_ji / noise_i ...) via the
    scaled standard-normal stack.  Per-UE rates use the successive-decoding
    decomposition and sum exactly to the joint rate.
    """
    _check_approach(approach)
    if len(designs) != net.n_rrh:
        raise ValueError("need one design per RRH")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    p_data = designs[0].p_data
    for d in designs:
        if d.approach != approach:
            raise ValueError("design approach mismatch")
        if abs(d.p_data - p_data) > 1e-9 * max(1.0, p_data):
            raise ValueError("UEs transmit one power; designs disagree on p_data")
    std = np.zeros((sum(net.rrh_antennas), net.n_tx_total))
    row = 0
    for i, d in enumerate(designs):
        if not math.isfinite(d.noise):
            row += net.rrh_antennas[i]
            continue
        col = 0
        for j in range(net.n_ue):
            n_t = net.ue_antennas[j]
            block = math.sqrt(p_data * max(float(d.est_gain[j]), 0.0)
                              / (n_t * d.noise))
            std[row:row + net.rrh_antennas[i], col:col + n_t] = block
            col += n_t
        row += net.rrh_antennas[i]
    td_frac = (net.T - net.t_pilot) / net.T
    mean, se, ue_mean, ue_se = _mc_stacked_rate(
        std, 1.0, net.ue_antennas, td_frac, n_samples, rng)
    return MultiLinkRate(sum_rate=mean, stderr=se, ue_rates=ue_mean,
                         ue_stderr=ue_se)
