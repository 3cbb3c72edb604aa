"""Covariance optimization for the downlink placement variants.

Three variants share one solver core.  The conventional placement precodes
centrally and forwards quantized antenna signals, so every channel use pays
the fronthaul cost of the superposed signal.  The alternative placement
forwards the precoder itself once per coherence block together with the
UEs' encoded data streams; its fronthaul constraint couples the (amortized)
precoder description cost with the served users' rates.  With
statistics-based precoding the precoder tracks only the channel covariance,
its description cost amortizes away, and the constraint keeps just the data
streams.

All variants maximize a weighted sum rate over per-UE transmit covariances
(relaxation of the precoders) by majorization-minimization: the rate's
interference term and the fronthaul log-det are linearized at the current
iterate, giving a concave inner problem solved by the log-barrier method in
``cran_split.optim``.  Under stochastic CSI the sample-average surrogate
grows by one tangent plane per drawn channel, anchored wherever the iterate
was when the sample arrived, so early samples keep their original anchors.
Precoders are recovered from the covariances by truncated eigendecomposition
with a common power-filling scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from ..optim import BarrierOptions, ConvexSubproblem, maximize_concave
from .costs import (
    AntennaLayout,
    ClusterAssignment,
    downlink_rate,
    embed_covariance,
    embed_indices,
    fronthaul_cost_alt,
    fronthaul_cost_conventional,
    omega_diag,
    rank_reduce,
)

LN2 = math.log(2.0)

CONVENTIONAL = "conventional"
ALT_INSTANT = "alt-instantaneous"
ALT_STOCHASTIC = "alt-stochastic"

_APPROACHES = (CONVENTIONAL, ALT_INSTANT, ALT_STOCHASTIC)

__all__ = [
    "CONVENTIONAL",
    "ALT_INSTANT",
    "ALT_STOCHASTIC",
    "DownlinkProblem",
    "SolverOptions",
    "SolverTrace",
    "CovarianceSolution",
    "RateEvaluation",
    "solve_instantaneous",
    "solve_stochastic",
    "evaluate_instantaneous",
    "evaluate_stochastic",
]


@dataclass(frozen=True)
class DownlinkProblem:
    """Layout plus per-RRH power/fronthaul budgets, coherence-block length,
    per-UE rate weights, and the stream count kept by rank reduction."""

    layout: AntennaLayout
    p_max: tuple
    c_max: tuple
    T: int
    weights: tuple | None = None
    m_streams: tuple | None = None

    def __post_init__(self):
        n_rrh, n_ue = self.layout.n_rrh, self.layout.n_ue
        p = tuple(float(x) for x in self.p_max)
        c = tuple(float(x) for x in self.c_max)
        w = tuple(float(x) for x in self.weights) if self.weights is not None \
            else tuple(1.0 for _ in range(n_ue))
        m = tuple(int(x) for x in self.m_streams) if self.m_streams is not None \
            else tuple(self.layout.n_r)
        if len(p) != n_rrh or len(c) != n_rrh:
            raise ValueError("need one power and one fronthaul budget per RRH")
        if len(w) != n_ue or len(m) != n_ue:
            raise ValueError("need one weight and one stream count per UE")
        if any(x <= 0 for x in p) or any(x <= 0 for x in c):
            raise ValueError("budgets must be positive")
        if any(x < 0 for x in w) or any(x < 1 for x in m):
            raise ValueError("weights must be >= 0 and stream counts >= 1")
        if int(self.T) < 1:
            raise ValueError("coherence block length must be >= 1")
        object.__setattr__(self, "p_max", p)
        object.__setattr__(self, "c_max", c)
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "m_streams", m)


@dataclass
class SolverOptions:
    mm_tol: float = 1e-6
    mm_max_iters: int = 200
    # fronthaul re-anchoring inside one stochastic outer step: the next draw
    # re-anchors everything anyway, so a shallow pass is enough
    inner_tol: float = 1e-5
    inner_max_iters: int = 4
    gap_tol: float = 1e-7
    max_stage_iters: int = 400
    t0: float = 1.0
    t0_warm: float = 1e3
    ssum_window: int = 20
    ssum_tol: float = 1e-4
    resid_tol: float = 1e-6


@dataclass(frozen=True)
class SolverTrace:
    """One outer iteration: objective before, surrogate optimum, true
    objective after, and worst constraint violation at the accepted point."""

    outer_index: int
    anchor_objective: float
    surrogate_value: float
    true_objective: float
    max_residual: float
    barrier_iterations: int
    inner_solves: int
    accepted: bool
    barrier_converged: bool


@dataclass(frozen=True)
class CovarianceSolution:
    """Relaxed covariances, quantization variances, rank-reduced precoders,
    and the per-UE rates the solver certifies for them.

    ``covariances`` and ``precoders`` are in the full transmit order (zero
    rows off the serving cluster); ``rates`` are exact relaxed rates for the
    conventional placement and the solved stream rates for the alternative
    one.
    """

    approach: str
    covariances: list
    sigma2: np.ndarray
    rates: np.ndarray
    precoders: list
    gamma: float
    feasible: bool
    converged: bool
    assignment: ClusterAssignment


@dataclass(frozen=True)
class RateEvaluation:
    sum_rate: float
    stderr: float
    ue_rates: np.ndarray
    ue_stderr: np.ndarray


# ---------------------------------------------------------------------------
# Cluster embedding bookkeeping


class _Embedding:
    """Index plumbing between embedded covariances (one block per served UE,
    order = cluster transmit antennas) and the full transmit order."""

    def __init__(self, layout: AntennaLayout, assignment: ClusterAssignment):
        if assignment.n_rrh != layout.n_rrh or assignment.n_ue != layout.n_ue:
            raise ValueError("assignment does not match the layout")
        self.layout = layout
        self.assignment = assignment
        self.idx = embed_indices(layout, assignment)
        self.orders = [int(ix.size) for ix in self.idx]
        self.served = [j for j in range(layout.n_ue) if self.orders[j] > 0]
        self.pos = {j: jj for jj, j in enumerate(self.served)}
        self.total = layout.total_tx
        # per RRH: (served slot, local antenna positions in that UE's order)
        self.local = []
        for i in range(layout.n_rrh):
            sl = layout.tx_slice(i)
            entries = []
            for kk, k in enumerate(self.served):
                q = np.nonzero((self.idx[k] >= sl.start)
                               & (self.idx[k] < sl.stop))[0]
                if q.size:
                    entries.append((kk, q))
            self.local.append(entries)
        self.mesh = [np.ix_(self.idx[k], self.idx[k]) for k in self.served]
        self.diag_idx = np.diag_indices(self.total)
        # sigma2[omega_rep] is the per-antenna quantization-noise diagonal
        self.omega_rep = np.repeat(np.arange(layout.n_rrh),
                                   np.asarray(layout.n_t))
        self.tx_mask = np.zeros((layout.n_rrh, self.total))
        for i in range(layout.n_rrh):
            self.tx_mask[i, layout.tx_slice(i)] = 1.0

    def full_sum(self, blocks, sigma2=None) -> np.ndarray:
        s = np.zeros((self.total, self.total), dtype=complex)
        for kk in range(len(self.served)):
            s[self.mesh[kk]] += blocks[kk]
        if sigma2 is not None:
            s[self.diag_idx] += np.asarray(sigma2, dtype=float)[self.omega_rep]
        return s

    def full_covariances(self, blocks) -> list:
        out = []
        for j in range(self.layout.n_ue):
            if j in self.pos:
                out.append(embed_covariance(blocks[self.pos[j]],
                                            self.idx[j], self.total))
            else:
                out.append(np.zeros((self.total, self.total), dtype=complex))
        return out

    def embedded_all(self, blocks) -> list:
        """Embedded covariances for every UE, order zero where unserved."""
        out = []
        for j in range(self.layout.n_ue):
            if j in self.pos:
                out.append(blocks[self.pos[j]])
            else:
                out.append(np.zeros((0, 0), dtype=complex))
        return out

    def scatter_rates(self, r) -> np.ndarray:
        out = np.zeros(self.layout.n_ue)
        for jj, j in enumerate(self.served):
            out[j] = float(r[jj])
        return out


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _logdet2(a: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(a)
    if (abs(np.imag(sign)) > 1e-9 if np.iscomplexobj(a) else False) \
            or np.real(sign) <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return float(val) / LN2


# ---------------------------------------------------------------------------
# Sample-average rate surrogate


class _RateSurrogateBank:
    """Running average of per-sample concave rate minorants.

    Each ``add_sample`` freezes a tangent of the interference log-det at the
    current iterate (that sample's anchor, never revisited) and folds its
    constant and linear coefficients into running sums, so evaluation cost
    does not grow with the anchor bookkeeping -- only the exact signal term
    is recomputed per stored channel.
    """

    def __init__(self, emb: _Embedding, use_omega: bool):
        self.emb = emb
        self.use_omega = use_omega
        layout = emb.layout
        ns = len(emb.served)
        self.n_samples = 0
        self.csum = np.zeros(ns)
        self.wsum = np.zeros((ns, layout.n_rrh))
        self._chans = [[] for _ in emb.served]
        self._stack = [None] * ns
        self._stack_all = None
        self._scalar_rx = [layout.n_r[j] == 1 for j in emb.served]
        orders = [emb.orders[k] for k in emb.served]
        self._uniform = (ns > 0 and all(self._scalar_rx)
                         and len(set(orders)) == 1)
        if self._uniform:
            o = orders[0]
            self._ksum_arr = np.zeros((ns, ns, o, o), dtype=complex)
            self.ksum = [[self._ksum_arr[a, b] for b in range(ns)]
                         for a in range(ns)]
            self._rows = np.stack([np.broadcast_to(emb.idx[k][:, None], (o, o))
                                   for k in emb.served])
            self._cols = np.stack([np.broadcast_to(emb.idx[k][None, :], (o, o))
                                   for k in emb.served])
        else:
            self.ksum = [[np.zeros((emb.orders[k], emb.orders[k]),
                                   dtype=complex)
                          for k in emb.served] for _ in emb.served]

    def add_sample(self, h_list, blocks, sigma2) -> None:
        emb = self.emb
        layout = emb.layout
        sa = emb.full_sum(blocks, sigma2 if self.use_omega else None)
        for jj, j in enumerate(emb.served):
            h = np.asarray(h_list[j], dtype=complex)
            if h.shape != (layout.n_r[j], layout.total_tx):
                raise ValueError(f"channel block {j} has wrong shape")
            ix = emb.idx[j]
            m = sa.copy()
            m[np.ix_(ix, ix)] -= blocks[jj]
            a = np.eye(layout.n_r[j]) + h @ m @ h.conj().T
            ainv = np.linalg.inv(a)
            self.csum[jj] += _logdet2(a) - layout.n_r[j] / LN2 \
                + float(np.trace(ainv).real) / LN2
            p = h.conj().T @ ainv @ h
            for kk, k in enumerate(emb.served):
                if kk != jj:
                    ixk = emb.idx[k]
                    self.ksum[jj][kk] += p[np.ix_(ixk, ixk)]
            if self.use_omega:
                for i in range(layout.n_rrh):
                    sl = layout.tx_slice(i)
                    self.wsum[jj, i] += float(np.trace(p[sl, sl]).real)
            self._chans[jj].append(h)
            self._stack[jj] = np.stack(self._chans[jj])
        self.n_samples += 1
        if self._uniform:
            self._stack_all = np.stack([s[:, 0, :] for s in self._stack])

    def values_and_grads(self, blocks, sigma2):
        """Average minorant value and gradient per served UE at the point
        ``(blocks, sigma2)``; gradients are in the embedded orders."""
        emb = self.emb
        layout = emb.layout
        L = self.n_samples
        if L == 0:
            raise RuntimeError("no channel samples in the surrogate bank")
        s = emb.full_sum(blocks, sigma2 if self.use_omega else None)
        ns = len(emb.served)
        if self._uniform:
            hs = self._stack_all                       # (ns, L, n_t total)
            t = 1.0 + np.einsum("jlt,jlt->jl", hs @ s, hs.conj()).real
            heads = np.log2(t).mean(axis=1)
            g = hs.conj().transpose(0, 2, 1) @ (hs / t[:, :, None])
            g = (g + g.conj().transpose(0, 2, 1)) / (2.0 * L * LN2)
            lin = np.einsum("jkab,kab->j", self._ksum_arr.conj(),
                            np.stack(blocks)).real
            vals = heads - self.csum / L - lin / (L * LN2)
            gath = g[:, self._rows, self._cols]        # (ns, ns, o, o)
            gath = gath - self._ksum_arr / (L * LN2)
            gv = [[gath[a, b] for b in range(ns)] for a in range(ns)]
            gs = np.zeros((ns, layout.n_rrh))
            if self.use_omega:
                vals -= (self.wsum @ np.asarray(sigma2, float)) / (L * LN2)
                diag_g = np.einsum("jtt->jt", g).real
                gs = diag_g @ emb.tx_mask.T - self.wsum / (L * LN2)
            return vals, gv, gs
        vals = np.empty(ns)
        gv = []
        gs = np.zeros((ns, layout.n_rrh))
        for jj, j in enumerate(emb.served):
            hs = self._stack[jj]
            if self._scalar_rx[jj]:
                h = hs[:, 0, :]
                t = 1.0 + np.einsum("lt,tu,lu->l", h, s, h.conj()).real
                head = float(np.mean(np.log2(t)))
                g = np.einsum("lt,l,lu->tu", h.conj(), 1.0 / t, h) / (L * LN2)
            else:
                tmat = np.eye(layout.n_r[j]) \
                    + np.einsum("lrt,tu,lsu->lrs", hs, s, hs.conj())
                sign, ld = np.linalg.slogdet(tmat)
                head = float(np.mean(ld)) / LN2
                tinv = np.linalg.inv(tmat)
                g = np.einsum("lrt,lrs,lsu->tu", hs.conj(), tinv, hs) / (L * LN2)
            g = _hermitize(g)
            lin = 0.0
            grads_j = []
            for kk, k in enumerate(emb.served):
                ixk = emb.idx[k]
                gk = np.array(g[np.ix_(ixk, ixk)])
                if kk != jj:
                    lin += float(np.vdot(self.ksum[jj][kk], blocks[kk]).real)
                    gk -= self.ksum[jj][kk] / (L * LN2)
                grads_j.append(gk)
            val = head - self.csum[jj] / L - lin / (L * LN2)
            if self.use_omega:
                val -= float(np.dot(sigma2, self.wsum[jj])) / (L * LN2)
                for i in range(layout.n_rrh):
                    sl = layout.tx_slice(i)
                    gs[jj, i] = float(np.trace(g[sl, sl]).real) \
                        - self.wsum[jj, i] / (L * LN2)
            vals[jj] = val
            gv.append(grads_j)
        return vals, gv, gs

    def exact_rates_mean(self, blocks, sigma2) -> np.ndarray:
        """Per-UE exact rates averaged over the stored channel samples."""
        emb = self.emb
        v_full = emb.full_covariances(blocks)
        sig = sigma2 if self.use_omega else np.zeros(emb.layout.n_rrh)
        total = np.zeros(emb.layout.n_ue)
        for l in range(self.n_samples):
            h_list = [np.zeros((emb.layout.n_r[j], emb.total), dtype=complex)
                      for j in range(emb.layout.n_ue)]
            for jj, j in enumerate(emb.served):
                h_list[j] = self._chans[jj][l]
            total += downlink_rate(h_list, v_full, sig, emb.layout)
        return total / self.n_samples


# ---------------------------------------------------------------------------
# Fronthaul surrogate (tangent majorant of the log-det cost)


class _FronthaulSurrogate:
    """Per-RRH linearization of log2 det(signal block + sigma^2 I) at the
    anchor; the convex -n log2 sigma^2 term stays exact."""

    def __init__(self, emb: _Embedding, blocks, sigma2):
        layout = emb.layout
        sa = emb.full_sum(blocks, None)
        self.emb = emb
        self.const = np.zeros(layout.n_rrh)
        self.tri = np.zeros(layout.n_rrh)
        self.fmat = []        # raw linear coefficients, nats
        self.block_grads = []  # static gradient lists, bits
        for i in range(layout.n_rrh):
            sl = layout.tx_slice(i)
            n = layout.n_t[i]
            # diagonalize the PSD signal block and add sigma^2 analytically;
            # robust when the quantization noise is far below signal power
            w, q = np.linalg.eigh(_hermitize(sa[sl, sl]))
            d = np.clip(w, 0.0, None) + float(sigma2[i])
            binv = _hermitize((q / d) @ q.conj().T)
            self.const[i] = float(np.sum(np.log2(d))) - n / LN2
            self.tri[i] = float(np.sum(1.0 / d))
            fm = []
            gr = []
            loc = dict(emb.local[i])
            for kk, k in enumerate(emb.served):
                f = np.zeros((emb.orders[k], emb.orders[k]), dtype=complex)
                if kk in loc:
                    q = loc[kk]
                    f[np.ix_(q, q)] = binv
                fm.append(f)
                gr.append(f / LN2)
            self.fmat.append(fm)
            self.block_grads.append(gr)

    def value(self, i: int, blocks, sigma2_i: float) -> float:
        lin = 0.0
        for kk, (f, v) in enumerate(zip(self.fmat[i], blocks)):
            lin += float(np.vdot(f, v).real)
        n = self.emb.layout.n_t[i]
        return self.const[i] + (lin + sigma2_i * self.tri[i]) / LN2 \
            - n * math.log2(sigma2_i)

    def sigma_grad(self, i: int, sigma2_i: float) -> float:
        n = self.emb.layout.n_t[i]
        return self.tri[i] / LN2 - n / (sigma2_i * LN2)


# ---------------------------------------------------------------------------
# Subproblem assembly


def _build_subproblem(approach, emb, problem, bank, fsur, vs, sigma, r):
    layout = problem.layout
    n_rrh = layout.n_rrh
    ns = len(emb.served)
    has_sigma = approach != ALT_STOCHASTIC
    has_r = approach != CONVENTIONAL
    r_off = n_rrh if has_sigma else 0
    n_scalars = r_off + (ns if has_r else 0)
    mu = np.array([problem.weights[j] for j in emb.served])
    zero_sigma = np.zeros(n_rrh)

    def precompute(blocks, scalars):
        sig = scalars[:n_rrh] if has_sigma else zero_sigma
        return bank.values_and_grads(blocks, sig)

    zero_blocks = [np.zeros((emb.orders[k], emb.orders[k]), dtype=complex)
                   for k in emb.served]

    if approach == CONVENTIONAL:
        def objective(blocks, scalars, ctx):
            vals, gv, gsb = ctx
            f = float(np.dot(mu, vals))
            gb = [np.zeros_like(z) for z in zero_blocks]
            for jj in range(ns):
                for kk in range(ns):
                    gb[kk] += mu[jj] * gv[jj][kk]
            gs = mu @ gsb
            return f, gb, gs
    else:
        obj_gs = np.zeros(n_scalars)
        obj_gs[r_off:] = mu

        def objective(blocks, scalars, ctx):
            return float(np.dot(mu, scalars[r_off:])), zero_blocks, obj_gs

    constraints = []
    rhs = []

    if has_r:
        def make_coupling(jj):
            def con(blocks, scalars, ctx):
                vals, gv, gsb = ctx
                gb = [-g for g in gv[jj]]
                gs = np.zeros(n_scalars)
                gs[r_off + jj] = 1.0
                if has_sigma:
                    gs[:n_rrh] = -gsb[jj]
                return float(scalars[r_off + jj] - vals[jj]), gb, gs
            return con
        for jj in range(ns):
            constraints.append(make_coupling(jj))
            rhs.append(0.0)

    for i in range(n_rrh):
        slots = [kk for kk, _ in emb.local[i]]
        if approach == CONVENTIONAL:
            def make_fh(i=i):
                def con(blocks, scalars, ctx):
                    gs = np.zeros(n_scalars)
                    gs[i] = fsur.sigma_grad(i, float(scalars[i]))
                    return fsur.value(i, blocks, float(scalars[i])), \
                        fsur.block_grads[i], gs
                return con
        elif approach == ALT_INSTANT:
            def make_fh(i=i, slots=tuple(slots)):
                scaled = [g / problem.T for g in fsur.block_grads[i]]

                def con(blocks, scalars, ctx):
                    gs = np.zeros(n_scalars)
                    gs[i] = fsur.sigma_grad(i, float(scalars[i])) / problem.T
                    val = fsur.value(i, blocks, float(scalars[i])) / problem.T
                    for kk in slots:
                        val += float(scalars[r_off + kk])
                        gs[r_off + kk] = 1.0
                    return val, scaled, gs
                return con
        else:
            def make_fh(i=i, slots=tuple(slots)):
                gs = np.zeros(n_scalars)
                for kk in slots:
                    gs[r_off + kk] = 1.0

                def con(blocks, scalars, ctx):
                    val = float(sum(scalars[r_off + kk] for kk in slots))
                    return val, zero_blocks, gs
                return con
        constraints.append(make_fh())
        rhs.append(problem.c_max[i])

    for i in range(n_rrh):
        def make_power(i=i):
            masks = []
            loc = dict(emb.local[i])
            for kk, k in enumerate(emb.served):
                g = np.zeros((emb.orders[k], emb.orders[k]), dtype=complex)
                if kk in loc:
                    g[loc[kk], loc[kk]] = 1.0
                masks.append(g)
            gs = np.zeros(n_scalars)
            if has_sigma:
                gs[i] = float(layout.n_t[i])

            def con(blocks, scalars, ctx):
                val = 0.0
                for kk, _ in emb.local[i]:
                    q = loc[kk]
                    val += float(np.sum(blocks[kk].diagonal()[q]).real)
                if has_sigma:
                    val += layout.n_t[i] * float(scalars[i])
                return val, masks, gs
            return con
        constraints.append(make_power())
        rhs.append(problem.p_max[i])

    start_scalars = np.zeros(n_scalars)
    if has_sigma:
        start_scalars[:n_rrh] = sigma
    if has_r:
        start_scalars[r_off:] = r

    sub = ConvexSubproblem(
        block_orders=[emb.orders[k] for k in emb.served],
        n_scalars=n_scalars,
        objective=objective,
        constraints=constraints,
        rhs=rhs,
        start_blocks=[np.array(v) for v in vs],
        start_scalars=start_scalars,
        precompute=precompute,
    )
    return sub, r_off, has_sigma, has_r


def _unpack(res, r_off, has_sigma, has_r, n_rrh):
    vs = [np.array(b) for b in res.blocks]
    sigma = np.array(res.scalars[:n_rrh]) if has_sigma else np.zeros(n_rrh)
    r = np.array(res.scalars[r_off:]) if has_r else None
    return vs, sigma, r


# ---------------------------------------------------------------------------
# Feasible starting points


def _feasible_start(approach, emb, problem, h_list):
    layout = problem.layout
    n_rrh = layout.n_rrh
    load = np.array([max(len(emb.assignment.served[i]), 1)
                     for i in range(n_rrh)], dtype=float)
    p = np.asarray(problem.p_max)
    nt = np.asarray(layout.n_t, dtype=float)
    c0 = 0.25 * float(np.min(p / (nt * load)))
    if approach == ALT_STOCHASTIC:
        sigma = np.zeros(n_rrh)
    else:
        sigma = 0.25 * p / nt
    vs = [c0 * np.eye(emb.orders[k], dtype=complex) for k in emb.served]

    if approach != ALT_STOCHASTIC:
        # shrink the common loading until the fronthaul budgets clear with room
        cap = 0.5 if approach == CONVENTIONAL else 0.25
        for _ in range(300):
            s = emb.full_sum(vs, None)
            costs = [fronthaul_cost_conventional(s, float(sigma[i]), i, layout)
                     for i in range(n_rrh)]
            if approach == ALT_INSTANT:
                costs = [c / problem.T for c in costs]
            if all(c <= cap * problem.c_max[i] for i, c in enumerate(costs)):
                break
            vs = [0.5 * v for v in vs]
        else:
            raise ValueError("could not find a fronthaul-feasible start")

    r = None
    if approach == ALT_INSTANT:
        v_full = emb.full_covariances(vs)
        rates = downlink_rate(h_list, v_full, sigma, layout)
        s = sum(v_full)
        costs = [fronthaul_cost_alt(s, float(sigma[i]), i, layout, problem.T)
                 for i in range(n_rrh)]
        r = np.empty(len(emb.served))
        for jj, j in enumerate(emb.served):
            head = min((problem.c_max[i] - costs[i])
                       / max(len(emb.assignment.served[i]), 1)
                       for i in emb.assignment.serving(j))
            r[jj] = max(min(0.9 * rates[j], 0.9 * head), 1e-12)
    return vs, sigma, r


# ---------------------------------------------------------------------------
# True-constraint bookkeeping


def _true_max_residual(approach, emb, problem, vs, sigma, r, rates_ref):
    """Worst signed violation of the original (non-surrogate) constraints,
    each scaled by 1 + |budget|."""
    layout = problem.layout
    s = emb.full_sum(vs, None)
    worst = -np.inf
    for i in range(layout.n_rrh):
        sl = layout.tx_slice(i)
        use = float(np.trace(s[sl, sl]).real)
        if approach != ALT_STOCHASTIC:
            use += layout.n_t[i] * float(sigma[i])
        worst = max(worst, (use - problem.p_max[i])
                    / (1.0 + abs(problem.p_max[i])))
        if approach == CONVENTIONAL:
            cost = fronthaul_cost_conventional(s, float(sigma[i]), i, layout)
        elif approach == ALT_INSTANT:
            cost = fronthaul_cost_alt(s, float(sigma[i]), i, layout, problem.T)
        else:
            cost = 0.0
        if r is not None:
            cost += sum(float(r[emb.pos[j]]) for j in emb.assignment.served[i]
                        if j in emb.pos)
        worst = max(worst, (cost - problem.c_max[i])
                    / (1.0 + abs(problem.c_max[i])))
    if r is not None and rates_ref is not None:
        for jj, j in enumerate(emb.served):
            worst = max(worst, (float(r[jj]) - float(rates_ref[j]))
                        / (1.0 + abs(float(rates_ref[j]))))
    return float(worst)


def _true_objective(approach, emb, problem, vs, sigma, r, h_list):
    if approach == CONVENTIONAL:
        rates = downlink_rate(h_list, emb.full_covariances(vs), sigma,
                              problem.layout)
        return float(np.dot(problem.weights, rates)), rates
    mu = np.array([problem.weights[j] for j in emb.served])
    return float(np.dot(mu, r)), emb.scatter_rates(r)


def _finalize(approach, emb, problem, vs, sigma, rates, converged, rates_ref,
              r, opts):
    layout = problem.layout
    sigma = np.asarray(sigma, dtype=float)
    sigma_eff = np.minimum(sigma, np.asarray(problem.p_max)
                           / np.asarray(layout.n_t, dtype=float))
    v_emb = emb.embedded_all(vs)
    w_emb, gamma = rank_reduce(v_emb, problem.m_streams, sigma_eff,
                               problem.p_max, layout, embed_idx=emb.idx)
    precoders = []
    for j in range(layout.n_ue):
        w = np.zeros((layout.total_tx, problem.m_streams[j]), dtype=complex)
        if emb.idx[j].size:
            w[emb.idx[j], :] = w_emb[j]
        precoders.append(w)
    resid = _true_max_residual(approach, emb, problem, vs, sigma, r, rates_ref)
    return CovarianceSolution(
        approach=approach,
        covariances=emb.full_covariances(vs),
        sigma2=sigma,
        rates=np.asarray(rates, dtype=float),
        precoders=precoders,
        gamma=float(gamma),
        feasible=bool(resid <= opts.resid_tol),
        converged=bool(converged),
        assignment=emb.assignment,
    )


def _check_channels(h_list, layout):
    if len(h_list) != layout.n_ue:
        raise ValueError("need one channel block per UE")
    for j, h in enumerate(h_list):
        if np.asarray(h).shape != (layout.n_r[j], layout.total_tx):
            raise ValueError(f"channel block {j} has wrong shape")


def _barrier_opts(opts: SolverOptions, t0: float) -> BarrierOptions:
    return BarrierOptions(t0=t0, gap_tol=opts.gap_tol,
                          max_stage_iters=opts.max_stage_iters)


# ---------------------------------------------------------------------------
# Instantaneous-CSI solve (one channel realization)


def solve_instantaneous(approach, h_list, problem, *, assignment=None,
                        options=None):
    """Optimize covariances for one channel realization.

    Supports the conventional placement and the per-block alternative one;
    the statistics-based variant has no single-realization counterpart.
    Returns ``(solution, traces)`` with one trace per outer linearization.
    """
    if approach not in (CONVENTIONAL, ALT_INSTANT):
        raise ValueError(f"unsupported approach for instantaneous CSI: "
                         f"{approach!r}")
    opts = options or SolverOptions()
    layout = problem.layout
    if assignment is None:
        assignment = ClusterAssignment.full(layout.n_rrh, layout.n_ue)
    emb = _Embedding(layout, assignment)
    _check_channels(h_list, layout)
    h_list = [np.asarray(h, dtype=complex) for h in h_list]

    vs, sigma, r = _feasible_start(approach, emb, problem, h_list)
    obj, rates = _true_objective(approach, emb, problem, vs, sigma, r, h_list)
    use_omega = True
    traces = []
    converged = False
    t0 = opts.t0
    for outer in range(1, opts.mm_max_iters + 1):
        bank = _RateSurrogateBank(emb, use_omega)
        bank.add_sample(h_list, vs, sigma)
        fsur = _FronthaulSurrogate(emb, vs, sigma)
        sub, r_off, has_sigma, has_r = _build_subproblem(
            approach, emb, problem, bank, fsur, vs, sigma, r)
        res = maximize_concave(sub, _barrier_opts(opts, t0))
        t0 = opts.t0_warm
        nvs, nsigma, nr = _unpack(res, r_off, has_sigma, has_r, layout.n_rrh)
        nobj, nrates = _true_objective(approach, emb, problem, nvs, nsigma,
                                       nr, h_list)
        accepted = nobj >= obj - 1e-9 * (1.0 + abs(obj))
        resid = _true_max_residual(
            approach, emb, problem,
            nvs if accepted else vs, nsigma if accepted else sigma,
            nr if accepted else r,
            downlink_rate(h_list, emb.full_covariances(nvs if accepted else vs),
                          nsigma if accepted else sigma, layout))
        traces.append(SolverTrace(
            outer_index=outer, anchor_objective=obj,
            surrogate_value=float(res.value),
            true_objective=nobj if accepted else obj,
            max_residual=resid, barrier_iterations=res.iterations,
            inner_solves=1, accepted=accepted,
            barrier_converged=res.converged))
        if not accepted:
            break
        gain = nobj - obj
        vs, sigma, r, obj, rates = nvs, nsigma, nr, nobj, nrates
        if gain <= opts.mm_tol * (1.0 + abs(obj)):
            converged = True
            break

    rates_ref = downlink_rate(h_list, emb.full_covariances(vs), sigma, layout)
    solution = _finalize(approach, emb, problem, vs, sigma, rates, converged,
                         rates_ref, r, opts)
    return solution, traces


# ---------------------------------------------------------------------------
# Stochastic-CSI solve (sample-average surrogates)


def solve_stochastic(approach, problem, sampler, *, n_outer, assignment=None,
                     rng=None, options=None):
    """Optimize covariances from channel statistics only.

    ``sampler(rng)`` must return one channel draw as a list of per-UE row
    blocks.  Each outer iteration folds one fresh draw into the
    sample-average surrogate (anchored at the running iterate) and solves
    the resulting concave problem; for the conventional placement the
    fronthaul majorant is re-anchored in an inner loop.  Stops early when a
    trailing window of surrogate optima flattens out.
    """
    if approach not in (CONVENTIONAL, ALT_STOCHASTIC):
        raise ValueError(f"unsupported approach for stochastic CSI: "
                         f"{approach!r}")
    opts = options or SolverOptions()
    rng = np.random.default_rng(rng)
    layout = problem.layout
    if assignment is None:
        assignment = ClusterAssignment.full(layout.n_rrh, layout.n_ue)
    emb = _Embedding(layout, assignment)
    use_omega = approach == CONVENTIONAL

    vs, sigma, _ = _feasible_start(approach, emb, problem, None)
    r = None
    bank = _RateSurrogateBank(emb, use_omega)
    share = None
    if approach == ALT_STOCHASTIC:
        share = np.array([
            min(problem.c_max[i] / max(len(emb.assignment.served[i]), 1)
                for i in emb.assignment.serving(j))
            for j in emb.served])

    traces = []
    seq = []
    if n_outer < 1:
        raise ValueError("need at least one outer iteration")
    t0 = opts.t0
    for outer in range(1, int(n_outer) + 1):
        h_list = sampler(rng)
        _check_channels(h_list, layout)
        bank.add_sample(h_list, vs, sigma)
        anchor = float(seq[-1]) if seq else math.nan
        if approach == CONVENTIONAL:
            val = None
            inner = 0
            iters = 0
            bconv = True
            for inner in range(1, opts.inner_max_iters + 1):
                fsur = _FronthaulSurrogate(emb, vs, sigma)
                sub, r_off, has_sigma, has_r = _build_subproblem(
                    approach, emb, problem, bank, fsur, vs, sigma, r)
                res = maximize_concave(sub, _barrier_opts(opts, t0))
                t0 = opts.t0_warm
                vs, sigma, _ = _unpack(res, r_off, has_sigma, has_r,
                                       layout.n_rrh)
                iters += res.iterations
                bconv = res.converged
                prev, val = val, float(res.value)
                if prev is not None and val - prev <= opts.inner_tol \
                        * (1.0 + abs(val)):
                    break
            resid = float(np.max(res.residuals))
        else:
            vals, _, _ = bank.values_and_grads(vs, np.zeros(layout.n_rrh))
            prev_r = r if r is not None else np.full(len(emb.served), np.inf)
            r_start = np.maximum(
                np.minimum.reduce([prev_r, 0.95 * vals, 0.95 * share]), 1e-12)
            fsur = None
            sub, r_off, has_sigma, has_r = _build_subproblem(
                approach, emb, problem, bank, fsur, vs, sigma, r_start)
            res = maximize_concave(sub, _barrier_opts(opts, t0))
            t0 = opts.t0_warm
            vs, _, r = _unpack(res, r_off, has_sigma, has_r, layout.n_rrh)
            val = float(res.value)
            inner = 1
            iters = res.iterations
            bconv = res.converged
            resid = float(np.max(res.residuals))
        seq.append(val)
        traces.append(SolverTrace(
            outer_index=outer, anchor_objective=anchor, surrogate_value=val,
            true_objective=val, max_residual=resid, barrier_iterations=iters,
            inner_solves=inner, accepted=True, barrier_converged=bconv))
        w = opts.ssum_window
        if len(seq) >= 2 * w:
            m1 = float(np.mean(seq[-w:]))
            m0 = float(np.mean(seq[-2 * w:-w]))
            if abs(m1 - m0) < opts.ssum_tol * (1.0 + abs(m1)):
                break

    rates_ref = bank.exact_rates_mean(vs, sigma)
    if approach == CONVENTIONAL:
        rates = rates_ref
    else:
        rates = emb.scatter_rates(r)
    solution = _finalize(approach, emb, problem, vs, sigma, rates, True,
                         rates_ref, r, opts)
    return solution, traces


# ---------------------------------------------------------------------------
# Evaluation of finished designs


def _rate_lp(caps, budgets, emb, weights):
    """Best weighted stream-rate allocation under per-UE rate caps and
    per-RRH fronthaul budgets (a small LP)."""
    served = emb.served
    if not served:
        return np.zeros(emb.layout.n_ue)
    c = -np.array([weights[j] for j in served])
    bounds = [(0.0, max(float(caps[j]), 0.0)) for j in served]
    a_ub = []
    b_ub = []
    for i in range(emb.layout.n_rrh):
        row = np.zeros(len(served))
        hit = False
        for jj, j in enumerate(served):
            if j in emb.assignment.served[i]:
                row[jj] = 1.0
                hit = True
        if hit:
            a_ub.append(row)
            b_ub.append(max(float(budgets[i]), 0.0))
    res = linprog(c, A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None, bounds=bounds,
                  method="highs")
    if not res.success:
        warnings.warn("stream-rate allocation LP failed; reporting zeros")
        return np.zeros(emb.layout.n_ue)
    return emb.scatter_rates(res.x)


def evaluate_instantaneous(solution: CovarianceSolution, h_list,
                           problem: DownlinkProblem) -> np.ndarray:
    """Per-UE rates delivered by the rank-reduced precoders on one channel
    realization.  The alternative placement additionally fits the stream
    rates to the fronthaul left over after the precoder description."""
    if solution.approach == ALT_STOCHASTIC:
        raise ValueError("statistics-based designs are evaluated on sample "
                         "batches; use evaluate_stochastic")
    layout = problem.layout
    _check_channels(h_list, layout)
    emb = _Embedding(layout, solution.assignment)
    v_red = [w @ w.conj().T for w in solution.precoders]
    rates = downlink_rate(h_list, v_red, solution.sigma2, layout)
    if solution.approach == CONVENTIONAL:
        return rates
    s = sum(v_red)
    budgets = [problem.c_max[i]
               - fronthaul_cost_alt(s, float(solution.sigma2[i]), i, layout,
                                    problem.T)
               for i in range(layout.n_rrh)]
    return _rate_lp(rates, budgets, emb, problem.weights)


def evaluate_stochastic(solution: CovarianceSolution, h_samples,
                        problem: DownlinkProblem) -> RateEvaluation:
    """Ergodic-rate estimate of a statistics-based design over a batch of
    fresh channel draws.

    Conventional designs average the exact per-draw rates.  The alternative
    statistics-based design transmits at fixed stream rates, so its per-UE
    rates solve the budget LP against the Monte Carlo mean caps; the quoted
    error conservatively sums the mean-estimate errors of the cap-limited
    UEs.
    """
    if solution.approach == ALT_INSTANT:
        raise ValueError("per-block designs are evaluated per realization; "
                         "use evaluate_instantaneous")
    layout = problem.layout
    if not h_samples:
        raise ValueError("need at least one channel draw")
    emb = _Embedding(layout, solution.assignment)
    v_red = [w @ w.conj().T for w in solution.precoders]
    sig = solution.sigma2 if solution.approach == CONVENTIONAL \
        else np.zeros(layout.n_rrh)
    mu = np.asarray(problem.weights)
    per_draw = np.empty((len(h_samples), layout.n_ue))
    for l, h_list in enumerate(h_samples):
        _check_channels(h_list, layout)
        per_draw[l] = downlink_rate(h_list, v_red, sig, layout)
    n = per_draw.shape[0]
    ue_mean = per_draw.mean(axis=0)
    ue_se = per_draw.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 \
        else np.zeros(layout.n_ue)
    if solution.approach == CONVENTIONAL:
        sums = per_draw @ mu
        se = float(sums.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return RateEvaluation(sum_rate=float(sums.mean()), stderr=se,
                              ue_rates=ue_mean, ue_stderr=ue_se)
    rates = _rate_lp(ue_mean, problem.c_max, emb, problem.weights)
    capped = rates >= ue_mean - 1e-9 * (1.0 + np.abs(ue_mean))
    stderr = float(np.sum((mu * ue_se)[capped & (rates > 0)]))
    return RateEvaluation(sum_rate=float(np.dot(mu, rates)), stderr=stderr,
                          ue_rates=rates, ue_stderr=np.where(capped, ue_se, 0.0))
