"""Downlink clustering structure, power/rate/fronthaul costs, and the
tangent surrogates used by the solvers.

Covariances are handled in two layouts.  Public cost functions take
full-order transmit covariances (one N_t x N_t PSD matrix per UE, zero on
non-serving rows); the alternative split additionally works with embedded
covariances of order N_t,B_j, mapped into the full order through the
serving-cluster column selectors.  Rates and fronthaul costs are bits per
channel use; the alternative split's fronthaul cost is amortized over the
coherence block.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)

__all__ = [
    "AntennaLayout",
    "ClusterAssignment",
    "SelectionMatrices",
    "cluster_assign",
    "selection_matrices",
    "embed_indices",
    "embed_covariance",
    "omega_diag",
    "rrh_power",
    "downlink_rate",
    "fronthaul_cost_conventional",
    "fronthaul_cost_alt",
    "logdet_linearize",
    "rate_lower_bound",
    "fronthaul_upper_bound",
    "rank_reduce",
]


@dataclass(frozen=True)
class AntennaLayout:
    """Per-RRH transmit and per-UE receive antenna counts."""

    n_t: tuple
    n_r: tuple

    def __post_init__(self):
        object.__setattr__(self, "n_t", tuple(int(x) for x in self.n_t))
        object.__setattr__(self, "n_r", tuple(int(x) for x in self.n_r))
        if any(x < 1 for x in self.n_t) or any(x < 1 for x in self.n_r):
            raise ValueError("antenna counts must be >= 1")

    @property
    def n_rrh(self) -> int:
        return len(self.n_t)

    @property
    def n_ue(self) -> int:
        return len(self.n_r)

    @property
    def total_tx(self) -> int:
        return sum(self.n_t)

    def tx_slice(self, i: int) -> slice:
        lo = sum(self.n_t[:i])
        return slice(lo, lo + self.n_t[i])


@dataclass(frozen=True)
class ClusterAssignment:
    """Which UEs each RRH serves (``served[i]``) and, derived, which RRHs
    serve each UE.  Membership is symmetric by construction."""

    served: tuple
    n_ue: int

    def __post_init__(self):
        served = tuple(tuple(sorted(int(j) for j in m)) for m in self.served)
        object.__setattr__(self, "served", served)
        for m in served:
            for j in m:
                if not 0 <= j < self.n_ue:
                    raise ValueError("served UE index out of range")
            if len(set(m)) != len(m):
                raise ValueError("duplicate UE in cluster")

    @classmethod
    def full(cls, n_rrh: int, n_ue: int) -> "ClusterAssignment":
        return cls(served=tuple(tuple(range(n_ue)) for _ in range(n_rrh)),
                   n_ue=n_ue)

    @property
    def n_rrh(self) -> int:
        return len(self.served)

    def serving(self, j: int) -> tuple:
        return tuple(i for i, m in enumerate(self.served) if j in m)

    def unserved(self) -> tuple:
        return tuple(j for j in range(self.n_ue) if not self.serving(j))


def cluster_assign(norms: np.ndarray, n_c: int) -> ClusterAssignment:
    """Each RRH picks the ``n_c`` strongest UEs by the given per-(UE, RRH)
    link norms; ties go to the lower UE index."""
    norms = np.asarray(norms, dtype=float)
    if norms.ndim != 2:
        raise ValueError("norms must be (n_ue, n_rrh)")
    n_ue, n_rrh = norms.shape
    if not 1 <= n_c <= n_ue:
        raise ValueError("cluster size must be in [1, n_ue]")
    served = []
    for i in range(n_rrh):
        order = np.lexsort((np.arange(n_ue), -norms[:, i]))
        served.append(tuple(sorted(int(j) for j in order[:n_c])))
    a = ClusterAssignment(served=tuple(served), n_ue=n_ue)
    if a.unserved():
        warnings.warn(f"UEs {a.unserved()} are served by no RRH")
    return a


@dataclass(frozen=True)
class SelectionMatrices:
    """0/1 selectors: ``rows[i]`` picks RRH i's transmit antennas,
    ``cols[j]`` picks UE j's receive antennas, and ``embed[j]`` stacks the
    row selectors of UE j's serving cluster (maps embedded covariances and
    precoders into the full transmit order)."""

    rows: tuple
    cols: tuple
    embed: tuple


def selection_matrices(layout: AntennaLayout,
                       assignment: ClusterAssignment) -> SelectionMatrices:
    n_t, n_r = layout.total_tx, sum(layout.n_r)
    rows = []
    for i in range(layout.n_rrh):
        d = np.zeros((n_t, layout.n_t[i]))
        d[layout.tx_slice(i), :] = np.eye(layout.n_t[i])
        rows.append(d)
    cols = []
    off = 0
    for j in range(layout.n_ue):
        d = np.zeros((n_r, layout.n_r[j]))
        d[off:off + layout.n_r[j], :] = np.eye(layout.n_r[j])
        cols.append(d)
        off += layout.n_r[j]
    embed = []
    for j in range(layout.n_ue):
        cluster = assignment.serving(j)
        if cluster:
            embed.append(np.hstack([rows[i] for i in cluster]))
        else:
            warnings.warn(f"UE {j} has an empty serving cluster")
            embed.append(np.zeros((n_t, 0)))
    return SelectionMatrices(rows=tuple(rows), cols=tuple(cols),
                             embed=tuple(embed))


def embed_indices(layout: AntennaLayout,
                  assignment: ClusterAssignment) -> list:
    """Global transmit-antenna indices backing each UE's embedded
    covariance order."""
    out = []
    for j in range(layout.n_ue):
        idx = []
        for i in assignment.serving(j):
            s = layout.tx_slice(i)
            idx.extend(range(s.start, s.stop))
        out.append(np.asarray(idx, dtype=int))
    return out


def embed_covariance(v_small: np.ndarray, idx: np.ndarray,
                     total_tx: int) -> np.ndarray:
    full = np.zeros((total_tx, total_tx), dtype=complex)
    if idx.size:
        full[np.ix_(idx, idx)] = v_small
    return full


def omega_diag(sigma2: Sequence[float], layout: AntennaLayout) -> np.ndarray:
    """Diagonal of the block quantization-noise covariance: each RRH's
    noise variance repeated over its antennas."""
    sigma2 = np.asarray(sigma2, dtype=float)
    if sigma2.shape != (layout.n_rrh,):
        raise ValueError("need one variance per RRH")
    return np.repeat(sigma2, layout.n_t)


def _logdet2(a: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(a)
    if a.dtype.kind == "c":
        if abs(sign.imag) > 1e-9 or sign.real <= 0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
    elif sign <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return float(val) / LN2


def rrh_power(v_list, sigma2_i: float, d_row: np.ndarray) -> float:
    """Transmit power of one RRH: its rows of the summed covariance plus
    its quantization noise over its antennas."""
    v_sum = v_list if isinstance(v_list, np.ndarray) else sum(v_list)
    n_t_i = d_row.shape[1]
    return float(np.real(np.trace(d_row.conj().T @ v_sum @ d_row))) \
        + n_t_i * float(sigma2_i)


def downlink_rate(h_list: Sequence[np.ndarray], v_list: Sequence[np.ndarray],
                  sigma2: Sequence[float], layout: AntennaLayout) -> np.ndarray:
    """Per-UE rates log2 det(I + H_j (S + Om) H_j^H) -
    log2 det(I + H_j (S - V_j + Om) H_j^H) with S the summed full-order
    covariances and Om the block quantization noise."""
    if len(h_list) != layout.n_ue or len(v_list) != layout.n_ue:
        raise ValueError("need one channel row block and covariance per UE")
    s = sum(v_list) + np.diag(omega_diag(sigma2, layout)).astype(complex)
    rates = np.empty(layout.n_ue)
    for j, h in enumerate(h_list):
        if h.shape != (layout.n_r[j], layout.total_tx):
            raise ValueError(f"channel block {j} has wrong shape")
        eye = np.eye(layout.n_r[j])
        a = eye + h @ s @ h.conj().T
        b = eye + h @ (s - v_list[j]) @ h.conj().T
        rates[j] = _logdet2(a) - _logdet2(b)
    return rates


def fronthaul_cost_conventional(v_list, sigma2_i: float, i: int,
                                layout: AntennaLayout) -> float:
    """Bits per channel use to forward RRH i's precoded signal at
    quantization noise sigma2_i.  Zero noise needs infinite rate."""
    if sigma2_i < 0:
        raise ValueError("sigma2 must be nonnegative")
    if sigma2_i == 0.0:
        return math.inf
    v_sum = v_list if isinstance(v_list, np.ndarray) else sum(v_list)
    sl = layout.tx_slice(i)
    block = np.asarray(v_sum, dtype=complex)[sl, sl]
    n = layout.n_t[i]
    # eigenvalues of the PSD signal block with sigma^2 added analytically:
    # stays exact when sigma^2 is many orders below the signal power
    w = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
    if w.size and w[0] < -1e-8 * max(float(w[-1]), 1.0):
        raise np.linalg.LinAlgError("signal covariance block is indefinite")
    w = np.clip(w, 0.0, None)
    return float(np.sum(np.log2(w + sigma2_i))) - n * math.log2(sigma2_i)


def fronthaul_cost_alt(v_list, sigma2_i: float, i: int, layout: AntennaLayout,
                       T: int) -> float:
    """Per-block-use cost of forwarding RRH i's precoder rows once per
    coherence block; the data streams' rates are budgeted separately."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return fronthaul_cost_conventional(v_list, sigma2_i, i, layout) / T


def logdet_linearize(a: np.ndarray, b: np.ndarray) -> float:
    """First-order expansion of log2 det at ``a`` evaluated at ``b``:
    log2 det A + tr(A^-1 (B - A)) / ln 2.  Exact at B = A and an upper
    bound for PSD-ordered perturbations of a concave log det."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need square matrices of equal shape")
    base = _logdet2(a)
    corr = np.trace(np.linalg.solve(a, b - a)).real / LN2
    return float(base + corr)


def rate_lower_bound(h_list, v_list, sigma2, j: int, anchor_v_list,
                     anchor_sigma2, layout: AntennaLayout) -> float:
    """Concave-minus-linear touchdown of UE j's rate: the signal term is
    kept exact, the interference term is linearized at the anchor.  Equals
    the true rate at the anchor and never exceeds it elsewhere."""
    s = sum(v_list) + np.diag(omega_diag(sigma2, layout)).astype(complex)
    s_a = sum(anchor_v_list) + np.diag(omega_diag(anchor_sigma2, layout)).astype(complex)
    h = h_list[j]
    eye = np.eye(layout.n_r[j])
    first = _logdet2(eye + h @ s @ h.conj().T)
    b_cur = eye + h @ (s - v_list[j]) @ h.conj().T
    b_anc = eye + h @ (s_a - anchor_v_list[j]) @ h.conj().T
    return first - logdet_linearize(b_anc, b_cur)


def fronthaul_upper_bound(v_list, sigma2_i: float, anchor_v_list,
                          anchor_sigma2_i: float, i: int,
                          layout: AntennaLayout) -> float:
    """Tangent majorant of the conventional fronthaul cost: the concave
    log det is linearized at the anchor, the convex -log sigma^2 term is
    kept exact."""
    if sigma2_i <= 0 or anchor_sigma2_i <= 0:
        raise ValueError("variances must be positive")
    v_sum = v_list if isinstance(v_list, np.ndarray) else sum(v_list)
    va = anchor_v_list if isinstance(anchor_v_list, np.ndarray) else sum(anchor_v_list)
    sl = layout.tx_slice(i)
    n = layout.n_t[i]
    eye = np.eye(n)
    b_cur = np.asarray(v_sum, dtype=complex)[sl, sl] + sigma2_i * eye
    b_anc = np.asarray(va, dtype=complex)[sl, sl] + anchor_sigma2_i * eye
    return logdet_linearize(b_anc, b_cur) - n * math.log2(sigma2_i)


def rank_reduce(v_list: Sequence[np.ndarray], m_list: Sequence[int],
                sigma2: Sequence[float], p_max: Sequence[float],
                layout: AntennaLayout, embed_idx: Sequence[np.ndarray] | None = None
                ) -> tuple[list, float]:
    """Extract per-UE precoders from relaxed covariances: the top
    ``m_list[j]`` eigenpairs of each covariance, scaled by a common factor
    that makes the most-loaded RRH meet its power budget with equality
    (all-zero covariances give gamma = 0).

    ``v_list`` may be embedded (with ``embed_idx``) or full order.  Returns
    ``(w_list, gamma)`` with each precoder in the same order as its
    covariance.
    """
    n_ue = len(v_list)
    if embed_idx is None:
        embed_idx = [np.arange(layout.total_tx) for _ in range(n_ue)]
    w_raw = []
    for j, v in enumerate(v_list):
        v = np.asarray(v, dtype=complex)
        m = int(m_list[j])
        if v.shape[0] == 0:
            w_raw.append(np.zeros((0, m), dtype=complex))
            continue
        w, vec = np.linalg.eigh(0.5 * (v + v.conj().T))
        take = min(m, v.shape[0])
        lam = np.clip(w[-take:], 0.0, None)
        cols = vec[:, -take:] * np.sqrt(lam)
        if take < m:
            cols = np.hstack([cols, np.zeros((v.shape[0], m - take))])
        w_raw.append(cols)
    use = np.zeros(layout.n_rrh)
    for j, w in enumerate(w_raw):
        if not w.shape[0]:
            continue
        rows_power = np.sum(np.abs(w) ** 2, axis=1)
        for i in range(layout.n_rrh):
            sl = layout.tx_slice(i)
            mask = (embed_idx[j] >= sl.start) & (embed_idx[j] < sl.stop)
            use[i] += float(np.sum(rows_power[mask]))
    head = np.asarray(p_max, dtype=float) - \
        np.asarray(layout.n_t, dtype=float) * np.asarray(sigma2, dtype=float)
    if np.any(head < 0):
        raise ValueError("quantization noise alone exceeds a power budget")
    active = use > 0
    gamma = math.sqrt(float(np.min(head[active] / use[active]))) if active.any() else 0.0
    return [gamma * w for w in w_raw], gamma
