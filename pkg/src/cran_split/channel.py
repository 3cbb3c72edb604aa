"""Geometry, path loss, spatial correlation, and block-fading channel draws.

Distances feed an inverse polynomial path-loss law; downlink links
additionally carry a one-ring transmit correlation whose angle and angular
spread follow from the scatterer-ring radius.  Channels are drawn per
coherence block, either i.i.d. complex Gaussian (uplink) or with the
transmit-side Kronecker structure (downlink, receive side white).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optim import gauss_legendre

__all__ = [
    "PathLossParams",
    "OneRingParams",
    "Geometry",
    "path_loss",
    "angle_and_spread",
    "one_ring_correlation",
    "hermitian_sqrt",
    "LinkModel",
    "ChannelBlock",
    "build_uplink_model",
    "build_downlink_model",
    "sample_channel",
    "stack_uplink",
    "ue_channel_rows",
    "stochastic_channel_norms",
]


@dataclass(frozen=True)
class PathLossParams:
    """Inverse polynomial path-loss law 1 / (1 + (d / d0)^eta)."""

    d0: float = 50.0
    eta: float = 3.0

    def __post_init__(self):
        if not (self.d0 > 0 and math.isfinite(self.d0)):
            raise ValueError("d0 must be positive and finite")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")


@dataclass(frozen=True)
class OneRingParams:
    """Scatterer ring radius around the terminal, in the same units as
    positions."""

    scattering_radius: float = 10.0

    def __post_init__(self):
        if not (self.scattering_radius > 0 and math.isfinite(self.scattering_radius)):
            raise ValueError("scattering_radius must be positive and finite")


@dataclass(frozen=True)
class Geometry:
    """Planar node layout: RRH positions, UE positions, square cell side."""

    rrh: np.ndarray
    ue: np.ndarray
    area_side: float = 500.0

    def __post_init__(self):
        rrh = np.atleast_2d(np.asarray(self.rrh, dtype=float))
        ue = np.atleast_2d(np.asarray(self.ue, dtype=float))
        if rrh.ndim != 2 or rrh.shape[1] != 2 or rrh.shape[0] < 1:
            raise ValueError("rrh must be a nonempty (n, 2) array")
        if ue.ndim != 2 or ue.shape[1] != 2 or ue.shape[0] < 1:
            raise ValueError("ue must be a nonempty (n, 2) array")
        if not (np.isfinite(rrh).all() and np.isfinite(ue).all()):
            raise ValueError("positions must be finite")
        if not (self.area_side > 0 and math.isfinite(self.area_side)):
            raise ValueError("area_side must be positive and finite")
        object.__setattr__(self, "rrh", rrh)
        object.__setattr__(self, "ue", ue)

    @classmethod
    def uniform(cls, n_rrh: int, n_ue: int, area_side: float, rng) -> "Geometry":
        """Draw all nodes uniformly on the square [0, side]^2."""
        rng = np.random.default_rng(rng)
        rrh = rng.uniform(0.0, area_side, size=(n_rrh, 2))
        ue = rng.uniform(0.0, area_side, size=(n_ue, 2))
        return cls(rrh=rrh, ue=ue, area_side=area_side)

    @property
    def n_rrh(self) -> int:
        return self.rrh.shape[0]

    @property
    def n_ue(self) -> int:
        return self.ue.shape[0]

    def distances(self) -> np.ndarray:
        """Pairwise UE-to-RRH distances, shape (n_ue, n_rrh)."""
        diff = self.ue[:, None, :] - self.rrh[None, :, :]
        return np.linalg.norm(diff, axis=2)


def path_loss(distance, params: PathLossParams = PathLossParams()):
    """Average channel power gain at the given distance(s)."""
    d = np.asarray(distance, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and nonnegative")
    out = 1.0 / (1.0 + (d / params.d0) ** params.eta)
    return float(out) if np.isscalar(distance) else out


def angle_and_spread(rrh_xy, ue_xy,
                     params: OneRingParams = OneRingParams()) -> tuple[float, float]:
    """Bearing of the UE seen from the RRH (from the +x axis) and the
    half angular spread subtended by its scatterer ring."""
    r = np.asarray(rrh_xy, dtype=float)
    u = np.asarray(ue_xy, dtype=float)
    if r.shape != (2,) or u.shape != (2,):
        raise ValueError("positions must be planar points")
    dx, dy = u - r
    d = math.hypot(dx, dy)
    if d == 0.0:
        raise ValueError("coincident RRH and UE positions")
    theta = math.atan2(dy, dx)
    delta = math.atan(params.scattering_radius / d)
    return theta, delta


def one_ring_correlation(theta: float, delta: float, alpha: float,
                         n: int, tol: float = 1e-10) -> np.ndarray:
    """Transmit correlation matrix of a uniform linear array facing a ring
    of scatterers: entry (m, k) averages exp(-j*pi*(m-k)*sin(phi)) over
    arrival angles phi in [theta - delta, theta + delta], scaled by the
    path gain alpha.

    The matrix depends on (m - k) only, so one quadrature per off-diagonal
    lag fills a Hermitian Toeplitz matrix; the diagonal is exactly alpha.
    """
    if not (delta > 0 and math.isfinite(delta)):
        raise ValueError("delta must be positive")
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("alpha must be positive")
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    scale = alpha / (2.0 * delta)
    lags = np.zeros(n, dtype=complex)
    lags[0] = alpha
    for lag in range(1, n):
        val = gauss_legendre(
            lambda phi, l=lag: np.exp(-1j * math.pi * l * np.sin(phi)),
            theta - delta, theta + delta, tol=tol)
        lags[lag] = scale * val
    sigma = np.empty((n, n), dtype=complex)
    for m in range(n):
        for k in range(n):
            sigma[m, k] = lags[m - k] if m >= k else np.conj(lags[k - m])
    return sigma


def hermitian_sqrt(a: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Hermitian PSD square root via eigendecomposition.

    Rejects non-Hermitian input; eigenvalues in [-1e-10, 0) are clamped to
    zero, anything more negative violates the PSD precondition.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("need a square matrix")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 1.0)
    if np.abs(a - a.conj().T).max() > tol * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    if w.size and w[0] < -1e-10 * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.conj().T
    return 0.5 * (s + s.conj().T)


@dataclass(frozen=True)
class ChannelBlock:
    """One coherence block of fading: ``blocks[(ue j, rrh i)]`` holds the
    complex matrix of that link, shaped (receive antennas, transmit
    antennas) for the link direction -- (RRH, UE) antennas on the uplink,
    (UE, RRH) antennas on the downlink."""

    blocks: dict
    coherence_index: int = 0


@dataclass(frozen=True)
class LinkModel:
    """Large-scale statistics for every (UE, RRH) pair.

    ``alpha[j, i]`` is the path gain between UE j and RRH i.  On the
    downlink, ``tx_corr_sqrt[j][i]`` carries the Hermitian square root of
    that pair's transmit correlation (its diagonal absorbs alpha); when
    absent, entries are i.i.d. with variance alpha.
    """

    direction: str
    alpha: np.ndarray
    ue_antennas: tuple
    rrh_antennas: tuple
    tx_corr_sqrt: tuple | None = None

    def __post_init__(self):
        if self.direction not in ("uplink", "downlink"):
            raise ValueError("direction must be 'uplink' or 'downlink'")
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
        if any(x < 1 for x in self.ue_antennas + self.rrh_antennas):
            raise ValueError("antenna counts must be >= 1")

    @property
    def n_ue(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_rrh(self) -> int:
        return self.alpha.shape[1]


def build_uplink_model(geometry: Geometry, pl: PathLossParams,
                       ue_antennas: Sequence[int],
                       rrh_antennas: Sequence[int]) -> LinkModel:
    """Uplink model: i.i.d. Rayleigh entries with per-pair path gain."""
    alpha = path_loss(geometry.distances(), pl)
    return LinkModel(direction="uplink", alpha=alpha,
                     ue_antennas=tuple(ue_antennas),
                     rrh_antennas=tuple(rrh_antennas))


def build_downlink_model(geometry: Geometry, pl: PathLossParams,
                         oring: OneRingParams,
                         rrh_antennas: Sequence[int],
                         ue_antennas: Sequence[int]) -> LinkModel:
    """Downlink model: transmit-side one-ring correlation per link, white
    receive side."""
    alpha = path_loss(geometry.distances(), pl)
    sqrts = []
    for j in range(geometry.n_ue):
        row = []
        for i in range(geometry.n_rrh):
            theta, delta = angle_and_spread(geometry.rrh[i], geometry.ue[j], oring)
            sigma = one_ring_correlation(theta, delta, float(alpha[j, i]),
                                         int(rrh_antennas[i]))
            row.append(hermitian_sqrt(sigma))
        sqrts.append(tuple(row))
    return LinkModel(direction="downlink", alpha=alpha,
                     ue_antennas=tuple(ue_antennas),
                     rrh_antennas=tuple(rrh_antennas),
                     tx_corr_sqrt=tuple(sqrts))


def _standard_complex(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / math.sqrt(2.0)


def sample_channel(model: LinkModel, rng, coherence_index: int = 0) -> ChannelBlock:
    """Draw one coherence block; the (UE, RRH) loop order is fixed so equal
    generator states give identical draws."""
    rng = np.random.default_rng(rng)
    blocks = {}
    for j in range(model.n_ue):
        for i in range(model.n_rrh):
            a = float(model.alpha[j, i])
            if model.direction == "uplink":
                g = _standard_complex(rng, (model.rrh_antennas[i], model.ue_antennas[j]))
                blocks[(j, i)] = math.sqrt(a) * g
            else:
                g = _standard_complex(rng, (model.ue_antennas[j], model.rrh_antennas[i]))
                if model.tx_corr_sqrt is not None:
                    blocks[(j, i)] = g @ model.tx_corr_sqrt[j][i]
                else:
                    blocks[(j, i)] = math.sqrt(a) * g
    return ChannelBlock(blocks=blocks, coherence_index=coherence_index)


def stack_uplink(block: ChannelBlock, model: LinkModel) -> np.ndarray:
    """Full receive matrix: RRH antenna rows stacked over UE antenna
    columns."""
    rows = []
    for i in range(model.n_rrh):
        rows.append(np.hstack([block.blocks[(j, i)] for j in range(model.n_ue)]))
    return np.vstack(rows)


def ue_channel_rows(block: ChannelBlock, model: LinkModel, j: int) -> np.ndarray:
    """Downlink row block of UE j: its receive antennas over all RRH
    transmit antennas."""
    return np.hstack([block.blocks[(j, i)] for i in range(model.n_rrh)])


def stochastic_channel_norms(model: LinkModel) -> np.ndarray:
    """Distribution-level link strength proxy sqrt(tr Sigma_T) per (UE, RRH)
    pair, used for clustering when only statistics are known."""
    norms = np.empty((model.n_ue, model.n_rrh))
    for j in range(model.n_ue):
        for i in range(model.n_rrh):
            if model.tx_corr_sqrt is not None:
                norms[j, i] = np.linalg.norm(model.tx_corr_sqrt[j][i], "fro")
            else:
                n_tx = model.rrh_antennas[i] if model.direction == "downlink" \
                    else model.ue_antennas[j]
                norms[j, i] = math.sqrt(model.alpha[j, i] * n_tx)
    return norms
