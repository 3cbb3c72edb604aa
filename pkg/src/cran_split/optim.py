"""Numerical machinery shared across the simulator.

Three pieces live here: adaptive Gauss-Legendre quadrature, a coarse-grid plus
golden-section scalar maximizer, and a feasible-start log-barrier method for
smooth concave maximization over Hermitian PSD matrix blocks and positive
scalars.  Problems in this package have a handful of matrix blocks of order
<= 16, so the barrier stages are centered by limited-memory BFGS on a real
isometric packing of the Hermitian variables, seeded with the analytic
barrier curvature (log-det barrier keeps the blocks inside the cone); no
external conic solver is involved.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

LN2 = math.log(2.0)

__all__ = [
    "QuadratureError",
    "gauss_legendre",
    "line_search_1d",
    "ConvexSubproblem",
    "BarrierOptions",
    "BarrierResult",
    "maximize_concave",
    "directional_gradient_check",
]


class QuadratureError(RuntimeError):
    """Order doubling failed to reach the requested tolerance."""


_GL_NODES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(order: int):
    if order not in _GL_NODES:
        _GL_NODES[order] = np.polynomial.legendre.leggauss(order)
    return _GL_NODES[order]


def gauss_legendre(f, a: float, b: float, tol: float = 1e-10,
                   order: int = 64, max_order: int = 1024):
    """Integrate a smooth function over [a, b] by Gauss-Legendre quadrature.

    The node count starts at ``order`` and doubles until two successive
    estimates agree within ``tol``.  ``f`` must accept a vector of abscissae
    and return integrand values (real or complex).

    Raises
    ------
    QuadratureError
        If estimates have not stabilized by ``max_order`` nodes.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("integration bounds must be finite")
    if b < a:
        raise ValueError("need b >= a")
    if b == a:
        return 0.0
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    prev = None
    n = order
    while n <= max_order:
        x, w = _gl_nodes(n)
        est = half * np.sum(w * f(mid + half * x))
        if prev is not None and abs(est - prev) < tol:
            return est
        prev = est
        n *= 2
    raise QuadratureError(
        f"quadrature did not stabilize to {tol:g} by order {max_order}")


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def line_search_1d(f, a: float, b: float, *, n_grid: int = 64,
                   tol: float | None = None,
                   include: Sequence[float] = ()) -> tuple[float, float]:
    """Maximize a scalar function on [a, b].

    A uniform ``n_grid``-point scan locates the best coarse bracket, then
    golden-section search refines it to width ``tol`` (default
    ``1e-6 * (b - a)``).  ``include`` adds extra abscissae to the coarse
    scan (useful for pinning known-feasible reference points).  Non-finite
    objective values are skipped with a warning.  Returns ``(x, f(x))`` with
    ``f(x)`` at least the best scanned value.
    """
    if not b > a:
        raise ValueError("need b > a")
    if n_grid < 3:
        raise ValueError("need at least 3 grid points")
    xs = np.linspace(a, b, n_grid)
    if len(include):
        extra = np.clip(np.asarray(include, dtype=float), a, b)
        xs = np.unique(np.concatenate([xs, extra]))
    vals = np.array([f(x) for x in xs], dtype=float)
    bad = ~np.isfinite(vals)
    if bad.all():
        raise ValueError("objective returned no finite values on the grid")
    if bad.any():
        warnings.warn("line_search_1d: non-finite objective values skipped")
        vals[bad] = -np.inf
    k = int(np.argmax(vals))
    x_best, f_best = float(xs[k]), float(vals[k])
    lo = float(xs[k - 1]) if k > 0 else float(xs[0])
    hi = float(xs[k + 1]) if k + 1 < len(xs) else float(xs[-1])
    if tol is None:
        tol = 1e-6 * (b - a)

    def _safe(x):
        v = f(x)
        return float(v) if np.isfinite(v) else -np.inf

    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = _safe(c), _safe(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = _safe(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = _safe(d)
    for x, v in ((c, fc), (d, fd)):
        if v > f_best:
            x_best, f_best = float(x), float(v)
    return x_best, f_best


# ---------------------------------------------------------------------------
# Barrier maximizer


@dataclass
class ConvexSubproblem:
    """Smooth concave maximization with smooth convex inequality constraints.

    Variables are Hermitian PSD matrix ``blocks`` with the given orders plus
    ``n_scalars`` positive scalars.  ``objective`` and every entry of
    ``constraints`` map ``(blocks, scalars, ctx)`` to
    ``(value, grad_blocks, grad_scalars)``; gradients live in the real inner
    product ``sum_b Re tr(G_b^H dB_b) + g_s . d_s``, so each ``grad_blocks``
    entry must be Hermitian.  The feasible set is
    ``constraints[k](x) <= rhs[k]`` for all k (plus PSD blocks and positive
    scalars).  ``start`` should satisfy every constraint; active constraints
    (zero slack) are tolerated, genuinely violated ones are rejected.

    When several evaluators share expensive intermediates, supply
    ``precompute``: it runs once per visited point and its return value is
    passed to every evaluator as ``ctx`` (``None`` otherwise).
    """

    block_orders: Sequence[int]
    n_scalars: int
    objective: Callable
    constraints: Sequence[Callable]
    rhs: Sequence[float]
    start_blocks: Sequence[np.ndarray]
    start_scalars: np.ndarray
    precompute: Callable | None = None


@dataclass
class BarrierOptions:
    t0: float = 1.0
    t_factor: float = 10.0
    gap_tol: float = 1e-7
    max_stage_iters: int = 250
    armijo: float = 1e-4
    armijo_window: int = 8
    stall_iters: int = 16
    step0: float = 1.0
    pg_tol: float = 1e-6
    mid_pg_tol: float = 3e-4  # centering tolerance for non-final stages
    f_tol: float = 1e-11
    feas_tol: float = 1e-9


@dataclass
class BarrierResult:
    blocks: list
    scalars: np.ndarray
    value: float
    gap: float
    stationarity: float
    residuals: np.ndarray
    converged: bool
    stages: int
    iterations: int


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _project_psd(a: np.ndarray) -> np.ndarray:
    h = _hermitize(a)
    w, v = np.linalg.eigh(h)
    if w.size == 0 or w[0] >= 0.0:
        return h
    w = np.clip(w, 0.0, None)
    return _hermitize((v * w) @ v.conj().T)


_TRIU: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_SQRT2 = math.sqrt(2.0)


def _triu(n: int):
    if n not in _TRIU:
        _TRIU[n] = np.triu_indices(n, 1)
    return _TRIU[n]


def _pack(blocks, scalars) -> np.ndarray:
    """Isometric real packing of Hermitian blocks plus scalars: the
    euclidean dot of packings equals Re tr(A^H B) + a_s . b_s."""
    parts = []
    for b in blocks:
        iu = _triu(b.shape[0])
        parts.append(np.diagonal(b).real)
        parts.append(_SQRT2 * b[iu].real)
        parts.append(_SQRT2 * b[iu].imag)
    parts.append(np.asarray(scalars, dtype=float))
    return np.concatenate(parts) if parts else np.zeros(0)


def _unpack(x: np.ndarray, orders, n_scalars: int):
    blocks = []
    off = 0
    for n in orders:
        d = x[off:off + n]
        off += n
        m = n * (n - 1) // 2
        re = x[off:off + m]
        off += m
        im = x[off:off + m]
        off += m
        b = np.zeros((n, n), dtype=complex)
        iu = _triu(n)
        b[iu] = (re + 1j * im) / _SQRT2
        b = b + b.conj().T
        b[np.diag_indices(n)] = d
        blocks.append(b)
    return blocks, x[off:off + n_scalars].copy()


def _pack_stack(bstacks, sstack) -> np.ndarray:
    """Pack K parallel (blocks, scalars) gradients into a (K, n) array.

    ``bstacks[bi]`` holds the K copies of block ``bi`` as a (K, o, o) array;
    component order matches :func:`_pack`.
    """
    parts = []
    for arr in bstacks:
        o = arr.shape[-1]
        iu = _triu(o)
        d = arr[:, np.arange(o), np.arange(o)].real
        tr = arr[:, iu[0], iu[1]]
        parts.extend((d, _SQRT2 * tr.real, _SQRT2 * tr.imag))
    parts.append(np.asarray(sstack, dtype=float))
    return np.concatenate(parts, axis=1)


def _inner(gb, gs, db, ds) -> float:
    tot = float(np.real(np.dot(np.asarray(gs), np.asarray(ds)))) if len(gs) else 0.0
    for g, d in zip(gb, db):
        tot += float(np.real(np.vdot(g, d)))
    return tot


def _norm(blocks, scalars) -> float:
    s = float(np.dot(scalars, scalars)) if len(scalars) else 0.0
    for b in blocks:
        s += float(np.real(np.vdot(b, b)))
    return math.sqrt(s)


class _BarrierEval:
    """Value and gradient of objective + (1/t) * sum log(slacks)."""

    def __init__(self, problem: ConvexSubproblem, relax: np.ndarray):
        self.p = problem
        self.relax = relax  # per-constraint additive relaxation, shrinks to 0
        self.rhs = np.asarray(problem.rhs, dtype=float)
        orders = problem.block_orders
        self.batched = len(orders) > 1 and len(set(orders)) == 1

    def _ctx(self, blocks, scalars):
        return self.p.precompute(blocks, scalars) if self.p.precompute else None

    def raw(self, blocks, scalars):
        """Objective value and constraint residuals (no barrier)."""
        ctx = self._ctx(blocks, scalars)
        fv, _, _ = self.p.objective(blocks, scalars, ctx)
        resid = np.array(
            [c(blocks, scalars, ctx)[0] for c in self.p.constraints], dtype=float)
        return float(fv), resid - self.rhs

    def __call__(self, blocks, scalars, t):
        # positivity/cone membership gates everything else: downstream
        # evaluators assume positive variances and PD-interior blocks
        for i in range(self.p.n_scalars):
            if not scalars[i] > 0.0:
                return -np.inf, None, None, -np.inf, None
        try:
            if self.batched:
                bs = np.stack(blocks)
                ch = np.linalg.cholesky(bs)
                logdets = 2.0 * np.sum(
                    np.log(np.diagonal(ch, axis1=1, axis2=2).real), axis=1)
                inv_s = np.linalg.inv(bs)
                binvs = list(0.5 * (inv_s + inv_s.conj().transpose(0, 2, 1)))
            else:
                logdets = []
                binvs = []
                for b in blocks:
                    c = np.linalg.cholesky(b)
                    logdets.append(
                        2.0 * float(np.sum(np.log(np.diagonal(c).real))))
                    binvs.append(_hermitize(np.linalg.inv(b)))
            ctx = self._ctx(blocks, scalars)
            fv, gb, gs = self.p.objective(blocks, scalars, ctx)
        except np.linalg.LinAlgError:
            return -np.inf, None, None, -np.inf, None
        F = float(fv)
        Gb = [np.array(g, dtype=complex, copy=True) for g in gb]
        Gs = np.array(gs, dtype=float, copy=True) if self.p.n_scalars else np.zeros(0)
        slacks = np.empty(len(self.rhs))
        cbs, css = [], []
        for k, (con, rhs) in enumerate(zip(self.p.constraints, self.rhs)):
            cv, cb, cs = con(blocks, scalars, ctx)
            slack = rhs + self.relax[k] - float(cv)
            if not slack > 0.0:
                return -np.inf, None, None, float(fv), None
            slacks[k] = slack
            cbs.append(cb)
            css.append(np.asarray(cs, dtype=float))
            F += math.log(slack) / t
            w = 1.0 / (t * slack)
            for G, dC in zip(Gb, cb):
                G -= w * dC
            if self.p.n_scalars:
                Gs -= w * css[-1]
        for bi in range(len(blocks)):
            F += logdets[bi] / t
            Gb[bi] += binvs[bi] / t
        for i in range(self.p.n_scalars):
            F += math.log(float(scalars[i])) / t
            Gs[i] += 1.0 / (t * float(scalars[i]))
        if not np.isfinite(F):
            return -np.inf, None, None, float(fv), None
        pre = {"blocks": blocks, "scalars": scalars, "slacks": slacks,
               "cb": cbs, "cs": css, "gfb": gb, "gfs": gs}
        return F, Gb, Gs, float(fv), pre


def _barrier_metric(pre, t, mu, orders, nsc):
    """Inverse of the Gauss-Newton barrier curvature at the current point.

    H0 = cone part (X -> B^-1 X B^-1 / t) + diag(1/(t s^2)) + mu*I
         + sum_k (a_k a_k^T) / (t slack_k^2)
    captures everything the barrier knows analytically; ``mu`` floors the
    unknown objective curvature.  The rank-m constraint part is folded in
    with a Woodbury solve, so one application costs a handful of small
    dense operations.
    """
    bl = pre["blocks"]
    sc = pre["scalars"]
    slacks = pre["slacks"]
    m = slacks.size
    eigs = []
    for b in bl:
        lam, qm = np.linalg.eigh(b)
        # floor keeps lam*lam' from underflowing; near-null directions are
        # maximally stiff either way
        lam = np.maximum(lam, 1e-120)
        den = 1.0 / (t * np.multiply.outer(lam, lam)) + mu
        eigs.append((qm, lam, den))
    sden = 1.0 / (t * sc * sc) + mu if nsc else np.zeros(0)

    def dinv_stacks(stacks):
        out = []
        for (qm, _, den), arr in zip(eigs, stacks):
            tmp = qm.conj().T @ arr @ qm
            out.append(qm @ (tmp / den) @ qm.conj().T)
        return out

    a_mat = None
    if m:
        stacks = [np.stack([cb[bi] for cb in pre["cb"]]).astype(complex)
                  for bi in range(len(bl))]
        cs_stack = (np.stack(pre["cs"]) if nsc
                    else np.zeros((m, 0)))
        a_mat = _pack_stack(stacks, cs_stack)
        dia = _pack_stack(dinv_stacks(stacks),
                          cs_stack / sden if nsc else cs_stack)
        cap = np.diag(t * slacks * slacks) + a_mat @ dia.T
        cap = 0.5 * (cap + cap.T)
        cap[np.diag_indices(m)] += 1e-14 * (1.0 + np.trace(cap) / m)

    def apply(qv):
        bq, sq = _unpack(qv, orders, nsc)
        tb = [x[0] for x in dinv_stacks([b[None] for b in bq])]
        u = _pack(tb, sq / sden if nsc else sq)
        if m:
            try:
                z = np.linalg.solve(cap, a_mat @ u)
            except np.linalg.LinAlgError:
                return u
            u = u - dia.T @ z
        return u

    def max_step(dv):
        """Largest step along ``dv`` before some boundary (cone, scalar
        positivity, or linearized constraint slack) is reached."""
        bd, sd = _unpack(dv, orders, nsc)
        smax = np.inf
        for (qm, lam, _), db in zip(eigs, bd):
            rt = np.sqrt(lam)
            w = (qm.conj().T @ db @ qm) / np.multiply.outer(rt, rt)
            lo = float(np.linalg.eigvalsh(0.5 * (w + w.conj().T))[0])
            if lo < 0.0:
                smax = min(smax, -1.0 / lo)
        if nsc:
            neg = sd < 0.0
            if np.any(neg):
                smax = min(smax, float(np.min(-sc[neg] / sd[neg])))
        if m:
            ad = a_mat @ dv
            pos = ad > 0.0
            if np.any(pos):
                smax = min(smax, float(np.min(slacks[pos] / ad[pos])))
        return smax

    return apply, max_step


def _lbfgs_stage(ev: _BarrierEval, blocks, scalars, t, opts: BarrierOptions,
                 pg_tol: float):
    """One barrier stage: limited-memory BFGS ascent on the packed real
    variables, seeded with the analytic barrier metric and safeguarded by a
    nonmonotone (reference-window) Armijo backtracking.  The cone and
    positivity barriers make every infeasible trial -inf, so the line
    search retreats into the interior automatically."""
    orders = [b.shape[0] for b in blocks]
    nsc = len(scalars)

    def fg(xv):
        bl, sc = _unpack(xv, orders, nsc)
        F, Gb, Gs, _, pre = ev(bl, sc, t)
        if not np.isfinite(F):
            return -np.inf, None, None
        return F, _pack(Gb, Gs), pre

    def pack_objgrad(pre):
        gfs = np.asarray(pre["gfs"], dtype=float) if nsc else np.zeros(0)
        return _pack([np.asarray(a, dtype=complex) for a in pre["gfb"]], gfs)

    x = _pack(blocks, scalars)
    F, g, pre = fg(x)
    if not np.isfinite(F):
        raise ValueError("barrier stage started at an infeasible point")
    mem: list[tuple[np.ndarray, np.ndarray, float]] = []
    window = [F]
    best = (F, x.copy())
    stall = 0
    pg = float(np.linalg.norm(g))
    pg_best = pg
    gf = pack_objgrad(pre)
    # curvature floor for the objective part of the metric; refreshed from
    # the change of the pure objective gradient along each accepted step
    mu = max(1e-8, pg / (1.0 + float(np.linalg.norm(x))))
    it = 0
    for it in range(1, opts.max_stage_iters + 1):
        h0inv, max_step = _barrier_metric(pre, t, mu, orders, nsc)
        # two-loop recursion seeded with the analytic barrier metric
        q = g.copy()
        alphas = []
        for s_, y_, rho in reversed(mem):
            a = rho * float(s_ @ q)
            alphas.append(a)
            q -= a * y_
        q = h0inv(q)
        for (s_, y_, rho), a in zip(mem, reversed(alphas)):
            b_ = rho * float(y_ @ q)
            q += s_ * (a - b_)
        d = q
        gd = float(g @ d)
        if not np.isfinite(gd) or gd <= 0.0:
            mem.clear()
            d = h0inv(g)
            gd = float(g @ d)
            if not np.isfinite(gd) or gd <= 0.0:
                d = g * (opts.step0 / max(1.0, pg))
                gd = float(g @ d)
        ref = min(window)
        s = 1.0
        accepted = False
        fresh = True
        noise = 1e-13 * (1.0 + abs(F))
        for _ in range(60):
            xn = x + s * d
            Fn, gn, pre_n = fg(xn)
            if np.isfinite(Fn) and Fn >= ref + opts.armijo * s * gd:
                accepted = True
                break
            # near the center the predicted gain drops below the floating
            # point noise of F; fall back to gradient-norm descent there
            if np.isfinite(Fn) and s * gd <= noise \
                    and float(np.linalg.norm(gn)) <= 0.999 * pg:
                accepted = True
                break
            if np.isfinite(Fn):
                # maximizer of the quadratic through (0,F), slope gd, (s,Fn)
                denom = Fn - F - gd * s
                sq = -0.5 * gd * s * s / denom if denom < 0.0 else 0.5 * s
                s = min(max(sq, 0.1 * s), 0.5 * s)
            elif fresh:
                # infeasible trial: the boundary can sit many octaves below
                # the unit step when the metric underestimates curvature
                # along soft directions, so aim the retreat at the interior
                # half of the feasible segment instead of quartering blindly
                fresh = False
                bound = max_step(d)
                if not bound > 0.0:
                    break
                s = 0.5 * bound if bound < 0.05 * s else 0.25 * s
            else:
                s *= 0.25
        if not accepted:
            break
        sv = xn - x
        ss = float(sv @ sv)
        if ss == 0.0:
            break  # boundary so close the accepted step is below float
        yv = g - gn  # curvature pair for the ascent formulation
        sy = float(sv @ yv)
        if sy > 1e-12 * float(np.linalg.norm(sv)) * float(np.linalg.norm(yv)):
            mem.append((sv, yv, 1.0 / sy))
            if len(mem) > 10:
                mem.pop(0)
        gfn = pack_objgrad(pre_n)
        muc = float(sv @ (gf - gfn)) / ss
        if np.isfinite(muc):
            mu = min(1e8, max(1e-10, muc))
        x, F, g, pre, gf = xn, Fn, gn, pre_n, gfn
        pg = float(np.linalg.norm(g))
        window.append(F)
        if len(window) > opts.armijo_window:
            window.pop(0)
        if F > best[0] + opts.f_tol * (1.0 + abs(F)):
            best = (F, x.copy())
            stall = 0
        elif pg < 0.98 * pg_best:
            stall = 0
        else:
            # must outlast the nonmonotone window before calling it a stall
            stall += 1
            if stall >= opts.stall_iters:
                break
        pg_best = min(pg_best, pg)
        if pg <= pg_tol * (1.0 + float(np.linalg.norm(x))):
            break
    if best[0] > F + opts.f_tol * (1.0 + abs(F)):
        F, x = best
        _, g, _ = fg(x)
        pg = float(np.linalg.norm(g)) if g is not None else pg
    blocks, scalars = _unpack(x, orders, nsc)
    return blocks, scalars, F, pg, it


def _kkt_residual(problem: ConvexSubproblem, blocks, scalars, t: float,
                  fallback: float) -> float:
    """Scaled KKT stationarity at ``(blocks, scalars)``.

    Cone and positivity duals are fixed at the barrier's implicit values
    (``B^-1/t`` and ``1/(t s)``, complementarity ~ 1/t each); inequality
    multipliers are then fit by nonnegative least squares, which both keeps
    the certificate valid (multipliers >= 0) and avoids demanding extreme
    centering accuracy from the last barrier stage.
    """
    nsc = problem.n_scalars
    try:
        ctx = (problem.precompute(blocks, scalars)
               if problem.precompute else None)
        _, gb, gs = problem.objective(blocks, scalars, ctx)
        zb = []
        for b in blocks:
            lam, qm = np.linalg.eigh(b)
            lam = np.maximum(lam, 1e-300)
            zb.append(_hermitize((qm / lam) @ qm.conj().T) / t)
        zs = (1.0 / (t * np.maximum(scalars, 1e-300))
              if nsc else np.zeros(0))
        c0 = _pack([np.asarray(a, dtype=complex) for a in gb],
                   np.asarray(gs, dtype=float) if nsc else np.zeros(0))
        c0 = c0 + _pack(zb, zs)
        rows = []
        for con in problem.constraints:
            _, cb, cs = con(blocks, scalars, ctx)
            rows.append(_pack([np.asarray(a, dtype=complex) for a in cb],
                              np.asarray(cs, dtype=float) if nsc
                              else np.zeros(0)))
        if rows:
            _, rnorm = scipy.optimize.nnls(np.stack(rows).T, c0)
        else:
            rnorm = float(np.linalg.norm(c0))
    except (np.linalg.LinAlgError, RuntimeError):
        return fallback / (1.0 + _norm(blocks, scalars))
    return rnorm / (1.0 + _norm(blocks, scalars))


def maximize_concave(problem: ConvexSubproblem,
                     options: BarrierOptions | None = None) -> BarrierResult:
    """Feasible-start log-barrier maximization of a concave problem.

    Stages maximize ``objective + (1/t) * (sum log(slack) + sum log det B +
    sum log s)`` for a growing barrier weight ``t`` (factor ``t_factor`` per
    stage) until the duality measure ``m/t`` drops below ``gap_tol``, with
    ``m`` counting constraints, scalars, and block orders.  The log-det
    terms keep the blocks inside the PSD cone during centering; returned
    blocks are eigenvalue-clamped onto it.  Starts whose constraints are
    active (zero slack) are admitted through an internal relaxation that
    decays to zero across stages, so the returned point satisfies the
    original constraints.
    """
    opts = options or BarrierOptions()
    blocks = [_project_psd(np.array(b, dtype=complex)) for b in problem.start_blocks]
    scalars = np.array(problem.start_scalars, dtype=float).copy()
    if len(blocks) != len(problem.block_orders):
        raise ValueError("start_blocks length mismatch")
    for b, n in zip(blocks, problem.block_orders):
        if b.shape != (n, n):
            raise ValueError("start block has wrong order")
    if scalars.shape != (problem.n_scalars,):
        raise ValueError("start_scalars length mismatch")
    if len(problem.constraints) != len(problem.rhs):
        raise ValueError("constraints/rhs length mismatch")

    # lift boundary starts strictly inside the cone for the log-det barrier
    for bi, b in enumerate(blocks):
        n = b.shape[0]
        if n:
            delta = 1e-10 * (1.0 + float(np.trace(b).real) / n)
            blocks[bi] = b + delta * np.eye(n)
    scalars = np.maximum(scalars, 1e-300)

    rhs = np.asarray(problem.rhs, dtype=float)
    ev = _BarrierEval(problem, relax=np.zeros(len(rhs)))
    fv0, resid0 = ev.raw(blocks, scalars)
    scale = 1.0 + np.abs(rhs)
    if np.any(resid0 > opts.feas_tol * scale):
        raise ValueError(
            f"infeasible start: max residual {float(np.max(resid0)):.3e}")
    # Active or near-active constraints get a vanishing relaxation so the
    # first barrier stage has strictly positive slack to work with.
    slack_min = 1e-8 * scale
    ev.relax = np.maximum(0.0, 2.0 * slack_min - (-resid0))

    m = len(problem.constraints) + problem.n_scalars \
        + sum(problem.block_orders)
    t = opts.t0
    best = (fv0, [b.copy() for b in blocks], scalars.copy(), resid0)
    stages = 0
    total_iters = 0
    pg = np.inf
    while True:
        stages += 1
        # intermediate stages only need to warm-start the next one; the
        # tight centering tolerance is reserved for the final stage
        final = (m / t <= opts.gap_tol) and np.all(ev.relax <= 1e-16 * scale)
        blocks, scalars, _, pg, it = _lbfgs_stage(
            ev, blocks, scalars, t, opts,
            opts.pg_tol if final else opts.mid_pg_tol)
        total_iters += it
        fv, resid = ev.raw(blocks, scalars)
        if np.all(resid <= opts.feas_tol * scale) and fv > best[0]:
            best = (fv, [b.copy() for b in blocks], scalars.copy(), resid)
        if final or stages >= 60:
            break
        t *= opts.t_factor
        decayed = np.where(ev.relax > 1e-16 * scale, ev.relax * 1e-4, 0.0)
        # a loosely-centered stage can leave the iterate marginally outside
        # the shrunken envelope; re-admit it so the next stage starts with
        # strictly positive slack and the barrier pulls it interior
        need = np.where(resid >= 0.0, 2.0 * resid + 1e-12 * scale, 0.0)
        ev.relax = np.maximum(decayed, need)

    fv, resid = ev.raw(blocks, scalars)
    if np.all(resid <= opts.feas_tol * scale) and fv >= best[0]:
        out_blocks, out_scalars, out_f, out_resid = blocks, scalars, fv, resid
    else:
        out_f, out_blocks, out_scalars, out_resid = best
    gap = m / t
    stationarity = _kkt_residual(problem, out_blocks, out_scalars, t, pg)
    return BarrierResult(
        blocks=[_project_psd(b) for b in out_blocks],
        scalars=out_scalars,
        value=float(out_f),
        gap=float(gap),
        stationarity=float(stationarity),
        residuals=np.asarray(out_resid, dtype=float),
        converged=bool(gap <= opts.gap_tol and stationarity <= 1e-6),
        stages=stages,
        iterations=total_iters,
    )


def directional_gradient_check(fn, blocks, scalars, *, n_dirs: int = 6,
                               step: float = 1e-5, rng=None) -> float:
    """Central-difference check of an evaluator's analytic gradient.

    ``fn(blocks, scalars) -> (value, grad_blocks, grad_scalars)``.  Random
    unit directions (Hermitian on the blocks) are probed with a central
    difference of width ``step``; the maximum relative error against the
    analytic directional derivative is returned.
    """
    rng = np.random.default_rng(rng)
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    scalars = np.asarray(scalars, dtype=float)
    _, gb, gs = fn(blocks, scalars)
    worst = 0.0
    for _ in range(n_dirs):
        db = []
        for b in blocks:
            n = b.shape[0]
            d = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            db.append(_hermitize(d))
        ds = rng.standard_normal(scalars.shape) if scalars.size else np.zeros(0)
        nrm = _norm(db, ds)
        db = [d / nrm for d in db]
        ds = ds / nrm
        analytic = _inner(gb, gs, db, ds)
        fp = fn([b + step * d for b, d in zip(blocks, db)], scalars + step * ds)[0]
        fm = fn([b - step * d for b, d in zip(blocks, db)], scalars - step * ds)[0]
        fd = (fp - fm) / (2.0 * step)
        denom = max(abs(analytic), abs(fd), 1e-8)
        worst = max(worst, abs(analytic - fd) / denom)
    return worst
