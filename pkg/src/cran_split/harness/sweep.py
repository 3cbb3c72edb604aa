"""Monte Carlo sweep orchestration.

For each sweep point every compared variant sees the same random draws
(placements, channel blocks, evaluation blocks), so curves differ only
through the algorithms, not the noise.  The root seed spawns one child
sequence per sweep point and three role streams per point -- placement,
design-time channels, evaluation channels -- and every variant re-seeds
fresh generators from those same sequences.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .. import uplink as ul
from ..channel import (Geometry, OneRingParams, PathLossParams,
                       build_downlink_model, build_uplink_model,
                       sample_channel, stochastic_channel_norms,
                       ue_channel_rows)
from ..downlink import (ALT_INSTANT, ALT_STOCHASTIC, CONVENTIONAL,
                        AntennaLayout, DownlinkProblem, SolverOptions,
                        cluster_assign, evaluate_instantaneous,
                        evaluate_stochastic, solve_instantaneous,
                        solve_stochastic)
from .scenario import Scenario, ScenarioError, with_sweep_value
from .presets import SweepSpec

# Sweep-grade solver profile: curve points only need ~1e-3 accuracy, so the
# interior-point duality gap and the outer linearization tolerance are
# relaxed well below the library defaults used for contract tests.
SWEEP_SOLVER_OPTIONS = SolverOptions(mm_tol=1e-4, mm_max_iters=60,
                                     gap_tol=1e-6)

_CSI_WORDS = {"inst": "instantaneous", "stoch": "stochastic"}


@dataclass(frozen=True)
class Variant:
    """One curve of a sweep: an approach, and for the downlink a CSI mode
    and a cluster size (``n_c=None`` means every RRH serves all UEs)."""

    approach: str
    csi: str | None = None
    n_c: int | None = None

    @property
    def token(self) -> str:
        parts = [self.approach]
        if self.csi:
            parts.append("inst" if self.csi == "instantaneous" else "stoch")
        if self.approach == "alt":
            parts.append("ncall" if self.n_c is None else f"nc{self.n_c}")
        return "/".join(parts)

    def sort_key(self):
        return (self.approach, self.csi or "",
                -1 if self.n_c is None else self.n_c)


def parse_variant(token: str, direction: str) -> Variant:
    parts = [p for p in str(token).strip().lower().split("/") if p]
    if not parts:
        raise ScenarioError("empty variant")
    if direction == "uplink":
        if len(parts) != 1 or parts[0] not in ("conventional",
                                               "estimate-at-rrh"):
            raise ScenarioError(
                f"unknown uplink variant {token!r}; expected 'conventional' "
                f"or 'estimate-at-rrh'")
        return Variant(approach=parts[0])
    if parts[0] not in ("conventional", "alt"):
        raise ScenarioError(f"unknown downlink approach {parts[0]!r}")
    if len(parts) < 2 or parts[1] not in _CSI_WORDS:
        raise ScenarioError(
            f"downlink variant {token!r} needs a CSI mode: "
            f"'{parts[0]}/inst' or '{parts[0]}/stoch'")
    v = Variant(approach=parts[0], csi=_CSI_WORDS[parts[1]])
    if len(parts) == 2:
        return v
    if len(parts) > 3 or parts[0] != "alt":
        raise ScenarioError(f"malformed variant {token!r}")
    tail = parts[2]
    if tail == "ncall":
        return v
    if tail.startswith("nc") and tail[2:].isdigit():
        return replace(v, n_c=int(tail[2:]))
    raise ScenarioError(f"malformed cluster-size suffix in {token!r}")


@dataclass(frozen=True)
class Row:
    """One emitted record; ``converged`` is bookkeeping for strict mode and
    never serialized."""

    experiment: str
    sweep: str
    value: float
    approach: str
    csi: str | None
    nc: int | None
    sum_rate: float
    rates: tuple
    stderr: float
    seed: int
    samples: int
    wall_ms: int
    converged: bool = True


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)


def _path_params(scen: Scenario):
    return PathLossParams(d0=scen.d0, eta=scen.eta), \
        OneRingParams(scattering_radius=scen.scattering_radius)


def _geometry(scen: Scenario, rng) -> Geometry:
    if scen.geometry_mode == "fixed":
        return Geometry(rrh=np.asarray(scen.rrh_positions, dtype=float),
                        ue=np.asarray(scen.ue_positions, dtype=float),
                        area_side=scen.area_side)
    return Geometry.uniform(scen.n_rrh, scen.n_ue, scen.area_side, rng)


def _draw_downlink(model, rng):
    block = sample_channel(model, rng)
    h_list = [ue_channel_rows(block, model, j) for j in range(model.n_ue)]
    norms = np.array([[np.linalg.norm(block.blocks[(j, i)])
                       for i in range(model.n_rrh)]
                      for j in range(model.n_ue)])
    return h_list, norms


def _replay(draws):
    it = iter(draws)

    def sampler(_rng):
        return next(it)

    return sampler


class _UplinkPoint:
    """Shared per-point state for the uplink variants: the deterministic
    network design inputs plus the common evaluation stream."""

    def __init__(self, scen: Scenario, ss_roles):
        pl, _ = _path_params(scen)
        geom = _geometry(scen, np.random.default_rng(ss_roles[0]))
        model = build_uplink_model(geom, pl, scen.tx_antennas,
                                   scen.rx_antennas)
        self.net = ul.UplinkNetwork(
            alpha=model.alpha, ue_antennas=scen.tx_antennas,
            rrh_antennas=scen.rx_antennas, T=scen.T,
            t_pilot=scen.resolved_t_pilot())
        self.p_avg = scen.p_avg_linear()
        self.c_total = scen.c_fronthaul
        self.samples = scen.resolved_samples()
        self.ss_eval = ss_roles[2]

    def run(self, variant: Variant):
        approach = ul.CONVENTIONAL if variant.approach == "conventional" \
            else ul.ESTIMATE_AT_RRH
        _, _, designs = ul.optimize_network(approach, self.net, self.p_avg,
                                            self.c_total)
        res = ul.multi_link_sum_rate(approach, self.net, designs,
                                     self.samples,
                                     np.random.default_rng(self.ss_eval))
        return (res.sum_rate, tuple(float(x) for x in res.ue_rates),
                res.stderr, self.samples, True)


class _DownlinkPoint:
    """Shared per-point state for the downlink variants.

    Instantaneous variants consume pre-drawn (placement, channel) trials;
    statistics-based variants consume one placement, a pre-drawn training
    sequence for the stochastic solver, and a pre-drawn evaluation batch.
    Pre-drawing fixes the common-random-number contract regardless of
    variant order or early solver stopping.
    """

    def __init__(self, scen: Scenario, ss_roles, opts: SolverOptions):
        self.scen = scen
        self.opts = opts
        self.layout = AntennaLayout(n_t=scen.tx_antennas,
                                    n_r=scen.rx_antennas)
        p = scen.p_avg_linear()
        self.problem = DownlinkProblem(
            layout=self.layout, p_max=(p,) * scen.n_rrh,
            c_max=(scen.c_fronthaul,) * scen.n_rrh, T=scen.T,
            weights=scen.resolved_weights())
        self.weights = np.asarray(scen.resolved_weights())
        self._roles = ss_roles
        self._inst = None
        self._stoch = None

    def _model(self, rng):
        pl, oring = _path_params(self.scen)
        geom = _geometry(self.scen, rng)
        return build_downlink_model(geom, pl, oring, self.scen.tx_antennas,
                                    self.scen.rx_antennas)

    def _inst_trials(self):
        if self._inst is None:
            rng_place = np.random.default_rng(self._roles[0])
            rng_chan = np.random.default_rng(self._roles[1])
            trials = []
            for _ in range(self.scen.resolved_samples()):
                model = self._model(rng_place)
                trials.append(_draw_downlink(model, rng_chan))
            self._inst = trials
        return self._inst

    def _stoch_state(self):
        if self._stoch is None:
            model = self._model(np.random.default_rng(self._roles[0]))
            rng_chan = np.random.default_rng(self._roles[1])
            rng_eval = np.random.default_rng(self._roles[2])
            train = [_draw_downlink(model, rng_chan)[0]
                     for _ in range(self.scen.ssum_iters)]
            evals = [_draw_downlink(model, rng_eval)[0]
                     for _ in range(self.scen.eval_blocks)]
            self._stoch = (model, train, evals)
        return self._stoch

    def _nc(self, variant: Variant) -> int:
        nc = self.scen.n_ue if variant.n_c is None else variant.n_c
        if not 1 <= nc <= self.scen.n_ue:
            raise ScenarioError(f"cluster size {nc} out of range for "
                                f"{self.scen.n_ue} UEs")
        return nc

    def _run_inst(self, variant: Variant):
        trials = self._inst_trials()
        sums = np.empty(len(trials))
        per_ue = np.zeros((len(trials), self.scen.n_ue))
        ok = True
        for l, (h_list, norms) in enumerate(trials):
            if variant.approach == "alt":
                asg = cluster_assign(norms, self._nc(variant))
                sol, _ = solve_instantaneous(ALT_INSTANT, h_list,
                                             self.problem, assignment=asg,
                                             options=self.opts)
            else:
                sol, _ = solve_instantaneous(CONVENTIONAL, h_list,
                                             self.problem, options=self.opts)
            rates = evaluate_instantaneous(sol, h_list, self.problem)
            per_ue[l] = rates
            sums[l] = float(self.weights @ rates)
            ok = ok and sol.converged
        n = len(trials)
        se = float(sums.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return (float(sums.mean()),
                tuple(float(x) for x in per_ue.mean(axis=0)), se, n, ok)

    def _run_stoch(self, variant: Variant):
        model, train, evals = self._stoch_state()
        if variant.approach == "alt":
            asg = cluster_assign(stochastic_channel_norms(model),
                                 self._nc(variant))
            sol, _ = solve_stochastic(ALT_STOCHASTIC, self.problem,
                                      _replay(train), n_outer=len(train),
                                      assignment=asg, options=self.opts)
        else:
            sol, _ = solve_stochastic(CONVENTIONAL, self.problem,
                                      _replay(train), n_outer=len(train),
                                      options=self.opts)
        res = evaluate_stochastic(sol, evals, self.problem)
        return (res.sum_rate, tuple(float(x) for x in res.ue_rates),
                res.stderr, len(evals), sol.converged)

    def run(self, variant: Variant):
        if variant.csi == "stochastic":
            return self._run_stoch(variant)
        return self._run_inst(variant)


def run_sweep(scenario: Scenario, sweep: SweepSpec, *, variants=None,
              samples=None, timing=False, solver_options=None) -> SweepResult:
    """Evaluate every (sweep point, variant) cell and collect result rows.

    ``variants`` overrides the sweep's default list; ``samples`` overrides
    the scenario's Monte Carlo sample count.  Rows come back sorted by
    (sweep value, variant) and are fully determined by (scenario, seed)
    unless ``timing`` fills the wall-clock column.
    """
    tokens = sweep.variants if variants is None else tuple(variants)
    parsed = [parse_variant(t, scenario.direction) for t in tokens]
    seen = set()
    for v in parsed:
        if v.token in seen:
            raise ScenarioError(f"duplicate variant {v.token!r}")
        seen.add(v.token)
    if samples is not None:
        if int(samples) < 1:
            raise ScenarioError("samples override must be >= 1")
        scenario = replace(scenario, mc_samples=int(samples))
    opts = solver_options if solver_options is not None \
        else SWEEP_SOLVER_OPTIONS

    root = np.random.SeedSequence(scenario.seed)
    children = root.spawn(len(sweep.values))
    rows = []
    for value, child in zip(sweep.values, children):
        point = with_sweep_value(scenario, sweep.parameter, value)
        roles = child.spawn(3)
        if point.direction == "uplink":
            state = _UplinkPoint(point, roles)
        else:
            state = _DownlinkPoint(point, roles, opts)
        for variant in sorted(parsed, key=Variant.sort_key):
            t0 = time.perf_counter()
            sum_rate, rates, stderr, n_used, ok = state.run(variant)
            wall = int(round((time.perf_counter() - t0) * 1e3)) \
                if timing else 0
            rows.append(Row(
                experiment=scenario.experiment, sweep=sweep.parameter,
                value=float(value), approach=variant.approach,
                csi=variant.csi,
                nc=None if variant.approach != "alt"
                else (point.n_ue if variant.n_c is None else variant.n_c),
                sum_rate=float(sum_rate), rates=rates,
                stderr=float(stderr), seed=scenario.seed, samples=n_used,
                wall_ms=wall, converged=bool(ok)))
    rows.sort(key=lambda r: (r.value, r.approach, r.csi or "", r.nc or -1))
    return SweepResult(rows=tuple(rows))
