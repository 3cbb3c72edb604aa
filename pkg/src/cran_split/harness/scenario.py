"""Serializable experiment descriptions.

A Scenario is the single source of truth for one experiment: geometry,
large-scale propagation parameters, antenna counts, block structure, and
budgets.  Powers enter in dB and are converted to linear exactly once, at
the accessor; everything downstream works in linear scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

DIRECTIONS = ("uplink", "downlink")
GEOMETRY_MODES = ("fixed", "uniform")
CSI_MODES = ("instantaneous", "stochastic")

# Monte Carlo defaults keep full preset runs at desk scale (minutes to tens
# of minutes): ergodic averages need few hundred blocks, but each
# instantaneous downlink trial is a full interior-point/MM solve.
DEFAULT_SAMPLES = {"uplink": 500, "downlink": 100}
DEFAULT_SSUM_ITERS = 200
DEFAULT_EVAL_BLOCKS = 500
DEFAULT_SEED = 12345


class ScenarioError(ValueError):
    """Raised for any malformed or inconsistent scenario description."""


def _positions(value, what: str):
    try:
        pts = tuple((float(x), float(y)) for x, y in value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what} must be a list of (x, y) pairs") from exc
    if not pts:
        raise ScenarioError(f"{what} must not be empty")
    return pts


@dataclass(frozen=True)
class Scenario:
    """One experiment's full parameterization.

    ``tx_antennas`` lists the transmitting side (per UE on the uplink, per
    RRH on the downlink) and ``rx_antennas`` the receiving side.  Fields
    left ``None`` resolve to direction-dependent defaults: ``t_pilot`` to
    the total transmit antenna count, ``mc_samples`` to 500 uplink blocks
    or 100 downlink trials, ``weights`` to all-ones.
    """

    experiment: str
    direction: str
    n_rrh: int
    n_ue: int
    tx_antennas: tuple
    rx_antennas: tuple
    T: int
    p_avg_db: float
    c_fronthaul: float
    t_pilot: int | None = None
    geometry_mode: str = "uniform"
    rrh_positions: tuple | None = None
    ue_positions: tuple | None = None
    area_side: float = 500.0
    d0: float = 50.0
    eta: float = 3.0
    scattering_radius: float = 10.0
    weights: tuple | None = None
    csi_mode: str | None = None
    n_c: int | None = None
    mc_samples: int | None = None
    ssum_iters: int = DEFAULT_SSUM_ITERS
    eval_blocks: int = DEFAULT_EVAL_BLOCKS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not self.experiment or not str(self.experiment).strip():
            raise ScenarioError("experiment id must be a nonempty string")
        if self.direction not in DIRECTIONS:
            raise ScenarioError(f"direction must be one of {DIRECTIONS}")
        object.__setattr__(self, "n_rrh", int(self.n_rrh))
        object.__setattr__(self, "n_ue", int(self.n_ue))
        object.__setattr__(self, "T", int(self.T))
        if self.n_rrh < 1 or self.n_ue < 1:
            raise ScenarioError("need at least one RRH and one UE")
        tx = tuple(int(x) for x in self.tx_antennas)
        rx = tuple(int(x) for x in self.rx_antennas)
        object.__setattr__(self, "tx_antennas", tx)
        object.__setattr__(self, "rx_antennas", rx)
        n_tx_nodes = self.n_ue if self.direction == "uplink" else self.n_rrh
        n_rx_nodes = self.n_rrh if self.direction == "uplink" else self.n_ue
        if len(tx) != n_tx_nodes:
            raise ScenarioError(f"tx_antennas needs {n_tx_nodes} entries")
        if len(rx) != n_rx_nodes:
            raise ScenarioError(f"rx_antennas needs {n_rx_nodes} entries")
        if any(x < 1 for x in tx + rx):
            raise ScenarioError("antenna counts must be >= 1")
        if self.T < 2:
            raise ScenarioError("coherence block must span at least 2 uses")
        if self.t_pilot is not None:
            object.__setattr__(self, "t_pilot", int(self.t_pilot))
        if self.direction == "uplink":
            tp = self.resolved_t_pilot()
            if tp < max(tx):
                raise ScenarioError("training must cover each UE's "
                                    "transmit antennas (t_pilot >= max)")
            if tp >= self.T:
                raise ScenarioError("t_pilot must leave room for data "
                                    "symbols (t_pilot < T)")
        if not self.c_fronthaul > 0:
            raise ScenarioError("fronthaul capacity must be positive")
        if self.geometry_mode not in GEOMETRY_MODES:
            raise ScenarioError(f"geometry_mode must be one of "
                                f"{GEOMETRY_MODES}")
        if self.geometry_mode == "fixed":
            if self.rrh_positions is None or self.ue_positions is None:
                raise ScenarioError("fixed geometry needs rrh_positions and "
                                    "ue_positions")
            object.__setattr__(self, "rrh_positions",
                               _positions(self.rrh_positions, "rrh_positions"))
            object.__setattr__(self, "ue_positions",
                               _positions(self.ue_positions, "ue_positions"))
            if len(self.rrh_positions) != self.n_rrh:
                raise ScenarioError("rrh_positions length must match n_rrh")
            if len(self.ue_positions) != self.n_ue:
                raise ScenarioError("ue_positions length must match n_ue")
        for name in ("area_side", "d0", "eta", "scattering_radius"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != self.n_ue or any(x < 0 for x in w):
                raise ScenarioError("weights need one nonnegative entry "
                                    "per UE")
            object.__setattr__(self, "weights", w)
        if self.csi_mode is not None and self.csi_mode not in CSI_MODES:
            raise ScenarioError(f"csi_mode must be one of {CSI_MODES}")
        if self.n_c is not None:
            object.__setattr__(self, "n_c", int(self.n_c))
            if not 1 <= self.n_c <= self.n_ue:
                raise ScenarioError("n_c must be in [1, n_ue]")
        for name in ("mc_samples", "ssum_iters", "eval_blocks"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, int(v))
                if getattr(self, name) < 1:
                    raise ScenarioError(f"{name} must be >= 1")
        object.__setattr__(self, "seed", int(self.seed))
        if self.seed < 0:
            raise ScenarioError("seed must be nonnegative")

    def resolved_t_pilot(self) -> int:
        return self.t_pilot if self.t_pilot is not None \
            else max(self.tx_antennas)

    def resolved_samples(self) -> int:
        return self.mc_samples if self.mc_samples is not None \
            else DEFAULT_SAMPLES[self.direction]

    def resolved_weights(self) -> tuple:
        return self.weights if self.weights is not None \
            else (1.0,) * self.n_ue

    def p_avg_linear(self) -> float:
        return 10.0 ** (self.p_avg_db / 10.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields: "
                                f"{', '.join(sorted(unknown))}")
        missing = {"experiment", "direction", "n_rrh", "n_ue", "tx_antennas",
                   "rx_antennas", "T", "p_avg_db", "c_fronthaul"} - set(data)
        if missing:
            raise ScenarioError(f"missing scenario fields: "
                                f"{', '.join(sorted(missing))}")
        try:
            return cls(**data)
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(str(exc)) from exc


def with_sweep_value(scen: Scenario, parameter: str, value) -> Scenario:
    """The scenario at one sweep point.

    ``n_ue`` sweeps resize the per-UE antenna and weight vectors by
    repeating the first entry, matching the homogeneous-UE setups the
    presets describe.
    """
    if parameter == "T":
        return replace(scen, T=int(value))
    if parameter == "c_fronthaul":
        return replace(scen, c_fronthaul=float(value))
    if parameter == "n_ue":
        n = int(value)
        per_ue = scen.rx_antennas if scen.direction == "downlink" \
            else scen.tx_antennas
        resized = (per_ue[0],) * n
        kw = {"n_ue": n, "weights": None, "ue_positions": None}
        if scen.direction == "downlink":
            kw["rx_antennas"] = resized
        else:
            kw["tx_antennas"] = resized
        if scen.geometry_mode == "fixed":
            raise ScenarioError("n_ue sweeps need uniform geometry")
        return replace(scen, **kw)
    raise ScenarioError(f"unknown sweep parameter {parameter!r}")
