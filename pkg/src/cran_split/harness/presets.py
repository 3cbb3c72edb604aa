"""Canned experiment definitions.

Five presets cover the standard comparisons: the uplink estimation-placement
pair swept over coherence time and over fronthaul capacity on a fixed
two-RRH/two-UE layout, and the downlink precoding-placement pair swept over
fronthaul capacity, coherence time, and user count on a four-RRH cell with
randomly placed users.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scenario import Scenario, ScenarioError

# Fixed planar layout for the uplink presets, coordinate origin at the
# lower-left corner of the 500 m square.
_UPLINK_RRH = ((307.50, 233.18), (430.3, 192.64))
_UPLINK_UE = ((363.7, 316.66), (438.17, 107.09))


@dataclass(frozen=True)
class SweepSpec:
    """Which scalar to sweep, over which values, comparing which variants."""

    parameter: str
    values: tuple
    variants: tuple

    def __post_init__(self):
        if not self.values:
            raise ScenarioError("sweep needs at least one value")
        if not self.variants:
            raise ScenarioError("sweep needs at least one variant")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "variants",
                           tuple(str(v) for v in self.variants))


def _uplink_scenario(experiment: str, T: int, c: float) -> Scenario:
    return Scenario(
        experiment=experiment, direction="uplink", n_rrh=2, n_ue=2,
        tx_antennas=(4, 4), rx_antennas=(4, 4), T=T, p_avg_db=10.0,
        c_fronthaul=c, geometry_mode="fixed",
        rrh_positions=_UPLINK_RRH, ue_positions=_UPLINK_UE)


def _downlink_scenario(experiment: str, T: int, c: float,
                       p_db: float, n_ue: int = 4) -> Scenario:
    return Scenario(
        experiment=experiment, direction="downlink", n_rrh=4, n_ue=n_ue,
        tx_antennas=(2, 2, 2, 2), rx_antennas=(1,) * n_ue, T=T,
        p_avg_db=p_db, c_fronthaul=c, geometry_mode="uniform")


_UPLINK_VARIANTS = ("conventional", "estimate-at-rrh")
_DOWNLINK_VARIANTS = ("conventional/inst", "conventional/stoch",
                      "alt/inst/ncall", "alt/stoch/nc1")


def _build():
    presets = {}
    presets["uplink-vs-T"] = (
        _uplink_scenario("uplink-vs-T", T=10, c=6.0),
        SweepSpec("T", (6, 10, 20, 40), _UPLINK_VARIANTS),
        "uplink sum-rate vs coherence time; 2 RRH / 2 UE fixed layout, "
        "C=6 bits/s/Hz, P=10 dB",
    )
    presets["uplink-vs-C"] = (
        _uplink_scenario("uplink-vs-C", T=10, c=6.0),
        SweepSpec("c_fronthaul", (2.0, 4.0, 6.0, 8.0, 12.0, 16.0),
                  _UPLINK_VARIANTS),
        "uplink sum-rate vs per-RRH fronthaul capacity; 2 RRH / 2 UE fixed "
        "layout, T=10, P=10 dB",
    )
    presets["downlink-vs-C"] = (
        _downlink_scenario("downlink-vs-C", T=20, c=4.0, p_db=10.0),
        SweepSpec("c_fronthaul", (1.0, 2.0, 4.0, 6.0, 8.0),
                  _DOWNLINK_VARIANTS),
        "downlink sum-rate vs per-RRH fronthaul capacity; 4 RRH / 4 UE "
        "random placement, T=20, P=10 dB",
    )
    presets["downlink-vs-T"] = (
        _downlink_scenario("downlink-vs-T", T=20, c=2.0, p_db=20.0),
        SweepSpec("T", (10, 20, 40), _DOWNLINK_VARIANTS),
        "downlink sum-rate vs coherence time; 4 RRH / 4 UE random "
        "placement, C=2 bits/s/Hz, P=20 dB",
    )
    presets["downlink-vs-NU"] = (
        _downlink_scenario("downlink-vs-NU", T=10, c=4.0, p_db=10.0),
        SweepSpec("n_ue", (2, 4, 6), _DOWNLINK_VARIANTS),
        "downlink sum-rate vs number of served users; 4 RRH random "
        "placement, C=4 bits/s/Hz, P=10 dB, T=10",
    )
    return presets


_PRESETS = _build()

PRESET_NAMES = tuple(_PRESETS)


def get_preset(name: str) -> tuple[Scenario, SweepSpec]:
    try:
        scen, sweep, _ = _PRESETS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown preset {name!r}; available: "
            f"{', '.join(PRESET_NAMES)}") from None
    return scen, sweep


def describe_presets() -> dict:
    """Preset name -> one-line description of what it sweeps."""
    return {name: desc for name, (_, _, desc) in _PRESETS.items()}
