"""Scenario builders used by the tests, the acceptance run and the examples.

``python -m islandctl.fixtures OUTDIR`` writes every fixture as JSON, plus
the hand-made schedules of the blackstart and HIL-analog cases.
"""

from __future__ import annotations

import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .grid import Branch, Bus, Generator, Gfr, Load, Params, Profile, Scenario, Storage
from .scheduler import ScheduleSolution

DAY = 96
RES = 900


def _scenario(buses, branches, gfr, assets, profiles, params) -> Scenario:
    attached: dict[int, list[str]] = {}
    for a in (gfr, *assets):
        attached.setdefault(a.bus, []).append(a.id)
    bs = tuple(Bus(b, tuple(attached.get(b, ()))) for b in buses)
    return Scenario(bs, tuple(branches), tuple(assets), gfr,
                    {p.id: p for p in profiles}, params)


def _flat(pid: str, start: datetime, value: float, n: int, res: int = RES) -> Profile:
    return Profile(pid, start, res, np.full(n, float(value)))


def minimal() -> Scenario:
    """Two buses, one GFR and one critical load."""
    start = datetime(2024, 8, 2)
    prof = _flat("crit", start, 1.0, DAY)
    return _scenario(
        [1, 2], [Branch(1, 2, 100.0, 50.0)],
        Gfr("gfr", 1, rated_kw=10.0, buffer_kwh=5.0),
        [Load("crit_load", 2, "crit", critical=True)],
        [prof],
        Params(horizon_intervals=4, delta_tau_s=RES, delta_t_s=60, power_threshold_kw=0.5,
               suspend_intervals=15, start=start),
    )


# -- 13-bus synthetic rural grid -------------------------------------------------

BLACKOUT = datetime(2024, 8, 2)
HISTORY_DAYS = 4

_LOAD_BUSES = [3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 3, 8]
_PV_BUSES = [4, 5, 7, 9, 10, 11, 13, 14]
# capacity kWh, c_res, c_use per bus; 311.5 kWh in total
_STORAGE = {12: (146.4, 0.1, 0.001), 9: (75.1, 0.2, 0.002), 14: (50.0, 0.3, 0.003), 6: (40.0, 0.4, 0.004)}
_EDGES = [(2, 3), (3, 4), (4, 5), (5, 6), (3, 7), (7, 8), (8, 9), (9, 10), (7, 11), (11, 12),
          (12, 13), (13, 14)]


def _load_shape(rng, peak: float, days: int) -> np.ndarray:
    h = np.arange(DAY) / 4.0
    base = 0.35 + 0.25 * np.exp(-((h - 7.5) / 1.5) ** 2) + 0.65 * np.exp(-((h - 19.5) / 2.2) ** 2)
    base = base / base.max()
    out = []
    for _ in range(days):
        scale = rng.uniform(0.85, 1.05)
        noise = rng.normal(0.0, 0.04, DAY)
        out.append(np.clip(peak * scale * (base + noise), 0.05 * peak, peak))
    return np.concatenate(out)


def _pv_shape(kwp: float, factors) -> np.ndarray:
    h = np.arange(DAY) / 4.0
    bell = np.clip(np.sin(np.pi * (h - 5.5) / 15.0), 0.0, None) ** 1.3
    return np.concatenate([kwp * f * bell for f in factors])


def thirteen_bus(seed: int = 7, *, day_factors=None, drop_storage_bus: int | None = None,
                 actual_equals_forecast: bool = False, last_day_pv_boost: float = 1.0) -> Scenario:
    """Synthetic rural feeder: 14 loads (8 controllable), 8 PV, 4 ESS of 311.5 kWh.

    Profiles span ``HISTORY_DAYS`` days of history plus the blackout day
    starting at ``BLACKOUT``. ``actual_equals_forecast`` copies the previous
    day into the blackout day so the same-as-yesterday forecast is exact.
    ``last_day_pv_boost`` scales the blackout-day PV relative to the day before.
    """
    rng = np.random.default_rng(seed)
    days = HISTORY_DAYS + 1
    start = BLACKOUT - timedelta(days=HISTORY_DAYS)
    if day_factors is None:
        day_factors = rng.uniform(0.55, 0.95, days)
    day_factors = np.array(day_factors, dtype=float)
    day_factors[-1] = day_factors[-2] * last_day_pv_boost

    profiles, assets = [], []
    crit_peaks = [1.2, 1.8, 2.1, 2.4, 2.6, 2.9]
    ctrl_peaks = [3.2, 3.6, 4.0, 4.5, 5.0, 5.5, 6.0, 7.5]
    peaks = ctrl_peaks[:4] + crit_peaks[:3] + ctrl_peaks[4:] + crit_peaks[3:]
    c_shed = rng.uniform(0.0, 1.0, len(peaks))
    for i, (bus, peak) in enumerate(zip(_LOAD_BUSES, peaks)):
        pid = f"load{i + 1}"
        vals = _load_shape(rng, peak, days)
        if actual_equals_forecast:
            vals[-DAY:] = vals[-2 * DAY:-DAY]
        profiles.append(Profile(pid, start, RES, vals))
        critical = peak < 3.0
        assets.append(Load(pid, bus, pid, critical=critical,
                           c_shed=0.0 if critical else round(float(c_shed[i]), 4), c_sw=0.0001))
    kwps = [72.0, 48.5, 66.0, 55.2, 61.3, 40.0, 70.2, 55.0]
    for i, (bus, kwp) in enumerate(zip(_PV_BUSES, kwps)):
        pid = f"pv{i + 1}"
        local = day_factors * rng.uniform(0.97, 1.03, days)
        if actual_equals_forecast:
            local[-1] = local[-2]
        else:
            local[-1] = local[-2] * last_day_pv_boost
        profiles.append(Profile(pid, start, RES, _pv_shape(kwp, local)))
        assets.append(Generator(pid, bus, pid, c_gen=0.0))
    for bus, (cap, c_res, c_use) in _STORAGE.items():
        if bus == drop_storage_bus:
            continue
        assets.append(Storage(f"ess{bus}", bus, charge_max_kw=cap / 2, discharge_max_kw=cap / 2,
                              soc_min_kwh=0.0, soc_max_kwh=cap, c_res=c_res, c_use=c_use))
    return _scenario(
        list(range(2, 15)),
        [Branch(a, b, 1000.0, 400.0) for a, b in _EDGES],
        Gfr("gfr", 2, rated_kw=30.0, buffer_kwh=5.0),
        assets, profiles,
        Params(horizon_intervals=DAY, delta_tau_s=RES, delta_t_s=60, power_threshold_kw=0.5,
               suspend_intervals=15, start=BLACKOUT),
    )


def oversupply(seed: int = 7) -> Scenario:
    """The 13-bus grid after blackout with every load off; schedule it at a high confidence."""
    s = thirteen_bus(seed)
    return s.replace(params=_with(s.params, initial_load_state=0))


def undersupply(seed: int = 7, pv_boost: float = 1.15) -> Scenario:
    """Cheapest and largest storage removed; blackout-day PV exceeds the forecast."""
    s = thirteen_bus(seed, drop_storage_bus=12, last_day_pv_boost=pv_boost)
    return s.replace(params=_with(s.params, initial_load_state=0))


def undersupply_exact(seed: int = 7) -> Scenario:
    """As :func:`undersupply` but the actual blackout day equals its forecast."""
    s = thirteen_bus(seed, drop_storage_bus=12, actual_equals_forecast=True)
    return s.replace(params=_with(s.params, initial_load_state=0))


def _with(params: Params, **changes) -> Params:
    d = {f: getattr(params, f) for f in params.__dataclass_fields__}
    d.update(changes)
    return Params(**d)


# -- blackstart ---------------------------------------------------------------------

BLACKSTART_SHED = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]


def blackstart() -> tuple[Scenario, ScheduleSolution]:
    """Eight controllable loads behind a dead bus, one over-reserved ESS.

    The loads are listed in scrambled order so the connection order is set by
    their values rather than by file position.
    """
    start = BLACKOUT
    T = 4
    n = T + 2
    profiles = [_flat("crit", start, 1.0, n), _flat("ctrl", start, 1.5, n)]
    assets = [Load("crit_a", 2, "crit", critical=True), Load("crit_b", 3, "crit", critical=True)]
    order = [3, 0, 6, 1, 7, 4, 2, 5]
    for i in order:
        assets.append(Load(f"load{i + 1}", 2 + i % 2, "ctrl", c_shed=BLACKSTART_SHED[i], c_sw=0.0001))
    assets.append(Storage("ess_cheap", 2, charge_max_kw=20.0, discharge_max_kw=20.0,
                          soc_min_kwh=0.0, soc_max_kwh=60.0, c_res=0.1, c_use=0.001,
                          soc_init_kwh=40.0))
    assets.append(Storage("ess_sched", 3, charge_max_kw=10.0, discharge_max_kw=10.0,
                          soc_min_kwh=0.0, soc_max_kwh=30.0, c_res=0.3, c_use=0.003,
                          soc_init_kwh=10.0))
    sc = _scenario(
        [1, 2, 3], [Branch(1, 2, 500.0, 100.0), Branch(2, 3, 500.0, 100.0)],
        Gfr("gfr", 1, rated_kw=5.0, buffer_kwh=2.0),
        assets, profiles,
        Params(horizon_intervals=T, delta_tau_s=RES, delta_t_s=60, power_threshold_kw=0.5,
               suspend_intervals=15, start=start, initial_load_state=0),
    )
    # the cheap unit was planned to be nearly empty; the other follows its plan exactly
    sched = handmade_schedule(sc, {"ess_cheap": np.linspace(5.0, 0.0, T + 1),
                                   "ess_sched": np.full(T + 1, 10.0)})
    return sc, sched


def hil() -> tuple[Scenario, ScheduleSolution]:
    """Single-bus analog of the converter test bench, Δt = 5 s.

    The PV ramps at 0.5 p.u./s. The ESS ramp of 0.06 p.u./s (0.3 kW/s) stands
    in for the converter's slower power response.
    """
    start = BLACKOUT
    n = 4
    profiles = [_flat("crit", start, 3.0, n), _flat("ctrl", start, 7.0, n), _flat("pv", start, 6.0, n)]
    assets = [
        Load("crit_load", 1, "crit", critical=True),
        Load("ctrl_load", 1, "ctrl", c_shed=1.0, c_sw=0.1),
        Generator("pv", 1, "pv", c_gen=0.0),
        Storage("ess", 1, charge_max_kw=5.0, discharge_max_kw=5.0, soc_min_kwh=0.0,
                soc_max_kwh=5.0, c_res=0.1, c_use=0.2, soc_init_kwh=2.5),
    ]
    sc = _scenario(
        [1], [], Gfr("gfr", 1, rated_kw=34.5, buffer_kwh=10.0), assets, profiles,
        Params(horizon_intervals=1, delta_tau_s=RES, delta_t_s=5, power_threshold_kw=0.5,
               suspend_intervals=15, start=start, initial_load_state=0,
               ramp_pu_s={"pv": 0.5, "ess": 0.06}, gfr_value_v0=15.0),
    )
    sched = handmade_schedule(sc, {"ess": np.zeros(2)})
    return sc, sched


def handmade_schedule(sc: Scenario, soc: dict) -> ScheduleSolution:
    T = sc.params.horizon_intervals
    zeros = np.zeros(T)
    return ScheduleSolution(
        start=sc.start, delta_tau_s=sc.params.delta_tau_s, horizon=T, objective=0.0, costs={},
        soc={k: np.asarray(v, dtype=float) for k, v in soc.items()},
        charge_kw={k: zeros.copy() for k in soc}, discharge_kw={k: zeros.copy() for k in soc},
        load_state={}, load_intrinsic_kw={}, gen_kw={}, gen_upper_kw={}, flows={}, meta={},
    )


def write_all(outdir: str | Path) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        p.write_text(text)
        written.append(p)

    put("minimal.json", minimal().dumps())
    put("thirteen_bus.json", thirteen_bus().dumps())
    put("oversupply.json", oversupply().dumps())
    put("undersupply.json", undersupply().dumps())
    put("undersupply_exact.json", undersupply_exact().dumps())
    for name, (sc, sched) in (("blackstart", blackstart()), ("hil", hil())):
        put(f"{name}.json", sc.dumps())
        put(f"{name}_schedule.json", sched.dumps())
    return written


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: python -m islandctl.fixtures OUTDIR")
    for p in write_all(sys.argv[1]):
        print(p)
