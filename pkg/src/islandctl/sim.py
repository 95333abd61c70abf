"""Islanded control loop.

Every control interval the agents measure, run one max-consensus round on
their requests and one min-consensus round on the responses, and activate at
most one matched pair. Between two consensus iterations the assets move toward
their setpoints at 1 s resolution under their ramp limits, and the GFR
supplies whatever mismatch remains.

Trace rows hold interval averages so that energy totals are exact sums.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from .agents import (AgentConfig, AgentKind, AgentState, FlexVector, apply_activation,
                     compute_request, compute_response, ess_optimal_power)
from .consensus import CommGraph, GraphError, graph_diameter, max_consensus, min_consensus
from .grid import Generator, Load, Scenario, Storage, hours, interpolate_profile
from .scheduler import ScheduleSolution

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    delta_t_s: int | None = None
    start: datetime | None = None
    steps: int | None = None
    power_threshold_kw: float | None = None
    suspend_intervals: int | None = None
    ramp_pu_s: dict | None = None
    gfr_v0: float | None = None
    gfr_alpha: float | None = None
    ess_floor: str = "discharge"
    blackstart: bool | None = None
    initial_soc: dict = field(default_factory=dict)
    iter_max: int | None = None
    substep_s: float = 1.0
    noise_kw: float = 0.0
    seed: int = 0

    def resolve(self, scenario: Scenario, schedule: ScheduleSolution) -> "SimConfig":
        """Fill unset fields from the scenario and the schedule."""
        p = scenario.params
        dt = p.delta_t_s if self.delta_t_s is None else self.delta_t_s
        if dt <= 0:
            raise ValueError("delta_t_s must be positive")
        start = schedule.start if self.start is None else self.start
        steps = self.steps
        if steps is None:
            span = schedule.horizon * schedule.delta_tau_s - (start - schedule.start).total_seconds()
            steps = max(int(span // dt), 0)
        return replace(
            self,
            delta_t_s=dt,
            start=start,
            steps=steps,
            power_threshold_kw=p.power_threshold_kw if self.power_threshold_kw is None else self.power_threshold_kw,
            suspend_intervals=p.suspend_intervals if self.suspend_intervals is None else self.suspend_intervals,
            ramp_pu_s=dict(p.ramp_pu_s) if self.ramp_pu_s is None else dict(self.ramp_pu_s),
            gfr_v0=p.gfr_value_v0 if self.gfr_v0 is None else self.gfr_v0,
            gfr_alpha=p.gfr_value_alpha if self.gfr_alpha is None else self.gfr_alpha,
            blackstart=(p.initial_load_state == 0) if self.blackstart is None else self.blackstart,
        )

    def agent_config(self) -> AgentConfig:
        return AgentConfig(self.power_threshold_kw, self.suspend_intervals, self.gfr_v0,
                           self.gfr_alpha, self.ess_floor)


@dataclass
class TraceRow:
    k: int
    t_s: float
    gfr_kw: float
    power_kw: dict
    shed_kw: float
    curtailed_kw: float
    soc_start: dict
    soc_end: dict
    charge_kwh: dict
    discharge_kwh: dict
    exo_kwh: dict
    load_connected: dict
    request: FlexVector
    response: FlexVector
    applied: bool
    anomalies: list
    available_kw: dict = field(default_factory=dict)
    intrinsic_kw: dict = field(default_factory=dict)


@dataclass
class SimTrace:
    start: datetime
    delta_t_s: int
    delta_tau_s: int
    storage_bus: dict
    load_ids: list
    rows: list = field(default_factory=list)
    gfr_rated_kw: float = 0.0

    def winners(self) -> list[tuple]:
        """(request owner, response owner) per interval; None marks no winner."""
        out = []
        for r in self.rows:
            req = None if r.request.is_null else r.request.owner
            resp = None if r.response.is_null else r.response.owner
            out.append((req, resp))
        return out

    def activations(self) -> list[tuple]:
        return [(r.k, r.request.owner, r.response.owner) for r in self.rows if r.applied]

    def ess_columns(self) -> list[tuple[str, str]]:
        buses = list(self.storage_bus.values())
        cols = []
        for aid, bus in self.storage_bus.items():
            name = f"ess_{bus}" if buses.count(bus) == 1 else f"ess_{bus}_{aid}"
            cols.append((aid, f"{name}_soc_kwh"))
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ess = self.ess_columns()
        w.writerow(["t", "gfr_kw", "shed_kw", "curtailed_kw", *[c for _, c in ess],
                    "winner_req_owner", "winner_resp_owner", "applied",
                    "req_power_kw", "req_value", "resp_power_kw", "resp_value", "anomaly"])
        for r in self.rows:
            w.writerow([
                _num(r.t_s), _num(r.gfr_kw), _num(r.shed_kw), _num(r.curtailed_kw),
                *[_num(r.soc_end[aid]) for aid, _ in ess],
                "" if r.request.is_null else r.request.owner,
                "" if r.response.is_null else r.response.owner,
                int(r.applied),
                _num(r.request.power), _num(r.request.value),
                _num(r.response.power), _num(r.response.value),
                ";".join(r.anomalies),
            ])
        return buf.getvalue()


def _num(x: float) -> str:
    return format(float(x), ".9g")


def default_comm_graph(scenario: Scenario) -> CommGraph:
    """Agents on one bus form a clique; agents on buses linked by a branch path
    that only crosses agent-less buses are neighbours."""
    by_bus: dict[int, list[str]] = {}
    for a in (scenario.gfr, *scenario.assets):
        by_bus.setdefault(a.bus, []).append(a.id)
    adj: dict[int, set] = {b: set() for b in scenario.bus_ids}
    for br in scenario.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    edges = set()
    for ids in by_bus.values():
        edges.update((a, b) for i, a in enumerate(ids) for b in ids[i + 1:])
    for src in by_bus:
        seen, stack = {src}, [src]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v in seen:
                    continue
                seen.add(v)
                if v in by_bus:
                    edges.update((a, b) for a in by_bus[src] for b in by_bus[v])
                else:
                    stack.append(v)
    nodes = [scenario.gfr.id, *(a.id for a in scenario.assets)]
    return CommGraph.from_edges(nodes, edges)


def load_comm_graph(path, scenario: Scenario) -> CommGraph:
    with open(path) as fh:
        doc = json.load(fh)
    nodes = [scenario.gfr.id, *(a.id for a in scenario.assets)]
    try:
        edges = [tuple(e) for e in doc["edges"]]
    except (KeyError, TypeError):
        raise GraphError(f"{path}: expected an object with an 'edges' list") from None
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"{path}: edge {list(e)} must have two endpoints")
    g = CommGraph.from_edges(nodes, edges)
    if not g.is_connected():
        raise GraphError(f"{path}: communication graph is not connected")
    return g


def apply_ramp_rates(current: float, target: float, ramp_pu_s: float, dt_s: float, rated_kw: float) -> float:
    """Move ``current`` toward ``target`` by at most ``ramp * rated * dt``."""
    if rated_kw <= 0:
        raise ValueError("rated power must be positive")
    if math.isinf(ramp_pu_s):
        return target
    step = ramp_pu_s * rated_kw * dt_s
    delta = target - current
    if abs(delta) <= step:
        return target
    return current + math.copysign(step, delta)


class _Series:
    """Profile values at the control resolution, held constant past the end."""

    def __init__(self, scenario: Scenario, dt: int):
        self.scenario = scenario
        self.dt = dt
        self.cache = {}

    def at(self, pid, when: datetime) -> float:
        if pid is None:
            return 0.0
        prof = self.cache.get(pid)
        if prof is None:
            src = self.scenario.profile(pid)
            if src.resolution_s % self.dt == 0:
                prof = interpolate_profile(src, self.dt)
            else:
                prof = src
            self.cache[pid] = prof
        x = (when - prof.start).total_seconds() / prof.resolution_s
        i = int(math.floor(x))
        if i < 0:
            raise ValueError(f"profile {pid!r} starts after {when.isoformat()}")
        return float(prof.values[min(i, len(prof.values) - 1)])


@dataclass
class SimState:
    k: int
    power: dict        # actual consumption-positive power per asset at the end of the last substep
    setpoint: dict
    connected: dict
    suspended_until: dict
    soc: dict


class Simulation:
    def __init__(self, scenario: Scenario, schedule: ScheduleSolution, config: SimConfig = SimConfig(),
                 graph: CommGraph | None = None):
        self.scenario = scenario
        self.schedule = schedule
        self.cfg = config.resolve(scenario, schedule)
        self.acfg = self.cfg.agent_config()
        self.graph = graph or default_comm_graph(scenario)
        self.diameter = graph_diameter(self.graph)
        self.series = _Series(scenario, self.cfg.delta_t_s)
        self.prio = scenario.priorities()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.rated = {}
        for a in scenario.assets:
            if isinstance(a, Generator):
                self.rated[a.id] = max(float(np.max(scenario.profile(a.profile).values)), 1e-9)
            elif isinstance(a, Storage):
                self.rated[a.id] = max(a.charge_max_kw, a.discharge_max_kw, 1e-9)
        # control intervals per scheduling interval, for the per-interval efficiencies
        self.frac = self.cfg.delta_t_s / scenario.params.delta_tau_s

    # -- state ---------------------------------------------------------------

    def initial_state(self) -> SimState:
        sc, cfg = self.scenario, self.cfg
        power, setpoint, connected, soc = {}, {}, {}, {}
        for a in sc.assets:
            if isinstance(a, Load):
                connected[a.id] = a.critical or not cfg.blackstart
                power[a.id] = 0.0
                setpoint[a.id] = 0.0
            elif isinstance(a, Generator):
                setpoint[a.id] = 0.0 if cfg.blackstart else -self.rated[a.id]
                power[a.id] = 0.0 if cfg.blackstart else None
            else:
                # explicit override, then the measured SoC at blackout, then the plan
                if a.id in cfg.initial_soc:
                    soc[a.id] = float(cfg.initial_soc[a.id])
                elif a.soc_init_kwh is not None:
                    soc[a.id] = a.soc_init_kwh
                elif a.id in self.schedule.soc:
                    soc[a.id] = self.schedule.soc_at(a.id, cfg.start)
                else:
                    soc[a.id] = a.soc_min_kwh
                soc[a.id] = float(np.clip(soc[a.id], a.soc_min_kwh, a.soc_max_kwh))
                power[a.id] = 0.0
                setpoint[a.id] = 0.0
        return SimState(0, power, setpoint, connected, {a.id: -1 for a in sc.assets}, soc)

    def _ess_limits(self, a: Storage, soc: float, exo_kwh: float) -> tuple[float, float]:
        h = hours(self.cfg.delta_t_s)
        kept = a.eta_preserve ** self.frac * soc + exo_kwh
        up = max(0.0, (a.soc_max_kwh - kept) / (a.eta_store * h))
        down = max(0.0, (kept - a.soc_min_kwh) * a.eta_dispatch / h)
        return -min(a.discharge_max_kw, down), min(a.charge_max_kw, up)

    def _exo_kwh(self, a: Storage, when: datetime) -> float:
        # in/out profiles are kWh per scheduling interval
        return (self.series.at(a.in_profile, when) - self.series.at(a.out_profile, when)) * self.frac

    # -- one control interval ---------------------------------------------------

    def step(self, st: SimState) -> tuple[SimState, TraceRow]:
        sc, cfg = self.scenario, self.cfg
        k = st.k
        now = cfg.start + timedelta(seconds=k * cfg.delta_t_s)
        after = now + timedelta(seconds=cfg.delta_t_s)
        h = hours(cfg.delta_t_s)
        anomalies: list[str] = []

        intrinsic, avail, limits, exo = {}, {}, {}, {}
        power = dict(st.power)
        for a in sc.assets:
            if isinstance(a, Load):
                intrinsic[a.id] = self.series.at(a.profile, now)
                power[a.id] = intrinsic[a.id] if st.connected[a.id] else 0.0
            elif isinstance(a, Generator):
                avail[a.id] = self.series.at(a.profile, now)
                if power[a.id] is None:
                    power[a.id] = -avail[a.id]
                power[a.id] = max(power[a.id], -avail[a.id])
                limits[a.id] = (-avail[a.id], 0.0)
            else:
                exo[a.id] = self._exo_kwh(a, now)
                limits[a.id] = self._ess_limits(a, st.soc[a.id], exo[a.id])
                power[a.id] = float(np.clip(power[a.id], *limits[a.id]))
        gfr_now = -sum(power.values())

        def measure(x):
            if cfg.noise_kw > 0:
                return x + float(self.rng.normal(0.0, cfg.noise_kw))
            return x

        states = {sc.gfr.id: AgentState(
            sc.gfr.id, AgentKind.GFR, self.prio[sc.gfr.id], measured_kw=measure(gfr_now),
            p_min=-sc.gfr.rated_kw, p_max=sc.gfr.rated_kw, rated_kw=sc.gfr.rated_kw)}
        for a in sc.assets:
            pr = self.prio[a.id]
            if isinstance(a, Load):
                states[a.id] = AgentState(
                    a.id, AgentKind.LOAD, pr, measured_kw=measure(power[a.id]),
                    optimal_kw=intrinsic[a.id], setpoint_kw=power[a.id], p_min=0.0,
                    p_max=intrinsic[a.id], intrinsic_kw=intrinsic[a.id],
                    connected=st.connected[a.id], critical=a.critical, c_shed=a.c_shed,
                    c_sw=a.c_sw, suspended_until=st.suspended_until[a.id])
            elif isinstance(a, Generator):
                states[a.id] = AgentState(
                    a.id, AgentKind.GEN, pr, measured_kw=measure(power[a.id]),
                    optimal_kw=0.0, setpoint_kw=st.setpoint[a.id], p_min=limits[a.id][0],
                    p_max=0.0, available_kw=avail[a.id], c_gen=a.c_gen,
                    suspended_until=st.suspended_until[a.id])
            else:
                lo, hi = limits[a.id]
                planned = a.id in self.schedule.soc
                target = self.schedule.soc_at(a.id, after) if planned else st.soc[a.id]
                ref = self.schedule.soc_at(a.id, now) if planned else st.soc[a.id]
                po = ess_optimal_power(st.soc[a.id], target - exo[a.id], cfg.delta_t_s,
                                       eta_store=a.eta_store, eta_dispatch=a.eta_dispatch,
                                       eta_preserve=a.eta_preserve ** self.frac)
                states[a.id] = AgentState(
                    a.id, AgentKind.ESS, pr, measured_kw=measure(power[a.id]),
                    optimal_kw=float(np.clip(po, lo, hi)), setpoint_kw=st.setpoint[a.id],
                    p_min=lo, p_max=hi, soc_kwh=st.soc[a.id], soc_min_kwh=a.soc_min_kwh,
                    soc_max_kwh=a.soc_max_kwh, soc_ref_kwh=ref, c_res=a.c_res,
                    c_use=a.c_use, suspended_until=st.suspended_until[a.id])

        requests = {i: compute_request(s, k, self.acfg) for i, s in states.items()}
        mx = max_consensus(self.graph, requests, self.cfg.iter_max)
        req = mx.winner
        response = FlexVector.null()
        if not req.is_null:
            responses = {i: compute_response(s, req, k, self.acfg) for i, s in states.items()}
            response = min_consensus(self.graph, req, responses, self.cfg.iter_max).winner
        states, act = apply_activation(states, req, response, k, self.acfg)
        anomalies.extend(f"clamped:{aid}" for aid in act.clamped)

        connected = dict(st.connected)
        suspended = dict(st.suspended_until)
        setpoint = dict(st.setpoint)
        for aid in (req.owner, response.owner):
            if not act.applied or aid == sc.gfr.id:
                continue
            s = states[aid]
            suspended[aid] = s.suspended_until
            if s.kind is AgentKind.LOAD:
                connected[aid] = s.connected
                power[aid] = intrinsic[aid] if s.connected else 0.0
            else:
                setpoint[aid] = s.setpoint_kw

        # ramp-limited evolution through the interval
        n_sub = max(1, int(round(cfg.delta_t_s / cfg.substep_s)))
        sub_h = h / n_sub
        movable = [a for a in sc.assets if not isinstance(a, Load)]
        targets = {}
        for a in movable:
            lo, hi = limits[a.id]
            targets[a.id] = min(max(setpoint[a.id], lo), hi)
        energy = {aid: 0.0 for aid in power}
        charge = {a.id: 0.0 for a in sc.storages}
        discharge = {a.id: 0.0 for a in sc.storages}
        gfr_energy = 0.0
        peak = 0.0
        for _ in range(n_sub):
            for a in movable:
                ramp = cfg.ramp_pu_s.get(a.id, math.inf)
                power[a.id] = apply_ramp_rates(power[a.id], targets[a.id], ramp,
                                               cfg.delta_t_s / n_sub, self.rated[a.id])
            total = 0.0
            for aid, p in power.items():
                energy[aid] += p * sub_h
                total += p
            for a in sc.storages:
                p = power[a.id]
                if p > 0:
                    charge[a.id] += p * sub_h
                else:
                    discharge[a.id] -= p * sub_h
            gfr_energy -= total * sub_h
            peak = max(peak, abs(total))

        avg = {aid: e / h for aid, e in energy.items()}
        gfr_avg = gfr_energy / h
        if peak > sc.gfr.rated_kw + 1e-9:
            anomalies.append("gfr_saturated")

        soc = dict(st.soc)
        for a in sc.storages:
            soc[a.id] = (a.eta_preserve ** self.frac * st.soc[a.id] + a.eta_store * charge[a.id]
                         - discharge[a.id] / a.eta_dispatch + exo[a.id])
            # absorb float dust at the bounds
            if a.soc_min_kwh - 1e-9 < soc[a.id] < a.soc_min_kwh:
                soc[a.id] = a.soc_min_kwh
            if a.soc_max_kwh < soc[a.id] < a.soc_max_kwh + 1e-9:
                soc[a.id] = a.soc_max_kwh

        shed = sum(intrinsic[a.id] for a in sc.loads if not connected[a.id])
        curtailed = sum(avail[a.id] + avg[a.id] for a in sc.generators)
        row = TraceRow(
            k=k, t_s=k * cfg.delta_t_s, gfr_kw=gfr_avg, power_kw=avg, shed_kw=shed,
            curtailed_kw=curtailed, soc_start=dict(st.soc), soc_end=soc, charge_kwh=charge,
            discharge_kwh=discharge, exo_kwh=exo, load_connected=dict(connected),
            request=req, response=response, applied=act.applied, anomalies=anomalies,
            available_kw=avail, intrinsic_kw=intrinsic)
        nxt = SimState(k + 1, power, setpoint, connected, suspended, soc)
        return nxt, row

    def run(self) -> SimTrace:
        sc = self.scenario
        trace = SimTrace(self.cfg.start, self.cfg.delta_t_s, sc.params.delta_tau_s,
                         {a.id: a.bus for a in sc.storages}, [a.id for a in sc.loads],
                         gfr_rated_kw=sc.gfr.rated_kw)
        st = self.initial_state()
        for _ in range(self.cfg.steps):
            st, row = self.step(st)
            trace.rows.append(row)
        return trace


def run(scenario: Scenario, schedule: ScheduleSolution, config: SimConfig = SimConfig(),
        graph: CommGraph | None = None) -> SimTrace:
    return Simulation(scenario, schedule, config, graph).run()


@dataclass(frozen=True)
class Summary:
    shed_kwh: float
    curtailed_kwh: float
    gfr_mean_kw: float
    gfr_envelope_kwh: float
    gfr_energy_kwh: float
    downtime_h: dict
    activations: int
    anomalies: int
    steps: int

    def to_dict(self) -> dict:
        return {
            "shed_kwh": self.shed_kwh,
            "curtailed_kwh": self.curtailed_kwh,
            "gfr_mean_kw": self.gfr_mean_kw,
            "gfr_envelope_kwh": self.gfr_envelope_kwh,
            "gfr_energy_kwh": self.gfr_energy_kwh,
            "downtime_h": dict(self.downtime_h),
            "activations": self.activations,
            "anomalies": self.anomalies,
            "steps": self.steps,
        }


def record_metrics(trace: SimTrace) -> Summary:
    h = hours(trace.delta_t_s)
    n = len(trace.rows)
    gfr = np.array([r.gfr_kw for r in trace.rows], dtype=float)
    running = np.concatenate([[0.0], np.cumsum(gfr * h)])
    downtime = {lid: 0.0 for lid in trace.load_ids}
    for r in trace.rows:
        for lid, on in r.load_connected.items():
            if not on:
                downtime[lid] += h
    return Summary(
        shed_kwh=float(sum(r.shed_kw for r in trace.rows) * h),
        curtailed_kwh=float(sum(r.curtailed_kw for r in trace.rows) * h),
        gfr_mean_kw=float(gfr.mean()) if n else 0.0,
        gfr_envelope_kwh=float(running.max() - running.min()),
        gfr_energy_kwh=float(running[-1]),
        downtime_h=downtime,
        activations=sum(r.applied for r in trace.rows),
        anomalies=sum(len(r.anomalies) for r in trace.rows),
        steps=n,
    )


def check_conservation(trace: SimTrace, scenario: Scenario, tol_kw: float = 1e-6,
                       tol_kwh: float = 1e-6) -> list[str]:
    """Power balance, SoC replay and storage limits; returns the violations found."""
    bad = []
    frac = trace.delta_t_s / trace.delta_tau_s
    h = hours(trace.delta_t_s)
    stores = {a.id: a for a in scenario.storages}
    for r in trace.rows:
        total = sum(r.power_kw.values()) + r.gfr_kw
        if abs(total) > tol_kw:
            bad.append(f"k={r.k}: power balance off by {total:.3g} kW")
        for aid, a in stores.items():
            replay = (a.eta_preserve ** frac * r.soc_start[aid] + a.eta_store * r.charge_kwh[aid]
                      - r.discharge_kwh[aid] / a.eta_dispatch + r.exo_kwh[aid])
            if abs(replay - r.soc_end[aid]) > tol_kwh:
                bad.append(f"k={r.k}: SoC replay of {aid} off by {replay - r.soc_end[aid]:.3g} kWh")
            soc = r.soc_end[aid]
            if soc < a.soc_min_kwh - tol_kwh or soc > a.soc_max_kwh + tol_kwh:
                bad.append(f"k={r.k}: SoC of {aid} outside bounds ({soc:.6g} kWh)")
            p = r.power_kw[aid]
            if p > a.charge_max_kw + tol_kw or p < -a.discharge_max_kw - tol_kw:
                bad.append(f"k={r.k}: power of {aid} outside limits ({p:.6g} kW)")
            if r.charge_kwh[aid] > a.charge_max_kw * h + tol_kwh:
                bad.append(f"k={r.k}: charge energy of {aid} exceeds its limit")
            if r.discharge_kwh[aid] > a.discharge_max_kw * h + tol_kwh:
                bad.append(f"k={r.k}: discharge energy of {aid} exceeds its limit")
        for a in scenario.generators:
            p = r.power_kw[a.id]
            if p > tol_kw or p < -r.available_kw[a.id] - tol_kw:
                bad.append(f"k={r.k}: generator {a.id} outside [-available, 0] ({p:.6g} kW)")
        for a in scenario.loads:
            want = r.intrinsic_kw[a.id] if r.load_connected[a.id] else 0.0
            if abs(r.power_kw[a.id] - want) > tol_kw:
                bad.append(f"k={r.k}: load {a.id} draws {r.power_kw[a.id]:.6g} kW, expected {want:.6g}")
            if a.critical and not r.load_connected[a.id]:
                bad.append(f"k={r.k}: critical load {a.id} disconnected")
    return bad
