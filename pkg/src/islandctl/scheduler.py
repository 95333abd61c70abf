"""Storage reservation scheduling as a chance-constrained MILP, run as MPC.

Intervals are numbered ``k = 1..T``; ``soc[0]`` is the reservation held at
the start of the horizon and ``soc[T]`` is forced to the storage minimum
(zero for the usual case) so nothing is reserved beyond what the horizon
needs. Storage power variables are in kW; every SoC update multiplies by the
interval length in hours.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .forecast import ConservativeBounds
from .grid import Scenario, ScenarioError, Storage, hours

log = logging.getLogger(__name__)

TERMINAL_PENALTY = 1e3  # per kWh left over when the terminal condition is relaxed


class InfeasibleSchedule(RuntimeError):
    def __init__(self, message, causes=()):
        super().__init__(message)
        self.causes = list(causes)

    def __str__(self):
        base = super().__str__()
        if not self.causes:
            return base
        return base + "; candidates: " + "; ".join(self.causes)


class _Index:
    """Hands out contiguous column ranges for named variable blocks."""

    def __init__(self):
        self.n = 0
        self.blocks = {}

    def add(self, name, count):
        rng = np.arange(self.n, self.n + count)
        self.blocks[name] = rng
        self.n += count
        return rng

    def __getitem__(self, name):
        return self.blocks[name]


@dataclass(eq=False)
class SchedulingProblem:
    c: np.ndarray
    constant: float
    A: sp.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    index: _Index
    start: datetime
    horizon: int
    delta_tau_s: int
    meta: dict
    relaxed_terminal: bool = False

    @property
    def n_binary(self) -> int:
        return int(self.integrality.sum())

    def binary_columns(self) -> np.ndarray:
        return np.flatnonzero(self.integrality)


@dataclass(eq=False)
class ScheduleSolution:
    start: datetime
    delta_tau_s: int
    horizon: int
    objective: float
    costs: dict
    soc: dict
    charge_kw: dict
    discharge_kw: dict
    load_state: dict
    load_intrinsic_kw: dict
    gen_kw: dict
    gen_upper_kw: dict
    flows: dict
    meta: dict
    terminal_relaxed: bool = False
    penalty: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def reserved(self) -> dict:
        return {k: float(v[0]) for k, v in self.soc.items()}

    def soc_at(self, aid: str, when: datetime) -> float:
        """Scheduled SoC at ``when``, linear between interval boundaries, 0 past the horizon."""
        traj = self.soc[aid]
        x = (when - self.start).total_seconds() / self.delta_tau_s
        if x <= 0:
            return float(traj[0])
        if x >= self.horizon:
            return float(traj[-1]) if x == self.horizon else 0.0
        return float(np.interp(x, np.arange(len(traj)), traj))

    def to_dict(self) -> dict:
        lst = lambda d: {k: [float(x) for x in v] for k, v in d.items()}  # noqa: E731
        return {
            "start": self.start.isoformat(),
            "delta_tau_s": self.delta_tau_s,
            "horizon": self.horizon,
            "objective": self.objective,
            "costs": dict(self.costs),
            "terminal_relaxed": self.terminal_relaxed,
            "penalty": self.penalty,
            "reserved": self.reserved,
            "storage": {
                k: {"soc_kwh": list(map(float, self.soc[k])),
                    "charge_kw": list(map(float, self.charge_kw[k])),
                    "discharge_kw": list(map(float, self.discharge_kw[k]))}
                for k in self.soc
            },
            "loads": {
                k: {"state": [int(x) for x in self.load_state[k]],
                    "intrinsic_kw": list(map(float, self.load_intrinsic_kw[k]))}
                for k in self.load_state
            },
            "generators": {
                k: {"gen_kw": list(map(float, self.gen_kw[k])),
                    "upper_kw": list(map(float, self.gen_upper_kw[k]))}
                for k in self.gen_kw
            },
            "flows": lst(self.flows),
            "meta": self.meta,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSolution":
        arr = lambda v: np.asarray(v, dtype=float)  # noqa: E731
        st = d.get("storage", {})
        ld = d.get("loads", {})
        gn = d.get("generators", {})
        return cls(
            start=datetime.fromisoformat(d["start"]),
            delta_tau_s=int(d["delta_tau_s"]),
            horizon=int(d["horizon"]),
            objective=float(d["objective"]),
            costs=dict(d.get("costs", {})),
            soc={k: arr(v["soc_kwh"]) for k, v in st.items()},
            charge_kw={k: arr(v["charge_kw"]) for k, v in st.items()},
            discharge_kw={k: arr(v["discharge_kw"]) for k, v in st.items()},
            load_state={k: np.asarray(v["state"], dtype=int) for k, v in ld.items()},
            load_intrinsic_kw={k: arr(v["intrinsic_kw"]) for k, v in ld.items()},
            gen_kw={k: arr(v["gen_kw"]) for k, v in gn.items()},
            gen_upper_kw={k: arr(v["upper_kw"]) for k, v in gn.items()},
            flows={k: arr(v) for k, v in d.get("flows", {}).items()},
            meta=d.get("meta", {}),
            terminal_relaxed=bool(d.get("terminal_relaxed", False)),
            penalty=float(d.get("penalty", 0.0)),
            warnings=list(d.get("warnings", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_json(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, path) -> "ScheduleSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["asset", "interval", "soc_kwh", "state", "gen_kw"])
            for aid, traj in self.soc.items():
                for k, v in enumerate(traj):
                    w.writerow([aid, k, repr(float(v)), "", ""])
            for aid, states in self.load_state.items():
                for k, v in enumerate(states, start=1):
                    w.writerow([aid, k, "", int(v), ""])
            for aid, g in self.gen_kw.items():
                for k, v in enumerate(g, start=1):
                    w.writerow([aid, k, "", "", repr(float(v))])


def _window(scenario: Scenario, pid, start, count):
    if pid is None:
        return np.zeros(count)
    return np.asarray(scenario.profile(pid).window(start, count), dtype=float)


def build_problem(scenario: Scenario, bounds: ConservativeBounds, t: int = 0, *,
                  horizon: int | None = None, relax_terminal: bool = False,
                  ignore_flow_limits: bool = False) -> SchedulingProblem:
    """Assemble the MILP for the horizon starting ``t`` intervals after ``bounds.start``."""
    T = scenario.params.horizon_intervals if horizon is None else horizon
    res = scenario.params.delta_tau_s
    if bounds.resolution_s != res:
        raise ScenarioError("bounds resolution differs from the scheduling resolution")
    dh = hours(res)
    start = bounds.start + timedelta(seconds=t * res)
    c_flow = scenario.params.c_flow
    s_prev = scenario.params.initial_load_state

    loads = scenario.loads
    gens = scenario.generators
    stores = scenario.storages
    bus_ids = scenario.bus_ids
    branches = scenario.branches
    slack = scenario.gfr.bus

    def bound_slice(table, aid):
        if aid not in table:
            raise ScenarioError(f"no forecast bounds for asset {aid!r}")
        arr = np.asarray(table[aid], dtype=float)
        if t + T > len(arr):
            raise ScenarioError(f"bounds for {aid!r} do not cover the horizon")
        return arr[t:t + T]

    l_int = {a.id: bound_slice(bounds.load, a.id) for a in loads}
    g_up = {a.id: bound_slice(bounds.generation, a.id) for a in gens}
    flows_in = {a.id: _window(scenario, a.in_profile, start, T) for a in stores}
    flows_out = {a.id: _window(scenario, a.out_profile, start, T) for a in stores}

    idx = _Index()
    for a in stores:
        idx.add(("soc", a.id), T + 1)
        idx.add(("fs", a.id), T)
        idx.add(("fd", a.id), T)
    for a in gens:
        idx.add(("g", a.id), T)
    for a in loads:
        idx.add(("s", a.id), T)
        if not a.critical:
            idx.add(("w", a.id), T)
    for br in branches:
        idx.add(("fp", br.key), T)
        idx.add(("fm", br.key), T)
    for b in bus_ids:
        idx.add(("th", b), T)
    if relax_terminal:
        for a in stores:
            idx.add(("e", a.id), 1)

    n = idx.n
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    integ = np.zeros(n, dtype=np.uint8)
    constant = 0.0

    rows, cols, vals, rlb, rub = [], [], [], [], []

    def row(entries, lo, hi):
        r = len(rlb)
        for col, v in entries:
            rows.append(r)
            cols.append(col)
            vals.append(v)
        rlb.append(lo)
        rub.append(hi)

    for a in stores:
        soc, fs, fd = idx[("soc", a.id)], idx[("fs", a.id)], idx[("fd", a.id)]
        lb[soc], ub[soc] = a.soc_min_kwh, a.soc_max_kwh
        ub[fs], ub[fd] = a.charge_max_kw, a.discharge_max_kw
        terminal = a.soc_min_kwh
        if relax_terminal:
            e = idx[("e", a.id)][0]
            row([(soc[T], 1.0), (e, -1.0)], terminal, terminal)
            c[e] = TERMINAL_PENALTY
        else:
            lb[soc[T]] = ub[soc[T]] = terminal
        c[soc[0]] += a.c_res
        c[fs] += a.c_use * a.eta_store * dh
        c[fd] += a.c_use / a.eta_dispatch * dh
        for k in range(1, T + 1):
            row([(soc[k], 1.0), (soc[k - 1], -a.eta_preserve),
                 (fs[k - 1], -a.eta_store * dh), (fd[k - 1], dh / a.eta_dispatch)],
                flows_in[a.id][k - 1] - flows_out[a.id][k - 1],
                flows_in[a.id][k - 1] - flows_out[a.id][k - 1])

    for a in gens:
        g = idx[("g", a.id)]
        ub[g] = g_up[a.id]
        c[g] += a.c_gen * dh

    for a in loads:
        s = idx[("s", a.id)]
        li = l_int[a.id]
        if a.critical:
            lb[s] = ub[s] = 1.0
            continue
        ub[s] = 1.0
        integ[s] = 1
        # shed cost c_shed*(l - l*s)*dh: constant part plus a negative coefficient on s
        constant += a.c_shed * dh * float(li.sum())
        c[s] -= a.c_shed * dh * li
        w = idx[("w", a.id)]
        c[w] += a.c_sw
        for k in range(T):
            if k == 0:
                row([(w[0], 1.0), (s[0], -1.0)], -s_prev, np.inf)
                row([(w[0], 1.0), (s[0], 1.0)], s_prev, np.inf)
            else:
                row([(w[k], 1.0), (s[k], -1.0), (s[k - 1], 1.0)], 0.0, np.inf)
                row([(w[k], 1.0), (s[k], 1.0), (s[k - 1], -1.0)], 0.0, np.inf)

    for br in branches:
        fp, fm = idx[("fp", br.key)], idx[("fm", br.key)]
        if not ignore_flow_limits:
            ub[fp] = ub[fm] = br.flow_limit_kw
        c[fp] += c_flow
        c[fm] += c_flow
        thn, thm = idx[("th", br.from_bus)], idx[("th", br.to_bus)]
        for k in range(T):
            row([(fp[k], 1.0), (fm[k], -1.0), (thn[k], -br.susceptance), (thm[k], br.susceptance)],
                0.0, 0.0)

    for b in bus_ids:
        th = idx[("th", b)]
        if b == slack:
            lb[th] = ub[th] = 0.0
        else:
            lb[th] = -np.inf

    # nodal balance: outgoing flow - generation + load - discharge + charge = 0
    at_bus = {b: [] for b in bus_ids}
    for br in branches:
        at_bus[br.from_bus].append((br.key, 1.0))
        at_bus[br.to_bus].append((br.key, -1.0))
    for b in bus_ids:
        for k in range(T):
            entries = []
            for key, sign in at_bus[b]:
                entries.append((idx[("fp", key)][k], sign))
                entries.append((idx[("fm", key)][k], -sign))
            for a in gens:
                if a.bus == b:
                    entries.append((idx[("g", a.id)][k], -1.0))
            for a in loads:
                if a.bus == b:
                    entries.append((idx[("s", a.id)][k], l_int[a.id][k]))
            for a in stores:
                if a.bus == b:
                    entries.append((idx[("fd", a.id)][k], -1.0))
                    entries.append((idx[("fs", a.id)][k], 1.0))
            row(entries, 0.0, 0.0)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rlb), n))
    meta = {
        "c_flow": c_flow,
        "initial_load_state": s_prev,
        "confidence": bounds.confidence,
        "storage": {a.id: {"c_res": a.c_res, "c_use": a.c_use, "eta_store": a.eta_store,
                           "eta_dispatch": a.eta_dispatch, "eta_preserve": a.eta_preserve,
                           "in_kwh": list(map(float, flows_in[a.id])),
                           "out_kwh": list(map(float, flows_out[a.id])),
                           "bus": a.bus}
                    for a in stores},
        "loads": {a.id: {"c_shed": a.c_shed, "c_sw": a.c_sw, "critical": a.critical,
                         "bus": a.bus, "intrinsic_kw": list(map(float, l_int[a.id]))}
                  for a in loads},
        "generators": {a.id: {"c_gen": a.c_gen, "bus": a.bus,
                              "upper_kw": list(map(float, g_up[a.id]))}
                       for a in gens},
        "branches": {br.key: {"limit": br.flow_limit_kw} for br in branches},
    }
    return SchedulingProblem(c, constant, A, np.array(rlb, float), np.array(rub, float),
                             lb, ub, integ, idx, start, T, res, meta, relax_terminal)


def _run_milp(p: SchedulingProblem, mip_rel_gap: float, time_limit: float | None):
    options = {"mip_rel_gap": mip_rel_gap, "disp": False}
    if time_limit is not None:
        options["time_limit"] = time_limit
    constraints = [LinearConstraint(p.A, p.row_lb, p.row_ub)] if p.A.shape[0] else []
    return milp(p.c, integrality=p.integrality, bounds=Bounds(p.lb, p.ub),
                constraints=constraints, options=options)


def solve(p: SchedulingProblem, *, mip_rel_gap: float = 1e-4, time_limit: float | None = None,
          scenario: Scenario | None = None, bounds: ConservativeBounds | None = None,
          t: int = 0) -> ScheduleSolution:
    """Solve the problem; on infeasibility retry with a relaxed terminal condition.

    The retry needs ``scenario`` and ``bounds`` to rebuild the problem. Without
    them an infeasible problem raises immediately.
    """
    res = _run_milp(p, mip_rel_gap, time_limit)
    if res.status == 2 and not p.relaxed_terminal and scenario is not None:
        relaxed = build_problem(scenario, bounds, t, horizon=p.horizon, relax_terminal=True)
        res2 = _run_milp(relaxed, mip_rel_gap, time_limit)
        if res2.x is not None:
            log.warning("terminal SoC condition relaxed to obtain a feasible schedule")
            return _extract(relaxed, res2)
        raise InfeasibleSchedule("scheduling problem is infeasible",
                                 diagnose(scenario, bounds, t, p.horizon))
    if res.x is None:
        causes = diagnose(scenario, bounds, t, p.horizon) if scenario is not None else []
        raise InfeasibleSchedule(f"solver failed: {res.message}", causes)
    return _extract(p, res)


def _extract(p: SchedulingProblem, res) -> ScheduleSolution:
    x = res.x
    ix = p.index
    m = p.meta
    soc, ch, dis = {}, {}, {}
    for aid in m["storage"]:
        soc[aid] = x[ix[("soc", aid)]].copy()
        ch[aid] = x[ix[("fs", aid)]].copy()
        dis[aid] = x[ix[("fd", aid)]].copy()
    states, intr = {}, {}
    for aid, info in m["loads"].items():
        states[aid] = np.rint(x[ix[("s", aid)]]).astype(int)
        intr[aid] = np.asarray(info["intrinsic_kw"])
    gen, up = {}, {}
    for aid, info in m["generators"].items():
        gen[aid] = x[ix[("g", aid)]].copy()
        up[aid] = np.asarray(info["upper_kw"])
    flows = {key: x[ix[("fp", key)]] - x[ix[("fm", key)]] for key in m["branches"]}
    penalty = 0.0
    if p.relaxed_terminal:
        penalty = TERMINAL_PENALTY * float(sum(x[ix[("e", aid)]][0] for aid in m["storage"]))
    sol = ScheduleSolution(
        start=p.start, delta_tau_s=p.delta_tau_s, horizon=p.horizon,
        objective=float(res.fun + p.constant - penalty),
        costs={}, soc=soc, charge_kw=ch, discharge_kw=dis, load_state=states,
        load_intrinsic_kw=intr, gen_kw=gen, gen_upper_kw=up, flows=flows, meta=m,
        terminal_relaxed=p.relaxed_terminal, penalty=penalty,
        warnings=["terminal SoC relaxed"] if p.relaxed_terminal else [],
    )
    sol.costs = cost_report(sol).as_dict()
    return sol


@dataclass(frozen=True)
class CostReport:
    c_gen: float
    c_ess: float
    c_load: float
    c_pf: float
    shed_cost: float
    switch_cost: float
    switches: int
    unserved_kwh: float
    reserved_kwh: float

    @property
    def total(self) -> float:
        return self.c_gen + self.c_ess + self.c_load + self.c_pf

    def as_dict(self) -> dict:
        return {"C_GEN": self.c_gen, "C_ESS": self.c_ess, "C_LOAD": self.c_load,
                "C_pf": self.c_pf, "total": self.total, "shed_cost": self.shed_cost,
                "switch_cost": self.switch_cost, "switches": self.switches,
                "unserved_kwh": self.unserved_kwh, "reserved_kwh": self.reserved_kwh}


def cost_report(sol: ScheduleSolution) -> CostReport:
    """Recompute every cost term from the primal values of ``sol``."""
    m = sol.meta
    dh = hours(sol.delta_tau_s)
    c_gen = sum(m["generators"][k]["c_gen"] * dh * float(np.sum(v)) for k, v in sol.gen_kw.items())
    c_ess = 0.0
    for k in sol.soc:
        info = m["storage"][k]
        c_ess += info["c_res"] * float(sol.soc[k][0])
        c_ess += info["c_use"] * dh * float(np.sum(info["eta_store"] * sol.charge_kw[k]
                                                   + sol.discharge_kw[k] / info["eta_dispatch"]))
    shed_cost = switch_cost = unserved = 0.0
    switches = 0
    s0 = m.get("initial_load_state", 1)
    for k, states in sol.load_state.items():
        info = m["loads"][k]
        li = sol.load_intrinsic_kw[k]
        lost = float(np.sum(li * (1 - states))) * dh
        unserved += lost
        shed_cost += info["c_shed"] * lost
        n_sw = int(np.abs(np.diff(np.concatenate([[s0], states]))).sum())
        if info["critical"]:
            n_sw = 0
        switches += n_sw
        switch_cost += info["c_sw"] * n_sw
    c_pf = m["c_flow"] * float(sum(np.abs(f).sum() for f in sol.flows.values()))
    return CostReport(c_gen, c_ess, shed_cost + switch_cost, c_pf, shed_cost, switch_cost,
                      switches, unserved, float(sum(v[0] for v in sol.soc.values())))


def diagnose(scenario: Scenario | None, bounds: ConservativeBounds | None, t: int,
             horizon: int) -> list[str]:
    """Name plausible reasons for infeasibility."""
    if scenario is None or bounds is None:
        return []
    causes = []
    T = horizon
    dh = hours(scenario.params.delta_tau_s)
    crit = np.zeros(T)
    for a in scenario.loads:
        if a.critical:
            crit += np.asarray(bounds.load[a.id][t:t + T])
    supply = np.zeros(T)
    for a in scenario.generators:
        supply += np.asarray(bounds.generation[a.id][t:t + T])
    discharge = sum(a.discharge_max_kw for a in scenario.storages)
    short = np.flatnonzero(crit > supply + discharge + 1e-9)
    if short.size:
        causes.append(f"critical load exceeds generation plus discharge capability in intervals "
                      f"{(short + 1).tolist()[:10]}")
    energy_need = float(np.sum(np.maximum(crit - supply, 0.0))) * dh
    capacity = sum(a.soc_max_kwh - a.soc_min_kwh for a in scenario.storages)
    if energy_need > capacity + 1e-9:
        causes.append(f"uncovered critical energy {energy_need:.2f} kWh exceeds storage capacity "
                      f"{capacity:.2f} kWh")
    for a in scenario.storages:
        start = bounds.start + timedelta(seconds=(t) * scenario.params.delta_tau_s)
        net_in = _window(scenario, a.in_profile, start, T) - _window(scenario, a.out_profile, start, T)
        if float(net_in.sum()) > a.discharge_max_kw * dh * T / a.eta_dispatch + a.soc_max_kwh:
            causes.append(f"storage {a.id!r}: mandatory in-flows exceed dispatch capability "
                          "(terminal SoC unreachable)")
    if scenario.branches:
        p = build_problem(scenario, bounds, t, horizon=T, relax_terminal=True, ignore_flow_limits=True)
        if _run_milp(p, 1e-2, 30).x is not None:
            causes.append("branch flow limits")
    return causes or ["unknown (no simple cause found)"]


def schedule(scenario: Scenario, bounds: ConservativeBounds, t: int = 0, **kw) -> ScheduleSolution:
    """Build and solve in one go."""
    p = build_problem(scenario, bounds, t, horizon=kw.pop("horizon", None))
    return solve(p, scenario=scenario, bounds=bounds, t=t, **kw)


@dataclass
class MpcState:
    t: int
    solution: ScheduleSolution | None
    control: dict
    soc: dict
    warning: bool = False


def initial_mpc_state(scenario: Scenario) -> MpcState:
    soc = {a.id: (a.soc_init_kwh if a.soc_init_kwh is not None else a.soc_min_kwh)
           for a in scenario.storages}
    return MpcState(t=-1, solution=None, control={}, soc=soc)


def _reach_control(a: Storage, soc: float, target: float, dh: float) -> tuple[float, float]:
    """Store/dispatch power that moves ``soc`` toward ``target`` in one interval."""
    kept = a.eta_preserve * soc
    if target > kept:
        return min((target - kept) / (a.eta_store * dh), a.charge_max_kw), 0.0
    return 0.0, min((kept - target) * a.eta_dispatch / dh, a.discharge_max_kw)


def mpc_step(state: MpcState, scenario: Scenario, bounds: ConservativeBounds, t: int,
             soc_measured: dict | None = None, **solve_kw) -> MpcState:
    """Re-solve with the horizon shifted to ``t`` and apply the reservation control.

    The applied control is the store/dispatch power of the interval leading
    into ``t``, chosen to bring the measured SoC to the fresh reservation.
    """
    soc = dict(state.soc)
    if soc_measured:
        soc.update(soc_measured)
    warning = False
    try:
        sol = schedule(scenario, bounds, t, **solve_kw)
    except (InfeasibleSchedule, ScenarioError) as exc:
        if state.solution is None:
            raise
        log.warning("MPC step %d failed (%s); keeping previous schedule", t, exc)
        sol, warning = state.solution, True
    dh = hours(scenario.params.delta_tau_s)
    control, nxt = {}, {}
    for a in scenario.storages:
        if warning:
            now = bounds.start + timedelta(seconds=t * scenario.params.delta_tau_s)
            target = sol.soc_at(a.id, now)
        else:
            target = sol.reserved[a.id]
        fs, fd = _reach_control(a, soc[a.id], target, dh)
        control[a.id] = (fs, fd)
        new = a.eta_preserve * soc[a.id] + a.eta_store * fs * dh - fd * dh / a.eta_dispatch
        nxt[a.id] = float(np.clip(new, a.soc_min_kwh, a.soc_max_kwh))
    return MpcState(t=t, solution=sol, control=control, soc=nxt, warning=warning)


def confidence_sweep(scenario: Scenario, gammas, bounds_fn, **solve_kw) -> list[tuple[float, ScheduleSolution]]:
    """Solve once per confidence level; ``bounds_fn(gamma)`` supplies the bounds."""
    out = []
    for g in gammas:
        out.append((g, schedule(scenario, bounds_fn(g), **solve_kw)))
    return out


__all__ = [
    "CostReport", "InfeasibleSchedule", "MpcState", "ScheduleSolution", "SchedulingProblem",
    "build_problem", "confidence_sweep", "cost_report", "diagnose", "initial_mpc_state",
    "mpc_step", "schedule", "solve",
]
