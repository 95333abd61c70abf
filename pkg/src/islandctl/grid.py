"""Static grid description, asset parameters, profiles and DC power flow.

Power sign convention for assets: consumption is positive, injection is
negative. The DC power flow works on bus *injections* (generation positive),
which is the natural convention for nodal balance.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import MISSING, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Union

import numpy as np
from scipy.interpolate import make_interp_spline


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Bus:
    id: int
    assets: tuple[str, ...] = ()


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float
    flow_limit_kw: float

    @property
    def key(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Load:
    id: str
    bus: int
    profile: str
    critical: bool = False
    c_shed: float = 0.0
    c_sw: float = 0.0
    forecast_profile: str | None = None
    priority: int | None = None
    kind: str = field(default="load", init=False)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    profile: str
    c_gen: float = 0.0
    forecast_profile: str | None = None
    priority: int | None = None
    kind: str = field(default="generator", init=False)


@dataclass(frozen=True)
class Storage:
    id: str
    bus: int
    charge_max_kw: float
    discharge_max_kw: float
    soc_min_kwh: float
    soc_max_kwh: float
    eta_store: float = 1.0
    eta_dispatch: float = 1.0
    eta_preserve: float = 1.0
    c_res: float = 0.0
    c_use: float = 0.0
    in_profile: str | None = None
    out_profile: str | None = None
    soc_init_kwh: float | None = None
    priority: int | None = None
    kind: str = field(default="storage", init=False)


@dataclass(frozen=True)
class Gfr:
    id: str
    bus: int
    rated_kw: float
    buffer_kwh: float
    priority: int | None = None
    kind: str = field(default="gfr", init=False)


Asset = Union[Load, Generator, Storage, Gfr]
_KINDS = {"load": Load, "generator": Generator, "storage": Storage, "gfr": Gfr}


@dataclass(frozen=True, eq=False)
class Profile:
    """Equidistant time series. ``values`` is a read-only float array."""

    id: str
    start: datetime
    resolution_s: int
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.resolution_s <= 0:
            raise ScenarioError(f"profile {self.id!r}: resolution must be positive")
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ScenarioError(f"profile {self.id!r}: values must be a finite 1-D sequence")

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented
        return (
            self.id == other.id
            and self.start == other.start
            and self.resolution_s == other.resolution_s
            and np.array_equal(self.values, other.values)
        )

    def __len__(self):
        return len(self.values)

    @property
    def end(self) -> datetime:
        return self.start + timedelta(seconds=self.resolution_s * len(self.values))

    def index_of(self, when: datetime) -> int:
        offset = (when - self.start).total_seconds()
        idx, rem = divmod(offset, self.resolution_s)
        if rem != 0:
            raise ValueError(f"{when} is not aligned to profile {self.id!r}")
        return int(idx)

    def window(self, start: datetime, count: int) -> np.ndarray:
        i = self.index_of(start)
        if i < 0 or i + count > len(self.values):
            raise ValueError(
                f"profile {self.id!r} does not cover {count} samples from {start.isoformat()}"
            )
        return self.values[i:i + count]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "start": self.start.isoformat(),
            "resolution_s": self.resolution_s,
            "values": [float(v) for v in self.values],
        }


def interpolate_profile(p: Profile, target_resolution_s: int, clamp_nonnegative: bool = True) -> Profile:
    """Resample ``p`` to a finer resolution with a quadratic spline.

    The spline passes through every source sample. Samples after the last knot
    (the remainder of the final source interval) hold the last value, so the
    result has ``len(p) * ratio`` samples and covers the same time span.
    """
    if target_resolution_s <= 0 or p.resolution_s % target_resolution_s:
        raise ValueError(
            f"target resolution {target_resolution_s}s does not divide {p.resolution_s}s"
        )
    ratio = p.resolution_s // target_resolution_s
    if ratio == 1:
        return p
    n = len(p.values)
    knots = np.arange(n, dtype=float)
    x = np.arange(n * ratio, dtype=float) / ratio
    if n >= 3:
        spline = make_interp_spline(knots, p.values, k=2)
        y = spline(np.minimum(x, n - 1))
    elif n == 2:
        y = np.interp(x, knots, p.values)
    else:
        y = np.full(n * ratio, p.values[0] if n else 0.0)
    # knots exactly, whatever the spline round-off
    y[::ratio] = p.values
    y[x > n - 1] = p.values[-1]
    if clamp_nonnegative:
        y = np.maximum(y, 0.0)
    return Profile(p.id, p.start, target_resolution_s, y)


def read_profile_csv(path: str | Path, profile_id: str | None = None) -> Profile:
    """Read a ``timestamp,value`` CSV with a header row."""
    path = Path(path)
    stamps, values = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["timestamp", "value"]:
            raise ScenarioError(f"{path}: expected header 'timestamp,value'")
        for lineno, row in enumerate(reader, start=2):
            try:
                stamps.append(datetime.fromisoformat(row[0].strip()))
                values.append(float(row[1]))
            except (IndexError, ValueError) as exc:
                raise ScenarioError(f"{path}:{lineno}: {exc}") from None
    if len(stamps) < 1:
        raise ScenarioError(f"{path}: no samples")
    if len(stamps) == 1:
        resolution = 900
    else:
        steps = {(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])}
        if len(steps) != 1:
            raise ScenarioError(f"{path}: samples are not equidistant")
        resolution = int(steps.pop())
    return Profile(profile_id or path.stem, stamps[0], resolution, values)


@dataclass(frozen=True)
class Params:
    horizon_intervals: int
    delta_tau_s: int
    delta_t_s: int
    power_threshold_kw: float
    suspend_intervals: int
    start: datetime | None = None
    c_flow: float = 0.0001
    initial_load_state: int = 1
    # islanded control: per-asset ramp limits in p.u./s (absent = instantaneous)
    ramp_pu_s: dict = field(default_factory=dict)
    gfr_value_v0: float = 1.0
    gfr_value_alpha: float = 5.0

    def to_dict(self) -> dict:
        d = {
            "horizon_intervals": self.horizon_intervals,
            "delta_tau_s": self.delta_tau_s,
            "delta_t_s": self.delta_t_s,
            "power_threshold_kw": self.power_threshold_kw,
            "suspend_intervals": self.suspend_intervals,
            "c_flow": self.c_flow,
            "initial_load_state": self.initial_load_state,
            "gfr_value_v0": self.gfr_value_v0,
            "gfr_value_alpha": self.gfr_value_alpha,
        }
        if self.ramp_pu_s:
            d["ramp_pu_s"] = dict(self.ramp_pu_s)
        if self.start is not None:
            d["start"] = self.start.isoformat()
        return d


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated microgrid description shared by scheduling and islanded control.

    ``assets`` holds the flexibility assets (loads, generators, storage); the
    single grid-forming resource is kept apart in ``gfr`` since it acts as the
    slack rather than as a schedulable asset.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    assets: tuple[Asset, ...]
    gfr: Gfr
    profiles: dict
    params: Params

    def __post_init__(self):
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def loads(self) -> list[Load]:
        return [a for a in self.assets if isinstance(a, Load)]

    @property
    def generators(self) -> list[Generator]:
        return [a for a in self.assets if isinstance(a, Generator)]

    @property
    def storages(self) -> list[Storage]:
        return [a for a in self.assets if isinstance(a, Storage)]

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def start(self) -> datetime:
        if self.params.start is not None:
            return self.params.start
        return min(p.start for p in self.profiles.values())

    def profile(self, pid: str) -> Profile:
        try:
            return self.profiles[pid]
        except KeyError:
            raise ScenarioError(f"unknown profile {pid!r}") from None

    def asset(self, aid: str) -> Asset:
        if aid == self.gfr.id:
            return self.gfr
        for a in self.assets:
            if a.id == aid:
                return a
        raise KeyError(aid)

    def priorities(self) -> dict[str, int]:
        """Unique priority per agent id; explicit values win, others follow file order."""
        every = [self.gfr, *self.assets]
        explicit = {a.id: a.priority for a in every if a.priority is not None}
        taken = set(explicit.values())
        out, nxt = {}, 1
        for a in every:
            if a.id in explicit:
                out[a.id] = explicit[a.id]
                continue
            while nxt in taken:
                nxt += 1
            out[a.id] = nxt
            taken.add(nxt)
        return out

    def replace(self, **changes) -> "Scenario":
        d = {f: getattr(self, f) for f in ("buses", "branches", "assets", "gfr", "profiles", "params")}
        d.update(changes)
        return Scenario(**d)

    def to_dict(self) -> dict:
        assets = []
        for a in (self.gfr, *self.assets):
            entry = {"kind": a.kind}
            for name in a.__dataclass_fields__:
                if name == "kind":
                    continue
                value = getattr(a, name)
                if value is not None:
                    entry[name] = value
            assets.append(entry)
        return {
            "buses": [{"id": b.id} for b in self.buses],
            "branches": [
                {"from": br.from_bus, "to": br.to_bus, "susceptance": br.susceptance,
                 "flow_limit_kw": br.flow_limit_kw}
                for br in self.branches
            ],
            "assets": assets,
            "profiles": [p.to_dict() for p in self.profiles.values()],
            "params": self.params.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _validate(s: Scenario) -> None:
    ids = [b.id for b in s.buses]
    if len(set(ids)) != len(ids):
        raise ScenarioError("bus ids are not unique")
    if not ids:
        raise ScenarioError("scenario has no buses")
    known = set(ids)
    for br in s.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                raise ScenarioError(f"branch {br.key} references missing bus {end}")
        if br.from_bus == br.to_bus:
            raise ScenarioError(f"branch {br.key} is a self-loop")
        if not br.susceptance > 0:
            raise ScenarioError(f"branch {br.key}: susceptance must be > 0")
        if not br.flow_limit_kw > 0:
            raise ScenarioError(f"branch {br.key}: flow limit must be > 0")
    if not is_connected(ids, [(br.from_bus, br.to_bus) for br in s.branches]):
        raise ScenarioError("branch graph is not connected")

    asset_ids = [a.id for a in (s.gfr, *s.assets)]
    if len(set(asset_ids)) != len(asset_ids):
        raise ScenarioError("asset ids are not unique")
    prios = [a.priority for a in (s.gfr, *s.assets) if a.priority is not None]
    if len(set(prios)) != len(prios):
        raise ScenarioError("asset priorities are not unique")
    for a in (s.gfr, *s.assets):
        if a.bus not in known:
            raise ScenarioError(f"asset {a.id!r} references missing bus {a.bus}")
        _validate_asset(a, s.profiles)
        if isinstance(a, Gfr) and a is not s.gfr:
            raise ScenarioError("exactly one GFR is supported")

    p = s.params
    if p.horizon_intervals < 1:
        raise ScenarioError("params.horizon_intervals must be >= 1")
    if p.delta_t_s <= 0 or p.delta_tau_s <= 0:
        raise ScenarioError("params: resolutions must be positive")
    if p.delta_t_s > p.delta_tau_s:
        raise ScenarioError("params: delta_t_s must not exceed delta_tau_s")
    if p.power_threshold_kw < 0:
        raise ScenarioError("params.power_threshold_kw must be >= 0")
    if p.suspend_intervals < 0:
        raise ScenarioError("params.suspend_intervals must be >= 0")
    if p.initial_load_state not in (0, 1):
        raise ScenarioError("params.initial_load_state must be 0 or 1")
    if not (p.gfr_value_v0 > 0 and p.gfr_value_alpha > 0):
        raise ScenarioError("params: GFR value curve parameters must be positive")
    for aid, r in p.ramp_pu_s.items():
        if aid not in asset_ids:
            raise ScenarioError(f"params.ramp_pu_s references unknown asset {aid!r}")
        if not r > 0:
            raise ScenarioError(f"params.ramp_pu_s[{aid!r}] must be > 0")


def _validate_asset(a: Asset, profiles: dict) -> None:
    def need_profile(pid, what):
        if pid is not None and pid not in profiles:
            raise ScenarioError(f"asset {a.id!r}: {what} {pid!r} not found")

    if isinstance(a, Load):
        need_profile(a.profile, "profile")
        need_profile(a.forecast_profile, "forecast_profile")
        costs = {"c_shed": a.c_shed, "c_sw": a.c_sw}
    elif isinstance(a, Generator):
        need_profile(a.profile, "profile")
        need_profile(a.forecast_profile, "forecast_profile")
        costs = {"c_gen": a.c_gen}
    elif isinstance(a, Storage):
        need_profile(a.in_profile, "in_profile")
        need_profile(a.out_profile, "out_profile")
        costs = {"c_res": a.c_res, "c_use": a.c_use}
        for name in ("eta_store", "eta_dispatch", "eta_preserve"):
            eta = getattr(a, name)
            if not 0 < eta <= 1:
                raise ScenarioError(f"asset {a.id!r}: {name} must be in (0, 1]")
        if a.soc_min_kwh > a.soc_max_kwh:
            raise ScenarioError(f"asset {a.id!r}: soc_min_kwh exceeds soc_max_kwh")
        if a.charge_max_kw < 0 or a.discharge_max_kw < 0:
            raise ScenarioError(f"asset {a.id!r}: power limits must be >= 0")
        if a.soc_init_kwh is not None and not a.soc_min_kwh <= a.soc_init_kwh <= a.soc_max_kwh:
            raise ScenarioError(f"asset {a.id!r}: soc_init_kwh outside SoC bounds")
    else:
        costs = {}
        if not a.rated_kw > 0:
            raise ScenarioError(f"asset {a.id!r}: rated_kw must be > 0")
        if a.buffer_kwh < 0:
            raise ScenarioError(f"asset {a.id!r}: buffer_kwh must be >= 0")
    for name, value in costs.items():
        if value < 0:
            raise ScenarioError(f"asset {a.id!r}: {name} must be >= 0")


def is_connected(nodes, edges) -> bool:
    nodes = list(nodes)
    if not nodes:
        return True
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {nodes[0]}
    queue = deque([nodes[0]])
    while queue:
        for m in adj[queue.popleft()]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return len(seen) == len(nodes)


def _field(obj: dict, name: str, ctx: str, cast=float, default=...):
    if name not in obj:
        if default is ...:
            raise ScenarioError(f"{ctx}: missing field {name!r}")
        return default
    value = obj[name]
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{ctx}: field {name!r} has invalid value {value!r}") from None


def _parse_asset(obj: dict, idx: int) -> Asset:
    ctx = f"assets[{idx}]"
    kind = obj.get("kind")
    if kind not in _KINDS:
        raise ScenarioError(f"{ctx}: unknown kind {kind!r}")
    cls = _KINDS[kind]
    kwargs = {}
    for name, f in cls.__dataclass_fields__.items():
        if not f.init:
            continue
        required = f.default is MISSING
        default = ... if required else f.default
        if name in ("id", "profile", "forecast_profile", "in_profile", "out_profile"):
            cast = str
        elif name in ("bus", "priority"):
            cast = int
        elif name == "critical":
            cast = bool
        else:
            cast = float
        kwargs[name] = _field(obj, name, f"{ctx} ({obj.get('id', '?')})", cast, default)
    unknown = set(obj) - set(cls.__dataclass_fields__)
    if unknown:
        raise ScenarioError(f"{ctx}: unknown fields {sorted(unknown)}")
    return cls(**kwargs)


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    try:
        buses_raw = doc["buses"]
        branches_raw = doc.get("branches", [])
        assets_raw = doc["assets"]
        params_raw = doc["params"]
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"missing top-level section {exc}") from None

    profiles = {}
    for i, pr in enumerate(doc.get("profiles", [])):
        ctx = f"profiles[{i}]"
        if "csv" in pr:
            path = Path(pr["csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            prof = read_profile_csv(path, _field(pr, "id", ctx, str))
        else:
            try:
                start = datetime.fromisoformat(_field(pr, "start", ctx, str))
            except ValueError:
                raise ScenarioError(f"{ctx}: invalid start timestamp") from None
            prof = Profile(
                _field(pr, "id", ctx, str),
                start,
                _field(pr, "resolution_s", ctx, int),
                _field(pr, "values", ctx, list),
            )
        if prof.id in profiles:
            raise ScenarioError(f"{ctx}: duplicate profile id {prof.id!r}")
        profiles[prof.id] = prof

    assets = [_parse_asset(a, i) for i, a in enumerate(assets_raw)]
    gfrs = [a for a in assets if isinstance(a, Gfr)]
    if len(gfrs) != 1:
        raise ScenarioError(f"exactly one gfr asset is required, found {len(gfrs)}")
    others = tuple(a for a in assets if not isinstance(a, Gfr))

    attached: dict[int, list[str]] = {}
    for a in assets:
        attached.setdefault(a.bus, []).append(a.id)
    buses = tuple(
        Bus(_field(b, "id", f"buses[{i}]", int), tuple(attached.get(int(b.get("id", -1)), ())))
        for i, b in enumerate(buses_raw)
    )
    branches = tuple(
        Branch(
            _field(br, "from", f"branches[{i}]", int),
            _field(br, "to", f"branches[{i}]", int),
            _field(br, "susceptance", f"branches[{i}]"),
            _field(br, "flow_limit_kw", f"branches[{i}]"),
        )
        for i, br in enumerate(branches_raw)
    )
    ctx = "params"
    start = params_raw.get("start")
    params = Params(
        horizon_intervals=_field(params_raw, "horizon_intervals", ctx, int),
        delta_tau_s=_field(params_raw, "delta_tau_s", ctx, int),
        delta_t_s=_field(params_raw, "delta_t_s", ctx, int),
        power_threshold_kw=_field(params_raw, "power_threshold_kw", ctx),
        suspend_intervals=_field(params_raw, "suspend_intervals", ctx, int),
        start=datetime.fromisoformat(start) if start else None,
        c_flow=_field(params_raw, "c_flow", ctx, float, 0.0001),
        initial_load_state=_field(params_raw, "initial_load_state", ctx, int, 1),
        ramp_pu_s={str(k): float(v) for k, v in dict(params_raw.get("ramp_pu_s", {})).items()},
        gfr_value_v0=_field(params_raw, "gfr_value_v0", ctx, float, 1.0),
        gfr_value_alpha=_field(params_raw, "gfr_value_alpha", ctx, float, 5.0),
    )
    return Scenario(buses, branches, others, gfrs[0], profiles, params)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario JSON document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, base_dir=path.parent)


def dump_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(s.dumps())


def dc_power_flow(scenario: Scenario, injections_kw, slack_bus: int | None = None):
    """Solve the linearised power flow for the scenario's branches.

    ``injections_kw`` maps bus id to net injection (generation positive). The
    slack bus absorbs any residual so the injections balance. Returns
    ``(angles, flows)`` keyed by bus id and branch key; flows are positive in
    the from->to direction.
    """
    return dc_flow(scenario.bus_ids, scenario.branches, injections_kw,
                   scenario.gfr.bus if slack_bus is None else slack_bus)


def dc_flow(bus_ids, branches, injections_kw, slack_bus):
    bus_ids = list(bus_ids)
    if not is_connected(bus_ids, [(b.from_bus, b.to_bus) for b in branches]):
        raise ValueError("branch graph is not connected")
    pos = {b: i for i, b in enumerate(bus_ids)}
    n = len(bus_ids)
    p = np.zeros(n)
    for bus, value in dict(injections_kw).items():
        p[pos[bus]] += value
    s = pos[slack_bus]
    p[s] -= p.sum()
    lap = np.zeros((n, n))
    for br in branches:
        i, j = pos[br.from_bus], pos[br.to_bus]
        lap[i, i] += br.susceptance
        lap[j, j] += br.susceptance
        lap[i, j] -= br.susceptance
        lap[j, i] -= br.susceptance
    keep = [i for i in range(n) if i != s]
    theta = np.zeros(n)
    if keep:
        reduced = lap[np.ix_(keep, keep)]
        if np.linalg.cond(reduced) > 1e12:
            raise np.linalg.LinAlgError("singular susceptance matrix")
        theta[keep] = np.linalg.solve(reduced, p[keep])
    angles = {b: float(theta[pos[b]]) for b in bus_ids}
    flows = {br.key: br.susceptance * (angles[br.from_bus] - angles[br.to_bus]) for br in branches}
    return angles, flows


def samples_per_day(resolution_s: int) -> int:
    per_day, rem = divmod(86400, resolution_s)
    if rem:
        raise ValueError(f"resolution {resolution_s}s does not divide a day")
    return per_day


def hours(seconds: float) -> float:
    return seconds / 3600.0


__all__ = [
    "Asset", "Branch", "Bus", "Generator", "Gfr", "Load", "Params", "Profile",
    "Scenario", "ScenarioError", "Storage", "dc_flow", "dc_power_flow",
    "dump_scenario", "hours", "interpolate_profile", "is_connected",
    "load_scenario", "read_profile_csv", "samples_per_day", "scenario_from_dict",
]
