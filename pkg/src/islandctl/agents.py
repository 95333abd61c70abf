"""Flexibility requests, responses, valuations and activations of single agents.

Powers are consumption-positive. A request ``r.power`` is the change of the
owner's own power it would like to see. A response ``a.power`` carries the same
sign as the request it answers and the responder's own power moves by
``-a.power``, so a matched pair leaves the GFR residual unchanged when the
magnitudes agree.

``value_of(agent, x)`` takes ``x`` as the negated own power change. This keeps
requests (``x = -r.power``) and responses (``x = a.power``) on one scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

ESS_FLOOR_DISCHARGE = "discharge"
ESS_FLOOR_LITERAL = "literal"
SOC_TOL = 1e-6


class AgentKind(str, enum.Enum):
    GFR = "gfr"
    LOAD = "load"
    GEN = "generator"
    ESS = "storage"


@dataclass(frozen=True)
class FlexVector:
    power: float
    value: float
    owner: object = None
    priority: int = 1 << 30

    @classmethod
    def null(cls, owner=None, priority: int = 1 << 30) -> "FlexVector":
        return cls(0.0, 0.0, owner, priority)

    @property
    def is_null(self) -> bool:
        return self.power == 0.0


@dataclass(frozen=True)
class AgentConfig:
    power_threshold_kw: float = 0.5
    suspend_intervals: int = 15
    gfr_v0: float = 1.0
    gfr_alpha: float = 5.0
    ess_floor: str = ESS_FLOOR_DISCHARGE

    def __post_init__(self):
        if self.power_threshold_kw < 0:
            raise ValueError("power threshold must be non-negative")
        if self.suspend_intervals < 0:
            raise ValueError("suspension must be non-negative")
        if self.gfr_v0 <= 0 or self.gfr_alpha <= 0:
            raise ValueError("GFR value curve parameters must be positive")
        if self.ess_floor not in (ESS_FLOOR_DISCHARGE, ESS_FLOOR_LITERAL):
            raise ValueError(f"unknown ESS floor rule {self.ess_floor!r}")


@dataclass(frozen=True)
class AgentState:
    """Snapshot of one agent at the start of a control interval.

    ``p_min``/``p_max`` are the power limits valid for the coming interval
    (for storage already tightened by the SoC headroom). ``intrinsic_kw`` is
    the load's own demand; ``available_kw`` the generator's current maximum.
    """

    id: str
    kind: AgentKind
    priority: int
    measured_kw: float = 0.0
    optimal_kw: float = 0.0
    setpoint_kw: float = 0.0
    p_min: float = 0.0
    p_max: float = 0.0
    # load
    intrinsic_kw: float = 0.0
    connected: bool = True
    critical: bool = False
    c_shed: float = 0.0
    c_sw: float = 0.0
    # generator
    available_kw: float = 0.0
    c_gen: float = 0.0
    # storage
    soc_kwh: float = 0.0
    soc_min_kwh: float = 0.0
    soc_max_kwh: float = 0.0
    soc_ref_kwh: float = 0.0  # planned SoC now
    c_res: float = 0.0
    c_use: float = 0.0
    # gfr
    rated_kw: float = 1.0
    suspended_until: int = -1

    def suspended(self, k: int) -> bool:
        return k <= self.suspended_until


def gfr_value(loading_kw: float, rated_kw: float, v0: float = 1.0, alpha: float = 5.0) -> float:
    return v0 * math.expm1(alpha * abs(loading_kw) / rated_kw)


def value_of(a: AgentState, x: float, cfg: AgentConfig = AgentConfig()) -> float:
    """System value of the agent moving its own power by ``-x``."""
    mag = abs(x)
    if a.kind is AgentKind.GFR:
        return gfr_value(x, a.rated_kw, cfg.gfr_v0, cfg.gfr_alpha)
    if a.kind is AgentKind.LOAD:
        # a shed load can only connect, a connected one only disconnect
        if not a.connected:
            return a.c_shed * mag - a.c_sw
        return -(a.c_shed * mag + a.c_sw)
    if a.kind is AgentKind.GEN:
        return a.c_gen * mag if x < 0 else -a.c_gen * mag
    # storage: energy above the plan only costs its usage
    if a.soc_kwh > a.soc_ref_kwh + SOC_TOL:
        return -a.c_use * mag
    gap = a.optimal_kw - a.measured_kw
    toward = min(mag, abs(gap)) if gap * -x > 0 else 0.0
    return (a.c_res - a.c_use) * toward - (a.c_res + a.c_use) * (mag - toward)


def _null(a: AgentState) -> FlexVector:
    return FlexVector.null(a.id, a.priority)


def compute_request(a: AgentState, k: int, cfg: AgentConfig = AgentConfig()) -> FlexVector:
    if a.suspended(k):
        return _null(a)
    pt = a.measured_kw
    if a.kind is AgentKind.GFR:
        rp = -pt
    elif a.kind is AgentKind.LOAD:
        rp = a.intrinsic_kw - pt
    elif a.kind is AgentKind.GEN:
        if a.c_gen <= 0:
            return _null(a)
        rp = -pt
    else:
        rp = a.optimal_kw - pt
        if rp < 0:
            if a.soc_kwh >= a.soc_max_kwh:
                return _null(a)
            rp = a.p_max - pt
            if abs(rp) < cfg.power_threshold_kw or rp <= 0:
                return _null(a)
            return FlexVector(rp, 0.0, a.id, a.priority)
    if abs(rp) < cfg.power_threshold_kw or rp == 0:
        return _null(a)
    rv = value_of(a, -rp, cfg)
    if rv < 0:
        return _null(a)
    return FlexVector(rp, rv, a.id, a.priority)


def _ess_floor(a: AgentState, cfg: AgentConfig) -> float:
    if cfg.ess_floor == ESS_FLOOR_LITERAL:
        return max(a.optimal_kw, 0.0)
    return max(a.optimal_kw, a.p_min)


def compute_response(a: AgentState, request: FlexVector, k: int,
                     cfg: AgentConfig = AgentConfig()) -> FlexVector:
    if request.is_null or a.id == request.owner or a.suspended(k) or a.kind is AgentKind.GFR:
        return _null(a)
    rp = request.power
    pt = a.measured_kw
    if rp > 0:
        if a.kind is AgentKind.LOAD:
            if a.critical or not a.connected:
                return _null(a)
            ap = pt
        elif a.kind is AgentKind.GEN:
            ap = min(pt + a.available_kw, rp)
        else:
            if a.soc_kwh <= a.soc_min_kwh:
                return _null(a)
            ap = min(pt - _ess_floor(a, cfg), rp)
    else:
        if a.kind is AgentKind.LOAD:
            if a.connected:
                return _null(a)
            ap = pt - a.intrinsic_kw
        elif a.kind is AgentKind.GEN:
            ap = max(pt, rp)
        else:
            if a.soc_kwh >= a.soc_max_kwh:
                return _null(a)
            ap = max(pt - a.p_max, rp)
    if ap * rp <= 0 or abs(ap) < cfg.power_threshold_kw:
        return _null(a)
    av = value_of(a, ap, cfg)
    if request.value + av < 0:
        return _null(a)
    return FlexVector(ap, av, a.id, a.priority)


@dataclass(frozen=True)
class Activation:
    request: FlexVector
    response: FlexVector
    clamped: tuple = ()

    @property
    def applied(self) -> bool:
        return not (self.request.is_null or self.response.is_null)


def _set(a: AgentState, target: float, clamped: list) -> AgentState:
    lo, hi = a.p_min, a.p_max
    t = min(max(target, lo), hi)
    if abs(t - target) > 1e-9:
        clamped.append(a.id)
    return replace(a, setpoint_kw=t)


def _toggle(a: AgentState, k: int, cfg: AgentConfig) -> AgentState:
    connected = not a.connected
    sp = a.intrinsic_kw if connected else 0.0
    return replace(a, connected=connected, setpoint_kw=sp,
                   suspended_until=k + cfg.suspend_intervals)


def apply_activation(states: dict, request: FlexVector, response: FlexVector, k: int,
                     cfg: AgentConfig = AgentConfig()) -> tuple[dict, Activation]:
    """Return updated states after activating the matched pair.

    The GFR never changes setpoint; it absorbs whatever mismatch remains.
    """
    if request.is_null or response.is_null:
        return states, Activation(request, response)
    out = dict(states)
    clamped: list = []
    mag = min(abs(request.power), abs(response.power))

    owner = states[request.owner]
    if owner.kind is AgentKind.LOAD:
        out[owner.id] = _toggle(owner, k, cfg)
    elif owner.kind in (AgentKind.GEN, AgentKind.ESS):
        out[owner.id] = _set(owner, owner.measured_kw + math.copysign(mag, request.power), clamped)

    resp = states[response.owner]
    if resp.kind is AgentKind.LOAD:
        out[resp.id] = _toggle(resp, k, cfg)
    elif resp.kind in (AgentKind.GEN, AgentKind.ESS):
        out[resp.id] = _set(resp, resp.measured_kw - response.power, clamped)
    return out, Activation(request, response, tuple(clamped))


def ess_optimal_power(soc_kwh: float, soc_target_kwh: float, dt_s: float, *, eta_store: float = 1.0,
                      eta_dispatch: float = 1.0, eta_preserve: float = 1.0) -> float:
    """Constant power (kW) that moves the SoC to ``soc_target_kwh`` over ``dt_s``.

    Inverts ``soc' = eta_p*soc + (eta_s*charge - discharge/eta_d)*dt``.
    """
    h = dt_s / 3600.0
    delta = soc_target_kwh - eta_preserve * soc_kwh
    if delta >= 0:
        return delta / (eta_store * h)
    return delta * eta_dispatch / h
