"""Synchronous max-/min-consensus over an undirected communication graph.

Each round every node sends its current best vector to all neighbours and then
ingests everything it received. Nodes are plain state machines
(:class:`MaxNode`, :class:`MinNode`) so the same logic can be driven by the
in-process :func:`run_rounds` or by a transport that delivers
:class:`Message` objects between rounds.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

from .agents import FlexVector


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CommGraph:
    nodes: tuple
    edges: frozenset

    def __post_init__(self):
        known = set(self.nodes)
        if len(known) != len(self.nodes):
            raise GraphError("duplicate agent ids")
        for e in self.edges:
            a, b = tuple(e)
            if a == b:
                raise GraphError(f"self-loop at {a!r}")
            if a not in known or b not in known:
                raise GraphError(f"edge {a!r}-{b!r} references an unknown agent")

    @classmethod
    def from_edges(cls, nodes: Iterable, edges: Iterable) -> "CommGraph":
        es = set()
        for a, b in edges:
            if a == b:
                raise GraphError(f"self-loop at {a!r}")
            es.add(frozenset((a, b)))
        return cls(tuple(nodes), frozenset(es))

    def neighbours(self) -> dict:
        return {n: list(v) for n, v in self._adjacency.items()}

    @cached_property
    def _adjacency(self) -> dict:
        adj = {n: [] for n in self.nodes}
        for e in self.edges:
            a, b = tuple(e)
            adj[a].append(b)
            adj[b].append(a)
        order = {n: i for i, n in enumerate(self.nodes)}
        for n in adj:
            adj[n].sort(key=order.__getitem__)
        return {n: tuple(v) for n, v in adj.items()}

    @cached_property
    def diameter(self) -> int:
        """Largest eccentricity, by BFS from every node."""
        best = 0
        for n in self.nodes:
            dist = _bfs(self._adjacency, n)
            if len(dist) != len(self.nodes):
                raise GraphError("communication graph is not connected")
            best = max(best, max(dist.values()))
        return best

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        return len(_bfs(self._adjacency, self.nodes[0])) == len(self.nodes)

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "edges": sorted(sorted(map(str, e)) for e in self.edges)}


def _bfs(adj, src) -> dict:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def graph_diameter(g: CommGraph) -> int:
    return g.diameter


def manhattan_distance(r: FlexVector, a: FlexVector) -> float:
    return abs(r.power - a.power) + abs(r.value - a.value)


@dataclass(frozen=True)
class Message:
    round: int
    sender: object
    to: object
    kind: str
    vector: FlexVector

    def to_json(self) -> str:
        v = self.vector
        return json.dumps({
            "round": self.round, "from": self.sender, "to": self.to, "kind": self.kind,
            "power_kw": v.power, "value": v.value, "owner": v.owner, "priority": v.priority,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Message":
        d = json.loads(line)
        vec = FlexVector(d["power_kw"], d["value"], d["owner"], d["priority"])
        return cls(d["round"], d["from"], d["to"], d["kind"], vec)


def max_key(v: FlexVector):
    # real vectors beat the null vector, then higher value, then lower priority number
    return (not v.is_null, v.value, -v.priority)


class MaxNode:
    kind = "max"

    def __init__(self, ident, initial: FlexVector):
        self.ident = ident
        self.best = initial

    def better(self, candidate: FlexVector) -> bool:
        return max_key(candidate) > max_key(self.best)

    def outbox(self, rnd: int, neighbours) -> list[Message]:
        return [Message(rnd, self.ident, j, self.kind, self.best) for j in neighbours]

    def receive(self, vectors: Iterable[FlexVector]) -> bool:
        changed = False
        for v in vectors:
            if self.better(v):
                self.best = v
                changed = True
        return changed


class MinNode(MaxNode):
    kind = "min"

    def __init__(self, ident, initial: FlexVector, request: FlexVector):
        super().__init__(ident, initial)
        self.request = request

    def distance(self, v: FlexVector) -> float:
        return math.inf if v.is_null else manhattan_distance(self.request, v)

    def better(self, candidate: FlexVector) -> bool:
        d_new, d_old = self.distance(candidate), self.distance(self.best)
        if d_new != d_old:
            return d_new < d_old
        if math.isinf(d_new):
            return False
        return candidate.priority < self.best.priority


@dataclass
class RoundOutcome:
    winner: FlexVector
    rounds: int
    converged_after: int
    messages_per_round: list = field(default_factory=list)
    held: dict = field(default_factory=dict)

    @property
    def agreed(self) -> bool:
        # null vectors carry no proposal, so their owners need not match
        if self.winner.is_null:
            return all(v.is_null for v in self.held.values())
        return all(v == self.winner for v in self.held.values())


def run_rounds(g: CommGraph, nodes: dict, iter_max: int, log: list | None = None,
               order: Callable | None = None) -> RoundOutcome:
    """Drive ``nodes`` (id -> node) through ``iter_max`` synchronous rounds.

    ``order`` may permute each node's inbox, which must not change the result.
    """
    adj = g._adjacency
    msgs_per_round = []
    converged = 0
    for rnd in range(1, iter_max + 1):
        inbox = {n: [] for n in g.nodes}
        sent = 0
        for n in g.nodes:
            best = nodes[n].best
            for j in adj[n]:
                inbox[j].append(best)
            sent += len(adj[n])
            if log is not None:
                log.extend(nodes[n].outbox(rnd, adj[n]))
        changed = False
        for n in g.nodes:
            msgs = inbox[n] if order is None else order(inbox[n])
            changed |= nodes[n].receive(msgs)
        msgs_per_round.append(sent)
        if changed:
            converged = rnd
    held = {n: nodes[n].best for n in g.nodes}
    winner = held[g.nodes[0]] if g.nodes else FlexVector.null()
    return RoundOutcome(winner, iter_max, converged, msgs_per_round, held)


def _iter_max(g: CommGraph, iter_max: int | None) -> int:
    diam = graph_diameter(g)
    if iter_max is None:
        return diam + 1
    if iter_max <= diam:
        raise ValueError(f"iter_max={iter_max} must exceed the graph diameter {diam}")
    return iter_max


def max_consensus(g: CommGraph, vectors: dict, iter_max: int | None = None, **kw) -> RoundOutcome:
    """Agree on the highest-valued request; ties go to the lower priority number."""
    n = _iter_max(g, iter_max)
    nodes = {i: MaxNode(i, vectors.get(i, FlexVector.null())) for i in g.nodes}
    return run_rounds(g, nodes, n, **kw)


def min_consensus(g: CommGraph, request: FlexVector, responses: dict, iter_max: int | None = None,
                  **kw) -> RoundOutcome:
    """Agree on the response closest to ``request`` in L1 over (power, value).

    Null responses carry an infinite distance; if nothing else exists the
    outcome winner is the null vector, meaning no activation.
    """
    n = _iter_max(g, iter_max)
    nodes = {i: MinNode(i, responses.get(i, FlexVector.null()), request) for i in g.nodes}
    return run_rounds(g, nodes, n, **kw)


def feasible_delta_t(diameter: int, delay_ms: float, margin_ms: float = 0.0) -> float:
    """Shortest control interval (ms) that fits one max and one min round."""
    if diameter < 0 or delay_ms < 0 or margin_ms < 0:
        raise ValueError("inputs must be non-negative")
    return 2 * diameter * delay_ms + margin_ms


def is_feasible(delta_t_ms: float, diameter: int, delay_ms: float, margin_ms: float = 0.0) -> bool:
    return delta_t_ms >= feasible_delta_t(diameter, delay_ms, margin_ms)
