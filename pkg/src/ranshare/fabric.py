"""Spine-leaf compute and converged fabrics, flow routing, and PTP timing.

The reference build follows a two-tier layout: a compute fabric whose leaf
pairs split into fronthaul pairs (radio-unit side, behind a cell-site
aggregation router) and server pairs (GPU-server frontends), plus a
disjoint converged fabric for server backends reaching midhaul, backhaul,
or the internet through a WAN router. Each fronthaul leaf carries a PTP
grandmaster; the aggregation router is timing-transparent, so it does not
count as a synchronization hop.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import networkx as nx

from .compute import NfBundle, Server
from .errors import InvalidCounts, NoPath, OddLeafCount, UnreachableEndpoint
from .workload import CellConfig


class SwitchRole(Enum):
    FRONTHAUL_LEAF = "FRONTHAUL_LEAF"
    SERVER_LEAF = "SERVER_LEAF"
    COMPUTE_SPINE = "COMPUTE_SPINE"
    CONVERGED_LEAF = "CONVERGED_LEAF"
    CONVERGED_SPINE = "CONVERGED_SPINE"
    AGGREGATION_ROUTER = "AGGREGATION_ROUTER"


class FlowDirection(Enum):
    EAST_WEST = "EAST_WEST"
    NORTH_SOUTH = "NORTH_SOUTH"


class FlowKind(Enum):
    FRONTHAUL = "FRONTHAUL"
    MIDHAUL = "MIDHAUL"
    BACKHAUL = "BACKHAUL"
    N6 = "N6"
    AI_WIRED = "AI_WIRED"


@dataclass(frozen=True)
class Switch:
    id: str
    role: SwitchRole
    port_capacity_gbps: float = 100.0


@dataclass
class Link:
    endpoint_a: str
    endpoint_b: str
    capacity_gbps: float
    current_load_gbps: float = 0.0

    @property
    def id(self) -> str:
        return f"{self.endpoint_a}~{self.endpoint_b}"


@dataclass(frozen=True)
class Flow:
    id: str
    src: str
    dst: str
    direction: FlowDirection
    rate_gbps: float
    kind: FlowKind

    def __post_init__(self):
        if self.rate_gbps < 0:
            raise ValueError("flow rate must be >= 0")
        east_west = self.kind is FlowKind.FRONTHAUL
        expected = FlowDirection.EAST_WEST if east_west else FlowDirection.NORTH_SOUTH
        if self.direction is not expected:
            raise ValueError(f"{self.kind.value} flows must be {expected.value}")


def flow(flow_id: str, src: str, dst: str, rate_gbps: float, kind: FlowKind) -> Flow:
    """Build a flow with the direction implied by its kind."""
    direction = (
        FlowDirection.EAST_WEST if kind is FlowKind.FRONTHAUL else FlowDirection.NORTH_SOUTH
    )
    return Flow(flow_id, src, dst, direction, rate_gbps, kind)


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    detail: str

    def __str__(self):
        return f"{self.rule}({self.subject}): {self.detail}"


@dataclass(frozen=True)
class CapacityViolation:
    link_id: str
    load_gbps: float
    capacity_gbps: float


@dataclass
class FabricTopology:
    switches: dict[str, Switch]
    links: dict[str, Link]
    rus: dict[str, tuple[str, str]]  # RU id -> fronthaul leaf pair
    server_frontends: dict[str, tuple[str, str]]  # server id -> server leaf pair
    server_backends: dict[str, tuple[str, str]]  # server id -> converged leaf pair
    gm_switches: list[str]
    aggregation_router: str = "agg"
    wan_router: str = "wan"
    _graph: nx.Graph | None = field(default=None, repr=False, compare=False)

    def graph(self) -> nx.Graph:
        if self._graph is None:
            g = nx.Graph()
            for sid in self.switches:
                g.add_node(sid)
            for link in self.links.values():
                g.add_edge(link.endpoint_a, link.endpoint_b, link_id=link.id)
            self._graph = g
        return self._graph

    def ids_with_role(self, role: SwitchRole) -> list[str]:
        return sorted(s.id for s in self.switches.values() if s.role is role)


@dataclass(frozen=True)
class SyncTree:
    grandmaster: str
    paths: dict[str, tuple[str, ...]]
    max_hops: int


@dataclass(frozen=True)
class FronthaulCalibration:
    gbps_per_mhz_per_port: float = 0.05


def _pairs(ids: list[str]) -> list[tuple[str, str]]:
    return [(ids[i], ids[i + 1]) for i in range(0, len(ids), 2)]


def build_reference_fabric(
    n_compute_spines: int,
    n_compute_leaves: int,
    n_converged_spines: int,
    n_converged_leaves: int,
    rus: list[str],
    servers: list[Server],
    link_capacity_gbps: float = 100.0,
) -> FabricTopology:
    """Construct the two-fabric reference topology.

    Compute leaves are grouped into pairs; with a single pair the pair is
    dual-role (fronthaul and server attach), otherwise the first half of
    the pairs (rounded up) serve fronthaul and the rest serve servers.
    """
    if n_compute_spines < 1 or n_converged_spines < 1:
        raise InvalidCounts("need at least one spine per fabric")
    if n_compute_leaves < 2 or n_converged_leaves < 2:
        raise InvalidCounts("need at least one leaf pair per fabric")
    if n_compute_leaves % 2 or n_converged_leaves % 2:
        raise OddLeafCount("leaf switches come in pairs")
    if not rus or not servers:
        raise InvalidCounts("need at least one RU and one server")

    switches: dict[str, Switch] = {}
    links: dict[str, Link] = {}

    def add_switch(sid: str, role: SwitchRole):
        switches[sid] = Switch(sid, role, link_capacity_gbps)

    def add_link(a: str, b: str, capacity: float):
        link = Link(a, b, capacity)
        links[link.id] = link

    compute_spines = [f"cs{i + 1}" for i in range(n_compute_spines)]
    compute_leaves = [f"cl{i + 1}" for i in range(n_compute_leaves)]
    leaf_pairs = _pairs(compute_leaves)
    if len(leaf_pairs) == 1:
        fronthaul_pairs = server_pairs = leaf_pairs
    else:
        split = (len(leaf_pairs) + 1) // 2
        fronthaul_pairs, server_pairs = leaf_pairs[:split], leaf_pairs[split:]
    fronthaul_leaves = [l for p in fronthaul_pairs for l in p]
    server_leaves = [l for p in server_pairs for l in p]

    for sid in compute_spines:
        add_switch(sid, SwitchRole.COMPUTE_SPINE)
    for sid in compute_leaves:
        role = (
            SwitchRole.FRONTHAUL_LEAF if sid in fronthaul_leaves else SwitchRole.SERVER_LEAF
        )
        add_switch(sid, role)
    for leaf in compute_leaves:
        for spine in compute_spines:
            add_link(leaf, spine, link_capacity_gbps)

    converged_spines = [f"vs{i + 1}" for i in range(n_converged_spines)]
    converged_leaves = [f"vl{i + 1}" for i in range(n_converged_leaves)]
    converged_pairs = _pairs(converged_leaves)
    for sid in converged_spines:
        add_switch(sid, SwitchRole.CONVERGED_SPINE)
    for sid in converged_leaves:
        add_switch(sid, SwitchRole.CONVERGED_LEAF)
    for leaf in converged_leaves:
        for spine in converged_spines:
            add_link(leaf, spine, link_capacity_gbps)

    # Cell-site aggregation: every RU reaches its fronthaul pair through it.
    add_switch("agg", SwitchRole.AGGREGATION_ROUTER)
    for leaf in fronthaul_leaves:
        add_link("agg", leaf, link_capacity_gbps)
    ru_homes: dict[str, tuple[str, str]] = {}
    for i, ru in enumerate(rus):
        pair = fronthaul_pairs[i % len(fronthaul_pairs)]
        ru_homes[ru] = pair
        add_link(ru, "agg", link_capacity_gbps)

    # WAN exit for midhaul/backhaul/N6 behind the converged spines.
    add_switch("wan", SwitchRole.AGGREGATION_ROUTER)
    for spine in converged_spines:
        add_link("wan", spine, link_capacity_gbps)

    frontends: dict[str, tuple[str, str]] = {}
    backends: dict[str, tuple[str, str]] = {}
    for i, server in enumerate(servers):
        fe_pair = server_pairs[i % len(server_pairs)]
        be_pair = converged_pairs[i % len(converged_pairs)]
        frontends[server.id] = fe_pair
        backends[server.id] = be_pair
        for leaf in fe_pair:
            add_link(server.id, leaf, server.frontend_port_gbps)
        for leaf in be_pair:
            add_link(server.id, leaf, server.backend_port_gbps)

    return FabricTopology(
        switches=switches,
        links=links,
        rus=ru_homes,
        server_frontends=frontends,
        server_backends=backends,
        gm_switches=sorted(fronthaul_leaves),
    )


def validate_topology(topology: FabricTopology) -> list[Violation]:
    """Structural checks; returns violations as data rather than raising."""
    violations: list[Violation] = []
    g = topology.graph()

    def linked(a: str, b: str) -> bool:
        return g.has_edge(a, b)

    spine_sets = (
        (SwitchRole.COMPUTE_SPINE, (SwitchRole.FRONTHAUL_LEAF, SwitchRole.SERVER_LEAF)),
        (SwitchRole.CONVERGED_SPINE, (SwitchRole.CONVERGED_LEAF,)),
    )
    for spine_role, leaf_roles in spine_sets:
        spines = topology.ids_with_role(spine_role)
        leaves = [l for r in leaf_roles for l in topology.ids_with_role(r)]
        for leaf in leaves:
            for spine in spines:
                if not linked(leaf, spine):
                    violations.append(
                        Violation(
                            "BipartiteIncomplete",
                            f"{leaf}~{spine}",
                            f"missing {spine_role.value} mesh link",
                        )
                    )

    agg = topology.aggregation_router
    for ru, pair in sorted(topology.rus.items()):
        if len(set(pair)) != 2:
            violations.append(
                Violation("RedundancyViolation", ru, "RU homed to fewer than two leaves")
            )
            continue
        if not linked(ru, agg):
            violations.append(Violation("RedundancyViolation", ru, "RU not on aggregation"))
        for leaf in pair:
            if not linked(agg, leaf):
                violations.append(
                    Violation("RedundancyViolation", ru, f"aggregation not linked to {leaf}")
                )

    for server, pair in sorted(topology.server_frontends.items()):
        for leaf in pair:
            if not linked(server, leaf):
                violations.append(
                    Violation("AttachmentViolation", server, f"frontend missing link to {leaf}")
                )
    for server, pair in sorted(topology.server_backends.items()):
        for leaf in pair:
            if not linked(server, leaf):
                violations.append(
                    Violation("AttachmentViolation", server, f"backend missing link to {leaf}")
                )

    fronthaul_leaves = topology.ids_with_role(SwitchRole.FRONTHAUL_LEAF)
    gms = set(topology.gm_switches)
    if not gms:
        violations.append(Violation("GmMissing", "-", "no grandmaster in fabric"))
    for leaf in fronthaul_leaves:
        if leaf not in gms:
            violations.append(Violation("GmMissing", leaf, "fronthaul leaf without GM"))

    return violations


def _bfs_path(g: nx.Graph, src: str, dst: str) -> list[str] | None:
    """Deterministic shortest path; ties broken by lowest node id."""
    if src == dst:
        return [src]
    parent: dict[str, str] = {src: src}
    frontier = deque([src])
    while frontier:
        node = frontier.popleft()
        for nxt in sorted(g.neighbors(node)):
            if nxt not in parent:
                parent[nxt] = node
                if nxt == dst:
                    path = [dst]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    return path[::-1]
                frontier.append(nxt)
    return None


def sync_hops(topology: FabricTopology, path: tuple[str, ...]) -> int:
    """PTP hops along a path; timing-transparent aggregation nodes are skipped."""
    relevant = [
        n
        for n in path
        if topology.switches.get(n) is None
        or topology.switches[n].role is not SwitchRole.AGGREGATION_ROUTER
    ]
    return len(relevant) - 1


def build_ptp_tree(topology: FabricTopology) -> SyncTree:
    """Timing distribution from fronthaul-leaf grandmasters to RUs and DU servers.

    Every RU takes timing from its homing pair's lower-id GM; every server
    hosting a DU takes timing from the nearest GM (lowest id on ties), per
    the fabric-sourced synchronization layout.
    """
    g = topology.graph()
    paths: dict[str, tuple[str, ...]] = {}

    for ru, pair in sorted(topology.rus.items()):
        gm = min(pair)
        path = _bfs_path(g, gm, ru)
        if path is None:
            raise UnreachableEndpoint(f"RU {ru} cannot reach grandmaster {gm}")
        paths[ru] = tuple(path)

    # Every bundle in this model includes a DU.
    for server in sorted(topology.server_frontends):
        best: list[str] | None = None
        for gm in sorted(topology.gm_switches):
            path = _bfs_path(g, gm, server)
            if path is not None and (best is None or len(path) < len(best)):
                best = path
        if best is None:
            raise UnreachableEndpoint(f"server {server} cannot reach any grandmaster")
        paths[server] = tuple(best)

    max_hops = max(sync_hops(topology, p) for p in paths.values()) if paths else 0
    grandmaster = min(topology.gm_switches) if topology.gm_switches else ""
    return SyncTree(grandmaster=grandmaster, paths=paths, max_hops=max_hops)


def route_flows(
    topology: FabricTopology, flows: list[Flow]
) -> tuple[dict[str, float], list[CapacityViolation]]:
    """Fluid equal-cost routing: each flow splits evenly over all shortest paths."""
    g = topology.graph()
    loads: dict[str, float] = {link_id: 0.0 for link_id in topology.links}
    for f in flows:
        if f.src not in g or f.dst not in g:
            raise NoPath(f"flow {f.id}: unknown endpoint")
        try:
            paths = sorted(nx.all_shortest_paths(g, f.src, f.dst))
        except nx.NetworkXNoPath:
            raise NoPath(f"flow {f.id}: {f.src} and {f.dst} are disconnected")
        share = f.rate_gbps / len(paths)
        for path in paths:
            for a, b in zip(path, path[1:]):
                loads[g.edges[a, b]["link_id"]] += share
    violations = [
        CapacityViolation(link_id, load, topology.links[link_id].capacity_gbps)
        for link_id, load in sorted(loads.items())
        if load > topology.links[link_id].capacity_gbps + 1e-9
    ]
    for link_id, load in loads.items():
        topology.links[link_id].current_load_gbps = load
    return loads, violations


def fronthaul_rate(cell: CellConfig, fh_calib: FronthaulCalibration) -> float:
    """Fronthaul line rate for one cell: per-MHz-per-port constant scaling."""
    return fh_calib.gbps_per_mhz_per_port * cell.bandwidth_mhz * max(
        cell.tx_antennas, cell.rx_antennas
    )


def egress_target(server: Server) -> FlowKind:
    """Where a server's north-south traffic exits, by hosted NF bundle."""
    return {
        NfBundle.DU_ONLY: FlowKind.MIDHAUL,
        NfBundle.DU_CU: FlowKind.BACKHAUL,
        NfBundle.DU_CU_CN: FlowKind.N6,
    }[server.hosted_nf_bundle]
