"""Joint compute/communication orchestration over shared GPUs.

Three multi-tenancy policies:

* STATIC_SPLIT   - hard slices fixed at init (space sharing).
* TIME_SPLIT     - hard slices repartitioned on a wall-clock schedule
                   (time sharing), with a settling delay per repartition.
* DYNAMIC_BACKFILL - GPUs stay unpartitioned (one FREE slice); every epoch
                   the policy forecasts RAN demand per GPU and grants AI
                   the headroom below ``1 - forecast - safety_margin``,
                   reclaiming newest-first when the forecast rises.

Slot-level rule, shared by every policy: RAN demand is granted before AI
grants renew, so AI can never displace RAN inside a slot. A slot whose RAN
demand cannot be fully granted records a deadline miss.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import compute
from .compute import GpuDevice, GpuInstance, Server, TenantClass
from .errors import InvalidEpoch
from .workload import AiJob, JobState, SloClass

TOL = 1e-9
US = 1_000_000  # microseconds per second


class PolicyKind(Enum):
    STATIC_SPLIT = "static_split"
    TIME_SPLIT = "time_split"
    DYNAMIC_BACKFILL = "dynamic_backfill"


class ForecastKind(Enum):
    LAST_VALUE = "last_value"
    MAX_OVER_WINDOW = "max_over_window"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    ran_fraction: float = 0.0
    ai_fraction: float = 0.0
    split_gpus: tuple[str, ...] = ()  # empty: first GPU of each cell-hosting server
    schedule: tuple[tuple[float, float, float], ...] = ()  # (start_s, end_s, ran_fraction)
    epoch_s: float = 0.1
    safety_margin: float = 0.05
    forecast: ForecastKind = ForecastKind.MAX_OVER_WINDOW
    window_s: float = 0.2
    queue_bound: int | None = None
    resume_delay_s: float = 0.0
    settle_slots: int = 1

    def __post_init__(self):
        if self.kind is PolicyKind.STATIC_SPLIT:
            if self.ran_fraction < 0 or self.ai_fraction < 0:
                raise ValueError("split fractions must be >= 0")
            if self.ran_fraction + self.ai_fraction > 1.0 + TOL:
                raise ValueError("static split fractions exceed 1.0")
        elif self.kind is PolicyKind.TIME_SPLIT:
            if not self.schedule:
                raise ValueError("time split needs a schedule")
            prev_end = None
            for start, end, ran in self.schedule:
                if end <= start:
                    raise ValueError("schedule interval must have end > start")
                if not 0.0 <= ran <= 1.0:
                    raise ValueError("schedule ran_fraction must be in [0, 1]")
                if prev_end is not None and start < prev_end - TOL:
                    raise ValueError("schedule intervals overlap")
                prev_end = end
        else:
            if self.epoch_s <= 0:
                raise ValueError("epoch_s must be positive")
            if not 0.0 <= self.safety_margin < 1.0:
                raise ValueError("safety_margin must be in [0, 1)")
            if self.forecast is ForecastKind.MAX_OVER_WINDOW and self.window_s <= 0:
                raise ValueError("window_s must be positive")

    @property
    def is_dynamic(self) -> bool:
        return self.kind is PolicyKind.DYNAMIC_BACKFILL


class ActionKind(Enum):
    GRANT_AI = "GRANT_AI"
    RECLAIM_AI = "RECLAIM_AI"
    REPARTITION = "REPARTITION"
    NO_OP = "NO_OP"


@dataclass(frozen=True)
class ScaleAction:
    kind: ActionKind
    server_id: str = ""
    gpu_id: str = ""
    fraction: float = 0.0  # delta for grants/reclaims
    fractions: tuple[float, ...] = ()  # repartition layout
    classes: tuple[TenantClass, ...] = ()


@dataclass(frozen=True)
class DeadlineMiss:
    time_s: float
    server_id: str
    shortfall: float


@dataclass
class PlacementDecision:
    assignments: dict[str, tuple[str, str, str, float]] = field(default_factory=dict)
    rejected: list[tuple[str, str]] = field(default_factory=list)


class EngineHooks:
    """Callbacks the simulation engine installs; defaults are inert.

    ``set_rate`` must accrue the job's progress up to the current clock
    before changing its effective rate, and refresh any pending completion
    event. ``log_event`` records structured events for the output trace.
    ``on_repartition`` lets the engine schedule the settling-complete event.
    """

    def set_rate(self, job: AiJob, rate: float):
        job.service_rate = rate
        job.version += 1

    def log_event(self, kind: str, subject: str, detail: str):
        pass

    def on_repartition(self, gpu: "GpuState"):
        pass


@dataclass
class GpuState:
    """Mutable per-GPU scheduling state plus metrics accumulators."""

    device: GpuDevice
    server_id: str
    instances: list[GpuInstance]
    # slice-size caches, refreshed on (re)partition
    ran_cap: float = 0.0
    ai_cap: float = 0.0
    free_cap: float = 0.0
    # current slot levels
    ran_level: float = 0.0
    ran_in_free: float = 0.0
    ai_hard: float = 0.0  # granted inside AI slices
    ai_free: float = 0.0  # granted inside FREE slices
    ai_free_eff: float = 0.0  # after the slot-level cap
    throttled: bool = False
    jobs: list[AiJob] = field(default_factory=list)
    inst_granted: dict[str, float] = field(default_factory=dict)
    free_ids: set = field(default_factory=set)
    # repartition settling
    settling_until_us: int = -1
    generation: int = 0
    # forecast inputs (maintained by settle_slot under dynamic policies)
    demand_last: float = 0.0
    epoch_max: float = 0.0
    epoch_history: deque = field(default_factory=deque)
    ai_ceiling: float = 1.0
    # metrics accrual (microsecond clock)
    ran_integral: float = 0.0
    ai_integral: float = 0.0
    last_accrue_us: int = 0
    annotations: dict[str, int] = field(default_factory=dict)

    def refresh_caches(self):
        self.ran_cap = self.ai_cap = self.free_cap = 0.0
        self.inst_granted = {i.id: 0.0 for i in self.instances}
        self.free_ids = set()
        for inst in self.instances:
            f = inst.compute_fraction
            if inst.tenant_class is TenantClass.RAN:
                self.ran_cap += f
            elif inst.tenant_class is TenantClass.AI:
                self.ai_cap += f
            else:
                self.free_cap += f
                self.free_ids.add(inst.id)

    @property
    def ai_level(self) -> float:
        return self.ai_hard + self.ai_free_eff

    def accrue(self, now_us: int):
        dt = now_us - self.last_accrue_us
        if dt > 0:
            self.ran_integral += self.ran_level * dt
            self.ai_integral += (self.ai_hard + self.ai_free_eff) * dt
            self.last_accrue_us = now_us

    def annotate(self, kind: str, n: int = 1):
        self.annotations[kind] = self.annotations.get(kind, 0) + n


@dataclass
class ServerState:
    server: Server
    gpus: list[GpuState]
    current_demand: float = 0.0


@dataclass
class ClusterState:
    servers: list[ServerState]
    policy: Policy
    jobs: dict[str, AiJob] = field(default_factory=dict)
    queue: list[tuple[float, str]] = field(default_factory=list)  # (arrival, id)
    clock_us: int = 0
    slot_us: int = 500
    hooks: EngineHooks = field(default_factory=EngineHooks)
    # dynamic policy lets RAN spill into FREE capacity (hot-loop cache)
    soft_ran: bool = field(init=False, default=False)

    def __post_init__(self):
        self.soft_ran = self.policy.is_dynamic

    @property
    def clock(self) -> float:
        return self.clock_us / US

    def gpu_by_id(self, gpu_id: str) -> GpuState:
        for srv in self.servers:
            for gpu in srv.gpus:
                if gpu.device.id == gpu_id:
                    return gpu
        raise KeyError(gpu_id)

    def server_by_id(self, server_id: str) -> ServerState:
        for srv in self.servers:
            if srv.server.id == server_id:
                return srv
        raise KeyError(server_id)

    def enqueue(self, job: AiJob):
        bisect.insort(self.queue, (job.arrival_time, job.id))

    def dequeue(self, job: AiJob):
        self.queue.remove((job.arrival_time, job.id))


def build_cluster_state(
    servers: list[Server],
    policy: Policy,
    partitions: dict[str, tuple[list[float], list[TenantClass]]],
    hooks: EngineHooks | None = None,
) -> ClusterState:
    """Partition GPUs per the initial layout and assemble the cluster state.

    GPUs absent from ``partitions`` stay whole as a single FREE slice.
    """
    server_states = []
    for server in servers:
        gpu_states = []
        for gpu in server.gpus:
            if gpu.id in partitions:
                fracs, classes = partitions[gpu.id]
                instances = compute.partition_gpu(gpu, fracs, classes)
            else:
                instances = compute.partition_gpu(gpu, [1.0], [TenantClass.FREE])
            gs = GpuState(device=gpu, server_id=server.id, instances=instances)
            gs.refresh_caches()
            gpu_states.append(gs)
        server_states.append(ServerState(server=server, gpus=gpu_states))
    return ClusterState(
        servers=server_states, policy=policy, hooks=hooks or EngineHooks()
    )


def initial_partitions(
    policy: Policy, servers: list[Server], cell_hosts: set[str]
) -> dict[str, tuple[list[float], list[TenantClass]]]:
    """Initial GPU layouts implied by the policy.

    Static and time splits partition the designated GPUs (defaulting to the
    first GPU of every cell-hosting server); the dynamic policy leaves all
    GPUs whole.
    """
    if policy.is_dynamic:
        return {}
    targets = list(policy.split_gpus)
    if not targets:
        targets = [s.gpus[0].id for s in servers if s.id in cell_hosts]
    if policy.kind is PolicyKind.STATIC_SPLIT:
        ran, ai = policy.ran_fraction, policy.ai_fraction
    else:
        start, _end, ran = policy.schedule[0]
        ai = 1.0 - ran
    layout = _split_layout(ran, ai)
    return {gpu_id: layout for gpu_id in targets}


def _split_layout(ran: float, ai: float) -> tuple[list[float], list[TenantClass]]:
    fractions, classes = [], []
    if ran > TOL:
        fractions.append(ran)
        classes.append(TenantClass.RAN)
    if ai > TOL:
        fractions.append(ai)
        classes.append(TenantClass.AI)
    if not fractions:
        fractions, classes = [1.0], [TenantClass.FREE]
    return fractions, classes


# -- slot-level settlement ---------------------------------------------------


def settle_slot(
    state: ClusterState,
    t_s: float,
    demands: list[float],
    miss_sink: list,
    track_forecast: bool = False,
) -> None:
    """Grant RAN demand before AI renewal for one slot; record misses.

    Per server, demand fills GPUs in declaration order: hard RAN slices
    first, then (dynamic policy only) FREE capacity. AI grants inside FREE
    slices are capped at what RAN left over; hard AI slices are untouched
    by construction. Misses are appended to ``miss_sink`` as
    ``(t_s, server_id, shortfall)`` tuples when shortfall exceeds 1e-9.
    """
    soft = state.soft_ran
    now_us = state.clock_us
    for si, srv in enumerate(state.servers):
        demand = demands[si]
        srv.current_demand = demand
        rem = demand
        for gpu in srv.gpus:
            if gpu.settling_until_us >= now_us:
                # repartition settling: slices accept no allocations
                if gpu.ran_level != 0.0:
                    gpu.accrue(now_us)
                    gpu.ran_level = 0.0
                    gpu.ran_in_free = 0.0
                continue
            cap = gpu.ran_cap + gpu.free_cap if soft else gpu.ran_cap
            if rem < cap:
                take = rem
                rem = 0.0
            else:
                take = cap
                rem -= cap
            if track_forecast:
                # what this GPU was asked to serve, for the forecaster
                asked = take + (rem if gpu is srv.gpus[-1] else 0.0)
                gpu.demand_last = asked
                if asked > gpu.epoch_max:
                    gpu.epoch_max = asked
            in_free = take - gpu.ran_cap
            if in_free < 0.0:
                in_free = 0.0
            changed = take != gpu.ran_level
            if changed:
                gpu.accrue(now_us)
                gpu.ran_level = take
                gpu.ran_in_free = in_free
            if gpu.ai_free > 0.0 or gpu.throttled:
                allowed = gpu.free_cap - in_free
                if gpu.ai_free > allowed + TOL:
                    _apply_throttle(state, gpu, allowed)
                elif gpu.throttled:
                    _apply_throttle(state, gpu, allowed)
        if rem > TOL:
            miss_sink.append((t_s, srv.server.id, rem))
            srv.gpus[0].annotate("miss")


def _apply_throttle(state: ClusterState, gpu: GpuState, allowed: float):
    """Cap FREE-slice AI rates at ``allowed``, trimming newest jobs first."""
    if allowed < 0.0:
        allowed = 0.0
    free_jobs = [j for j in gpu.jobs if j.instance_id in gpu.free_ids]
    free_jobs.sort(key=lambda j: (j.arrival_time, j.id))  # oldest keeps its rate
    remaining = allowed
    eff_total = 0.0
    for job in free_jobs:
        rate = job.granted_fraction if job.granted_fraction < remaining else remaining
        remaining -= rate
        eff_total += rate
        if rate != job.service_rate:
            state.hooks.set_rate(job, rate)
    gpu.accrue(state.clock_us)
    gpu.ai_free_eff = eff_total
    gpu.throttled = eff_total < gpu.ai_free - TOL


def enforce_ran_priority(state: ClusterState) -> list[DeadlineMiss]:
    """Settle the current slot from ``state`` and return its deadline misses."""
    sink: list = []
    demands = [srv.current_demand for srv in state.servers]
    settle_slot(state, state.clock, demands, sink, track_forecast=state.soft_ran)
    return [DeadlineMiss(t, sid, sf) for t, sid, sf in sink]


# -- placement ---------------------------------------------------------------


def _eligible_instances(state: ClusterState, gpu: GpuState) -> list[GpuInstance]:
    classes = (TenantClass.AI, TenantClass.FREE) if state.policy.is_dynamic else (
        TenantClass.AI,
    )
    return [i for i in gpu.instances if i.tenant_class in classes]


def _instance_free(gpu: GpuState, inst: GpuInstance) -> float:
    return inst.compute_fraction - gpu.inst_granted.get(inst.id, 0.0)


def _gpu_budget(state: ClusterState, gpu: GpuState) -> float:
    """Policy-level AI budget left on a GPU (physical capacity aside)."""
    if not state.policy.is_dynamic:
        return math.inf
    return gpu.ai_ceiling - (gpu.ai_hard + gpu.ai_free)


def plan_placement(
    jobs: list[AiJob], state: ClusterState, policy: Policy
) -> PlacementDecision:
    """First-fit placement of whole job demands.

    INTERACTIVE jobs go first, in arrival order, and only onto instances
    whose grantable fraction meets their latency bound. BATCH jobs follow,
    first-fit-decreasing by demand fraction. Candidate order: servers by
    id, then GPUs by free capacity descending (ties by id), then instances
    by free capacity descending (ties by id). Jobs that fit nowhere stay
    queued; rejection happens only at enqueue time via the queue bound.
    """
    decision = PlacementDecision()
    interactive = [j for j in jobs if j.slo_class is SloClass.INTERACTIVE]
    interactive.sort(key=lambda j: (j.arrival_time, j.id))
    batch = [j for j in jobs if j.slo_class is SloClass.BATCH]
    batch.sort(key=lambda j: (-j.demand_fraction, j.id))

    budgets: dict[str, float] = {}
    frees: dict[str, float] = {}
    now_us = state.clock_us

    def candidates():
        for srv in sorted(state.servers, key=lambda s: s.server.id):
            gpus = []
            for gpu in srv.gpus:
                if gpu.settling_until_us > now_us:
                    continue
                total_free = sum(
                    frees.setdefault(i.id, _instance_free(gpu, i))
                    for i in _eligible_instances(state, gpu)
                )
                gpus.append((-total_free, gpu.device.id, srv, gpu))
            for _, _, srv_, gpu in sorted(gpus, key=lambda x: (x[0], x[1])):
                insts = sorted(
                    _eligible_instances(state, gpu),
                    key=lambda i: (-frees.setdefault(i.id, _instance_free(gpu, i)), i.id),
                )
                for inst in insts:
                    yield srv_, gpu, inst

    def try_place(job: AiJob) -> bool:
        if (
            job.slo_class is SloClass.INTERACTIVE
            and job.demand_fraction + TOL < job.required_rate
        ):
            return False  # its demand can never meet the latency bound
        for srv, gpu, inst in candidates():
            free = frees.setdefault(inst.id, _instance_free(gpu, inst))
            budget = budgets.setdefault(gpu.device.id, _gpu_budget(state, gpu))
            grantable = free if free < budget else budget
            if grantable + TOL < job.demand_fraction:
                continue
            decision.assignments[job.id] = (
                srv.server.id,
                gpu.device.id,
                inst.id,
                job.demand_fraction,
            )
            frees[inst.id] = free - job.demand_fraction
            budgets[gpu.device.id] = budget - job.demand_fraction
            return True
        return False

    for job in interactive + batch:
        if job.state not in (JobState.QUEUED, JobState.PREEMPTED):
            continue
        if job.eligible_at_s > state.clock + TOL:
            continue
        try_place(job)
    return decision


# -- policy epochs -----------------------------------------------------------


def _forecast(policy: Policy, gpu: GpuState) -> float:
    if policy.forecast is ForecastKind.LAST_VALUE:
        return gpu.demand_last
    f = gpu.epoch_max
    for past in gpu.epoch_history:  # length kept at window-1 by _roll_forecast
        if past > f:
            f = past
    return f


def _roll_forecast(policy: Policy, gpu: GpuState):
    window = max(1, round(policy.window_s / policy.epoch_s))
    gpu.epoch_history.append(gpu.epoch_max)
    while len(gpu.epoch_history) > window - 1:
        gpu.epoch_history.popleft()
    gpu.epoch_max = gpu.demand_last


def _queued_demand(state: ClusterState) -> float:
    total = 0.0
    for _, jid in state.queue:
        job = state.jobs[jid]
        if job.eligible_at_s <= state.clock + TOL:
            total += job.demand_fraction
    return total


def _undergrant(gpu: GpuState) -> float:
    return sum(
        j.demand_fraction - j.granted_fraction
        for j in gpu.jobs
        if j.granted_fraction + TOL < j.demand_fraction
    )


def policy_epoch(state: ClusterState, policy: Policy, t: float) -> list[ScaleAction]:
    """Compute scale actions due at time ``t``.

    STATIC_SPLIT never changes anything. TIME_SPLIT emits repartitions at
    schedule boundaries. DYNAMIC_BACKFILL recomputes each GPU's AI ceiling
    from the RAN forecast and emits grants/reclaims toward it.
    """
    actions: list[ScaleAction] = []
    if policy.kind is PolicyKind.STATIC_SPLIT:
        return [ScaleAction(ActionKind.NO_OP)]

    if policy.kind is PolicyKind.TIME_SPLIT:
        interval = next(
            (iv for iv in policy.schedule if abs(iv[0] - t) <= 1e-9), None
        )
        if interval is None:
            raise InvalidEpoch(f"t={t} is not a schedule boundary")
        ran = interval[2]
        targets = set(policy.split_gpus) or {
            srv.gpus[0].device.id for srv in state.servers if srv.gpus
        }
        for srv in state.servers:
            for gpu in srv.gpus:
                if gpu.device.id not in targets:
                    continue
                # snap the layout to the device grid so identical schedules
                # compare equal against the live instances
                total = gpu.device.total_units
                snapped = round(ran * total) / total
                fractions, classes = _split_layout(snapped, 1.0 - snapped)
                fractions = [round(f * total) / total for f in fractions]
                current = tuple(
                    (i.compute_fraction, i.tenant_class) for i in gpu.instances
                )
                if current != tuple(zip(fractions, classes)):
                    actions.append(
                        ScaleAction(
                            ActionKind.REPARTITION,
                            server_id=srv.server.id,
                            gpu_id=gpu.device.id,
                            fractions=tuple(fractions),
                            classes=tuple(classes),
                        )
                    )
        return actions or [ScaleAction(ActionKind.NO_OP)]

    # DYNAMIC_BACKFILL
    ratio = t / policy.epoch_s
    if abs(ratio - round(ratio)) > 1e-6:
        raise InvalidEpoch(f"t={t} is not on the {policy.epoch_s}s epoch grid")
    queued = _queued_demand(state)
    for srv in state.servers:
        for gpu in srv.gpus:
            forecast = _forecast(policy, gpu)
            _roll_forecast(policy, gpu)
            ceiling = 1.0 - forecast - policy.safety_margin
            if ceiling < 0.0:
                ceiling = 0.0
            gpu.ai_ceiling = ceiling
            current = gpu.ai_hard + gpu.ai_free
            if current > ceiling + TOL:
                actions.append(
                    ScaleAction(
                        ActionKind.RECLAIM_AI,
                        server_id=srv.server.id,
                        gpu_id=gpu.device.id,
                        fraction=current - ceiling,
                    )
                )
            else:
                headroom = ceiling - current
                wanted = queued + _undergrant(gpu)
                min_grant = gpu.device.partition_granularity
                if headroom + TOL >= min_grant and wanted > TOL:
                    actions.append(
                        ScaleAction(
                            ActionKind.GRANT_AI,
                            server_id=srv.server.id,
                            gpu_id=gpu.device.id,
                            fraction=headroom,
                        )
                    )
    return actions or [ScaleAction(ActionKind.NO_OP)]


# -- applying actions ----------------------------------------------------------


def _job_sort_newest(jobs: list[AiJob]) -> list[AiJob]:
    return sorted(jobs, key=lambda j: (j.arrival_time, j.id), reverse=True)


def _release_grant(state: ClusterState, gpu: GpuState, job: AiJob, amount: float):
    gpu.accrue(state.clock_us)  # integrate at the old level first
    gpu.inst_granted[job.instance_id] -= amount
    if job.instance_id in gpu.free_ids:
        gpu.ai_free -= amount
    else:
        gpu.ai_hard -= amount
    job.granted_fraction -= amount


def preempt_job(state: ClusterState, gpu: GpuState, job: AiJob):
    """Suspend a running job, preserving its remaining work."""
    state.hooks.set_rate(job, 0.0)
    _release_grant(state, gpu, job, job.granted_fraction)
    gpu.jobs.remove(job)
    job.state = JobState.PREEMPTED
    job.preempt_count += 1
    job.eligible_at_s = state.clock + state.policy.resume_delay_s
    job.server_id = job.gpu_id = job.instance_id = None
    state.enqueue(job)
    gpu.annotate("preempt")


def _reclaim(state: ClusterState, action: ScaleAction):
    gpu = state.gpu_by_id(action.gpu_id)
    delta = action.fraction
    for job in _job_sort_newest(list(gpu.jobs)):
        if delta <= TOL:
            break
        if job.granted_fraction <= delta + TOL:
            delta -= job.granted_fraction
            state.hooks.log_event(
                "preempt", gpu.device.id, f"job={job.id} fraction={job.granted_fraction:.6f}"
            )
            preempt_job(state, gpu, job)
        else:
            _release_grant(state, gpu, job, delta)
            state.hooks.set_rate(job, job.granted_fraction)
            state.hooks.log_event(
                "trim", gpu.device.id, f"job={job.id} fraction={delta:.6f}"
            )
            gpu.annotate("trim")
            delta = 0.0
    _refresh_effective(state, gpu)


def start_job(
    state: ClusterState,
    job: AiJob,
    server_id: str,
    gpu: GpuState,
    inst_id: str,
    grant: float,
):
    """Move a queued/preempted job into RUNNING with the given grant."""
    if job.state in (JobState.QUEUED, JobState.PREEMPTED):
        state.dequeue(job)
    job.state = JobState.RUNNING
    job.server_id = server_id
    job.gpu_id = gpu.device.id
    job.instance_id = inst_id
    job.granted_fraction = grant
    if job.first_start_time is None:
        job.first_start_time = state.clock
    gpu.accrue(state.clock_us)
    gpu.jobs.append(job)
    gpu.inst_granted[inst_id] = gpu.inst_granted.get(inst_id, 0.0) + grant
    if inst_id in gpu.free_ids:
        gpu.ai_free += grant
    else:
        gpu.ai_hard += grant
    state.hooks.set_rate(job, grant)
    _refresh_effective(state, gpu)
    state.hooks.log_event(
        "place", gpu.device.id, f"job={job.id} instance={inst_id} fraction={grant:.6f}"
    )


def _refresh_effective(state: ClusterState, gpu: GpuState):
    """Re-apply the slot-level FREE-slice cap after grant changes."""
    allowed = gpu.free_cap - gpu.ran_in_free
    if gpu.ai_free > allowed + TOL or gpu.throttled:
        _apply_throttle(state, gpu, allowed)
    else:
        gpu.accrue(state.clock_us)
        gpu.ai_free_eff = gpu.ai_free


def _top_up(state: ClusterState, gpu: GpuState, budget: float) -> float:
    """Raise under-granted running jobs toward their demand, oldest first."""
    gpu.accrue(state.clock_us)
    for job in sorted(gpu.jobs, key=lambda j: (j.arrival_time, j.id)):
        if budget <= TOL:
            break
        gap = job.demand_fraction - job.granted_fraction
        if gap <= TOL:
            continue
        inst_free = 0.0
        for inst in gpu.instances:
            if inst.id == job.instance_id:
                inst_free = _instance_free(gpu, inst)
        extra = min(gap, budget, inst_free)
        if extra <= TOL:
            continue
        gpu.inst_granted[job.instance_id] += extra
        if job.instance_id in gpu.free_ids:
            gpu.ai_free += extra
        else:
            gpu.ai_hard += extra
        job.granted_fraction += extra
        state.hooks.set_rate(job, job.granted_fraction)
        state.hooks.log_event(
            "grant", gpu.device.id, f"job={job.id} fraction={extra:.6f}"
        )
        budget -= extra
    _refresh_effective(state, gpu)
    return budget


def backfill_queue(state: ClusterState, gpu: GpuState, budget: float) -> float:
    """Grant queued BATCH jobs partial fractions from a GPU's budget.

    Partial grants are the backfill mechanism: batch work runs at whatever
    rate it is given. INTERACTIVE jobs are never partially granted; they
    only enter via plan_placement with their full demand.
    """
    if gpu.settling_until_us > state.clock_us:
        return budget
    server_id = gpu.server_id
    min_grant = gpu.device.partition_granularity
    for arrival, jid in list(state.queue):
        if budget < min_grant - TOL:
            break
        job = state.jobs[jid]
        if job.slo_class is not SloClass.BATCH:
            continue
        if job.eligible_at_s > state.clock + TOL:
            continue
        for inst in sorted(
            _eligible_instances(state, gpu),
            key=lambda i: (-_instance_free(gpu, i), i.id),
        ):
            free = _instance_free(gpu, inst)
            grant = min(job.demand_fraction, budget, free)
            if grant + TOL < min_grant:
                continue
            start_job(state, job, server_id, gpu, inst.id, grant)
            budget -= grant
            break
    return budget


def apply_actions(state: ClusterState, actions: list[ScaleAction]) -> ClusterState:
    """Apply policy actions in order; mutates and returns ``state``."""
    for action in actions:
        if action.kind is ActionKind.NO_OP:
            continue
        if action.kind is ActionKind.RECLAIM_AI:
            _reclaim(state, action)
        elif action.kind is ActionKind.GRANT_AI:
            gpu = state.gpu_by_id(action.gpu_id)
            left = _top_up(state, gpu, action.fraction)
            backfill_queue(state, gpu, left)
        elif action.kind is ActionKind.REPARTITION:
            _repartition_gpu(state, action)
    return state


def _repartition_gpu(state: ClusterState, action: ScaleAction):
    gpu = state.gpu_by_id(action.gpu_id)
    for job in list(gpu.jobs):  # drain AI before resizing
        state.hooks.log_event(
            "preempt", gpu.device.id, f"job={job.id} fraction={job.granted_fraction:.6f}"
        )
        preempt_job(state, gpu, job)
    gpu.accrue(state.clock_us)
    gpu.generation += 1
    prefix = f"{gpu.device.id}.g{gpu.generation}"
    gpu.instances = compute.repartition(
        gpu.device,
        gpu.instances,
        list(action.fractions),
        list(action.classes),
        id_prefix=prefix,
    )
    gpu.refresh_caches()
    # the boundary slot finishes on the old layout (ran_level persists);
    # the next settle_slots slot settlements find the GPU settling
    gpu.ai_free_eff = 0.0
    gpu.throttled = False
    gpu.settling_until_us = state.clock_us + state.policy.settle_slots * state.slot_us
    gpu.annotate("repartition")
    state.hooks.log_event(
        "repartition",
        gpu.device.id,
        "layout=" + ",".join(
            f"{f:.6f}:{c.value}" for f, c in zip(action.fractions, action.classes)
        ),
    )
    state.hooks.on_repartition(gpu)
