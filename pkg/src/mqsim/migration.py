"""Address-space migration between sandboxes.

The protocol: the source samples its timestamp counter and sends a request
IPI; the destination samples its own counter on receipt and wakes its
migration thread, which runs admission control and then copies the thread
context records and page-directory entries inside its monitor.  Budget is
checked only at preemption points (after each context record, between
page-directory entries, and right before binding); within a period the
thread pays one VM-Exit/VM-Entry pair.  On completion the pending
replenishment and wakeup times of the migrated VCPU are shifted by the
clock-skew adjustment and the source reclaims the address space on a
completion IPI.  An alternative mode runs the same copy work inside the
destination's IPI handler with interrupts disabled, delaying every VCPU
there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mqsim.bounds.formulas import clock_adjustment, migration_bound
from mqsim.errors import BlockedOnIo, DestinationBusy, NotEligible, ValidationError
from mqsim.sched import Compute, MonitorChunk, Park

MAX_SPACE_BYTES = 4 << 20
PAGE_BYTES = 4096


@dataclass
class AddressSpace:
    """Migratable unit: page-directory entries, pages, and thread records."""
    id: str
    total_pages: int = 0
    pde_count: int = 1024
    pages_per_pde: int = 1024
    task_controls: list[str] = field(default_factory=list)
    tss_limit: int = 8

    def __post_init__(self):
        if not (0 < self.pde_count <= 1024):
            raise ValidationError(f"{self.id}: pde_count must be in 1..1024")
        if self.total_pages * PAGE_BYTES > MAX_SPACE_BYTES:
            raise ValidationError(f"{self.id}: address space exceeds 4 MB")
        if len(self.task_controls) > self.tss_limit:
            raise ValidationError(f"{self.id}: more thread records than tss_limit")

    @property
    def size_bytes(self) -> int:
        return self.total_pages * PAGE_BYTES

    def pages_in_pde(self, i: int) -> int:
        done = i * self.pages_per_pde
        return max(0, min(self.pages_per_pde, self.total_pages - done))


@dataclass
class MigrationJob:
    id: int
    source: str
    destination: str
    space_id: str
    vcpu: object
    mode: str
    pde_extra_delay: int
    engine: object
    state: str = "requested"
    tsc_s: int = 0
    tsc_d: int = 0
    e_s: int | None = None
    delta_s_worst: int = 0
    delta_s_actual: int = 0           # copy work performed (cached costs)
    criterion_ok: bool | None = None
    bound: object = None
    chunks: list = field(default_factory=list)
    cursor: int = 0
    needs_resume_overhead: bool = True
    overhead_charged: int = 0
    points: int = 0
    delta_adj: int = 0
    admission: object = None
    completed_at: int | None = None
    retries: int = 0
    adjusted_events: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "source": self.source, "destination": self.destination,
            "space": self.space_id, "vcpu": self.vcpu.id, "mode": self.mode,
            "state": self.state, "E_s_us": self.e_s,
            "delta_s_worst_us": self.delta_s_worst,
            "delta_s_actual_us": self.delta_s_actual,
            "C_m_us": self.engine.thread_vcpu(self.destination).capacity
            if self.engine.has_thread(self.destination) else None,
            "T_m_us": self.engine.thread_vcpu(self.destination).period
            if self.engine.has_thread(self.destination) else None,
            "criterion_ok": self.criterion_ok,
            "delta_adj_us": self.delta_adj,
        }


class EngineDriver:
    """Feeds the migration thread its steps straight from the engine."""

    def __init__(self, engine):
        self.engine = engine

    def next(self, task, result):
        return self.engine.next_step(task)


class MigrationEngine:
    """Coordinates migration jobs across all sandboxes of a simulator."""

    def __init__(self, sim):
        self.sim = sim
        self.threads: dict[str, tuple] = {}   # sandbox -> (vcpu, task)
        self.jobs: dict[str, MigrationJob] = {}  # in-flight, by destination
        self.history: list[MigrationJob] = []
        self._next_job = 1
        sim.migration_engine = self

    # -- setup ----------------------------------------------------------------

    def create_migration_thread(self, sandbox, vcpu):
        task = sandbox.add_task(f"migthread.{sandbox.id}", vcpu,
                                driver=EngineDriver(self), start_ready=False)
        self.threads[sandbox.id] = (vcpu, task)
        return task

    def has_thread(self, sandbox_id: str) -> bool:
        return sandbox_id in self.threads

    def thread_vcpu(self, sandbox_id: str):
        return self.threads[sandbox_id][0]

    # -- cost estimation --------------------------------------------------------

    def estimate_delta_s(self, space: AddressSpace, cached: bool = False,
                         pde_extra_delay: int = 0) -> int:
        """Copy cost of an address space: pages, thread records, and the full
        page-directory walk.  The worst case uses the cache-disabled per-page
        cost established at boot."""
        c = self.sim.cost
        page = c.page_copy_cache if cached else c.page_copy_nocache
        return (space.total_pages * page
                + len(space.task_controls) * c.tss_copy_cost
                + space.pde_count * (c.pde_walk_cost + pde_extra_delay))

    def chunk_plan(self, space: AddressSpace, pde_extra_delay: int) -> list:
        """Copy chunks separated by preemption points, at cached (actual)
        costs: one chunk per thread record, one per page-directory entry."""
        c = self.sim.cost
        plan = [(f"tss:{tid}", c.tss_copy_cost) for tid in space.task_controls]
        plan.extend(
            (f"pde:{i}", c.pde_walk_cost + pde_extra_delay
             + space.pages_in_pde(i) * c.page_copy_cache)
            for i in range(space.pde_count))
        return plan

    # -- the protocol -----------------------------------------------------------

    def request_migration(self, source: str, destination: str, space_id: str,
                          mode: str = "thread", pde_extra_delay: int = 0,
                          _retry_of: MigrationJob | None = None) -> MigrationJob:
        src = self.sim.sandbox(source)
        dst = self.sim.sandbox(destination)
        space = src.spaces.get(space_id)
        if space is None:
            raise ValidationError(f"no address space {space_id} in {source}")
        tasks = [src.tasks[t] for t in space.task_controls]
        vcpus = {t.vcpu for t in tasks}
        if len(vcpus) != 1:
            raise ValidationError(f"{space_id}: tasks span multiple VCPUs")
        vcpu = vcpus.pop()

        if any(t.io_blocked for t in tasks):
            raise BlockedOnIo(space_id)
        if vcpu.eligible():
            raise NotEligible(f"{vcpu.id} is runnable with remaining budget")
        if destination in self.jobs:
            raise DestinationBusy(destination)
        if mode == "thread" and destination not in self.threads:
            raise ValidationError(f"{destination} has no migration thread")

        pending = vcpu.pending_event_locals()
        e_s = min(pending) - src.now_local() if pending else None

        job = MigrationJob(self._next_job, source, destination, space_id, vcpu,
                           mode, pde_extra_delay, self)
        job.e_s = e_s
        self._next_job += 1
        if _retry_of is not None:
            job.retries = _retry_of.retries + 1
        job.delta_s_worst = self.estimate_delta_s(space, cached=False,
                                                  pde_extra_delay=pde_extra_delay)
        job.chunks = self.chunk_plan(space, pde_extra_delay)
        if self.has_thread(destination):
            mv = self.thread_vcpu(destination)
            job.bound = migration_bound(job.delta_s_worst, mv.capacity, mv.period)
            job.criterion_ok = e_s is not None and e_s >= job.bound
        self.jobs[destination] = job
        self.history.append(job)

        # detach from the source scheduler; pending events are held until
        # completion or rejection
        vcpu.migrating = True
        for entry in vcpu.repl:
            if entry.event_id is not None:
                self.sim.cancel_event(entry.event_id)
                entry.event_id = None
        for t in vcpu.tasks:
            for w in t.pending_wakeups:
                if w.event_id is not None:
                    self.sim.cancel_event(w.event_id)
                    w.event_id = None

        self.sim.trace.add(self.sim.now, source, "mig_request", space_id,
                           f"dst={destination};mode={mode};e_s={e_s};"
                           f"d_worst={job.delta_s_worst}")
        # the source samples its counter, then sends the request once the
        # read's own latency has elapsed
        job.tsc_s = self.sim.read_tsc(source)
        self.sim.post_event(
            self.sim.now + self.sim.cost.rdtsc_cost, "mig-ipi-send", source, job,
            lambda ev: self.sim.send_ipi(source, destination, job,
                                         handler=self._on_request_ipi))
        src.touch()
        return job

    def _on_request_ipi(self, dst, src_id: str, job: MigrationJob):
        # the destination's own read finishes one read-latency after delivery
        self.sim.post_event(self.sim.now + self.sim.cost.rdtsc_cost,
                            "mig-tsc-read", dst.id, job,
                            lambda ev: self._after_tsc_read(dst, job))

    def _after_tsc_read(self, dst, job: MigrationJob):
        job.tsc_d = self.sim.read_tsc(dst.id)
        if job.mode == "ipi-handler":
            job.admission = dst.admit(job.vcpu.capacity, job.vcpu.period)
            if not job.admission.accepted:
                self._reject(job)
                return
            job.state = "copying"
            total = sum(work for _, work in job.chunks)
            job.delta_s_actual = total
            self.sim.trace.add(self.sim.now, dst.id, "mig_admit", job.space_id,
                               f"mode=ipi-handler;block_us={total}")
            dst.kernel_block(total)
            dst._unblock_hook = lambda: self.finalize(job)
            return
        job.state = "at-destination"
        _, task = self.threads[dst.id]
        task.make_ready()
        dst.touch()

    # -- migration-thread step machine ------------------------------------------

    def next_step(self, task):
        job = self.jobs.get(task.sandbox.id)
        if job is None:
            return Park()
        if job.state == "at-destination":
            job.state = "admitting"
            return Compute(self.sim.cost.admission_cost)
        if job.state == "admitting":
            job.admission = task.sandbox.admit(job.vcpu.capacity, job.vcpu.period)
            if not job.admission.accepted:
                self._reject(job)
                return Park()
            job.state = "copying-tss"
            self.sim.trace.add(self.sim.now, task.sandbox.id, "mig_admit",
                               job.space_id,
                               f"util_after={float(job.admission.utilization_after):.3f}")
            return self._chunk_step(job, task)
        if job.state in ("copying-tss", "copying-pde"):
            return self._chunk_step(job, task)
        return Park()

    def _chunk_step(self, job: MigrationJob, task) -> MonitorChunk:
        label, work = job.chunks[job.cursor]
        job.state = "copying-pde" if label.startswith("pde:") else "copying-tss"
        extra = self.sim.cost.resume_overhead if job.needs_resume_overhead else 0
        job.needs_resume_overhead = False
        job.overhead_charged += extra
        task.vcpu.min_dispatch_budget = 1
        return MonitorChunk(job, label, work + extra)

    def on_chunk_done(self, task, step: MonitorChunk):
        """Preemption point: account the chunk, deliver queued IPIs, and
        either continue, yield for budget, or finalize."""
        job = step.job
        sb = task.sandbox
        v = task.vcpu
        label, work = job.chunks[job.cursor]
        job.delta_s_actual += work
        job.cursor += 1
        job.points += 1
        v.consume(self.sim.cost.preemption_point_cost, allow_overrun=True)
        sb.drain_ipis()
        self.sim.trace.add(self.sim.now, sb.id, "mig_chunk", job.space_id,
                           f"{label};budget={v.budget}")
        if job.cursor >= len(job.chunks):
            job.state = "finalizing"
            self.finalize(job)
            return
        need = job.chunks[job.cursor][1] + self.sim.cost.preemption_point_cost
        if v.budget < need:
            job.needs_resume_overhead = True
            v.min_dispatch_budget = need + self.sim.cost.resume_overhead

    # -- outcomes -----------------------------------------------------------------

    def _reject(self, job: MigrationJob):
        job.state = "rejected"
        dst = job.destination
        detail = ""
        if job.admission is not None:
            detail = f"util_after={float(job.admission.utilization_after):.3f}"
        self.sim.trace.add(self.sim.now, dst, "mig_reject", job.space_id, detail)
        del self.jobs[dst]
        self.sim.send_ipi(dst, job.source, job, handler=self._on_reject_ipi)

    def _on_reject_ipi(self, src, dst_id: str, job: MigrationJob):
        """The source puts the address space and its VCPU back into the local
        scheduler and retries the destination one period later."""
        v = job.vcpu
        v.migrating = False
        for entry in v.repl:
            if entry.event_id is None:
                v._post_repl_event(entry)
        for t in v.tasks:
            for w in list(t.pending_wakeups):
                if w.event_id is None:
                    t.pending_wakeups.remove(w)
                    src.schedule_wake(t, w.t_local)
        self.sim.trace.add(self.sim.now, src.id, "mig_requeue", job.space_id, "")
        if job.retries == 0:
            self.sim.post_event(self.sim.now + v.period, "mig-retry", src.id, job,
                                lambda ev: self._retry(ev.payload))
        src.touch()

    def _retry(self, job: MigrationJob):
        try:
            self.request_migration(job.source, job.destination, job.space_id,
                                   job.mode, job.pde_extra_delay, _retry_of=job)
        except (NotEligible, BlockedOnIo, DestinationBusy) as exc:
            self.sim.trace.add(self.sim.now, job.source, "mig_retry_abandoned",
                               job.space_id, type(exc).__name__)

    def finalize(self, job: MigrationJob):
        """Bind the migrated address space at the destination: shift its
        pending event times by the clock-skew adjustment, enqueue the VCPU,
        and signal the source to reclaim memory."""
        sim = self.sim
        src = sim.sandbox(job.source)
        dst = sim.sandbox(job.destination)
        v = job.vcpu

        job.delta_adj = clock_adjustment(job.tsc_d, job.tsc_s,
                                         sim.cost.rdtsc_cost, sim.cost.ipi_cost)
        src.drop_vcpu(v)
        dst.adopt_vcpu(v)
        v.migrating = False
        v.min_dispatch_budget = 1
        completion_local = dst.now_local()
        job.adjusted_events = []
        for entry in v.repl:
            entry.t_local = max(entry.t_local + job.delta_adj, completion_local)
            v._post_repl_event(entry)
            job.adjusted_events.append(("replenish", entry.t_local))
        for t in v.tasks:
            for w in t.pending_wakeups:
                w.t_local = max(w.t_local + job.delta_adj, completion_local)
                w.event_id = sim.post_event(
                    max(sim.now, dst.clock.to_true(w.t_local)), "task-wakeup",
                    dst.id, t, lambda ev, t=t, w=w: dst._on_wakeup(t, w))
                job.adjusted_events.append(("wakeup", w.t_local))
        space = src.spaces.pop(job.space_id)
        dst.spaces[job.space_id] = space

        job.state = "completed"
        job.completed_at = sim.now
        del self.jobs[dst.id]
        sim.trace.add(sim.now, dst.id, "mig_finalize", job.space_id,
                      f"vcpu={v.id};delta_adj={job.delta_adj};"
                      f"d_actual={job.delta_s_actual}")
        sim.send_ipi(dst.id, src.id, job, handler=self._on_completion_ipi)
        dst.touch()
        src.touch()

    def _on_completion_ipi(self, src, dst_id: str, job: MigrationJob):
        self.sim.trace.add(self.sim.now, src.id, "mig_reclaim", job.space_id, "")
        src.touch()
