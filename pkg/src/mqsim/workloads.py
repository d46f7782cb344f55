"""Task behavior programs: fixed-cost compute loops, paced message
exchanges, periodic samplers, and sleepers.  Each program is a generator of
workload steps driven by the scheduler."""

from __future__ import annotations


def busy_loop(iteration_cost: int):
    """CPU-bound loop counting completed fixed-cost iterations (the frame
    processing stand-in)."""
    def program(api):
        while True:
            yield api.compute(iteration_cost)
            api.task.count("iterations")
    return program


def sleeper():
    """Parks immediately and re-parks whenever woken (an idle shell)."""
    def program(api):
        while True:
            yield api.park()
    return program


def periodic_logger(period: int = 1_000_000, work: int = 500):
    """Wakes at each period boundary, does a little bookkeeping, sleeps."""
    def program(api):
        k = 1
        while True:
            yield api.sleep_until(k * period)
            yield api.compute(work)
            api.task.count("samples")
            k += 1
    return program


def io_cycle(compute_cost: int, io_latency: int, io_completion_work: int):
    """Compute, then block on an I/O request handled by the sandbox's I/O VCPU."""
    def program(api):
        while True:
            yield api.compute(compute_cost)
            yield api.block_io(io_latency, io_completion_work)
            api.task.count("io_cycles")
    return program


def pingpong_sender(channel, *, exchanges: int | None = None, busy_wait: int = 0,
                    initial_sleep: int = 0, pace: int | None = None,
                    wait: str = "busy"):
    """Request/response initiator.

    ``busy_wait`` burns budget before each send (moves the send's start
    inside the budget); ``pace`` aligns sends to fixed local-time boundaries;
    ``wait`` selects busy-polling or sleep-polling for the reply.  Round-trip
    times are recorded in the sender's local clock.
    """
    def program(api):
        prof = channel.profile
        if initial_sleep:
            yield api.sleep_for(initial_sleep)
        i = 0
        while exchanges is None or i < exchanges:
            if pace is not None:
                now = api.local_now()
                yield api.sleep_until((now // pace + 1) * pace)
            if busy_wait:
                yield api.compute(busy_wait)
            t0 = api.local_now()
            yield api.send(channel, prof.n_bytes)
            if wait == "busy":
                yield api.poll_wait(channel)
            else:
                while True:
                    yield api.compute(prof.poll_cost)
                    if api.try_poll(channel) is not None:
                        break
                    yield api.sleep_for(prof.poll_interval)
            rtt = api.local_now() - t0
            api.task.rtt_samples.append((i, t0, rtt))
            api.task.count("exchanges")
            i += 1
    return program


def pingpong_receiver(channel, *, initial_sleep: int = 0, wait: str = "busy"):
    """Responder: polls for a request, spends the service time, replies."""
    def program(api):
        prof = channel.profile
        if initial_sleep:
            yield api.sleep_for(initial_sleep)
        while True:
            if wait == "busy":
                yield api.poll_wait(channel)
            else:
                while True:
                    yield api.compute(prof.poll_cost)
                    if api.try_poll(channel) is not None:
                        break
                    yield api.sleep_for(prof.poll_interval)
            if prof.k:
                yield api.compute(prof.k)
            yield api.send(channel, prof.m_bytes)
            api.task.count("exchanges")
    return program
